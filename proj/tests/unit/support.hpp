#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "mptc/rng.hpp"
#include "mptc/tensor.hpp"

namespace mptc::testing {

inline Tensor3 random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    SplitMix64 rng(seed);
    Tensor3 t(s);
    for (double& v : t.data()) v = lo + (hi - lo) * rng.uniform();
    return t;
}

inline double max_abs_diff(const Tensor3& a, const Tensor3& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline std::filesystem::path data_path(const std::string& name) {
    return std::filesystem::path(MPTC_TEST_DATA_DIR) / name;
}

/// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
    TempDir() {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("mptc-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    [[nodiscard]] const std::filesystem::path& path() const { return path_; }
    [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
    std::filesystem::path path_;
};

}  // namespace mptc::testing
