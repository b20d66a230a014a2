#pragma once

#include <cstdint>
#include <vector>

#include "mptc/tensor.hpp"

namespace mptc {

/// Binary sampling set Omega over an H x W x C grid, with the metadata it
/// was generated from.
class MaskTensor {
 public:
    MaskTensor() = default;
    MaskTensor(Shape shape, std::vector<std::uint8_t> bits, double sampling_rate = 1.0,
               std::uint64_t seed = 0);

    /// Everything observed.
    static MaskTensor full(Shape shape);
    /// Builds a mask from a 0/1 tensor (any nonzero entry counts as observed).
    static MaskTensor from_tensor(const Tensor3& t);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] bool observed(std::size_t i) const { return bits_[i] != 0; }
    [[nodiscard]] std::size_t count() const;
    [[nodiscard]] double sampling_rate() const { return sampling_rate_; }
    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] const std::vector<std::uint8_t>& bits() const { return bits_; }

    /// FNV-1a over the bit pattern; identifies a mask realization in reports.
    [[nodiscard]] std::uint64_t checksum() const;

    [[nodiscard]] Tensor3 as_tensor() const;

    friend bool operator==(const MaskTensor& a, const MaskTensor& b) {
        return a.shape_ == b.shape_ && a.bits_ == b.bits_;
    }

 private:
    Shape shape_{};
    std::vector<std::uint8_t> bits_;
    double sampling_rate_ = 1.0;
    std::uint64_t seed_ = 0;
};

/// P_Omega: keeps observed entries, zeroes the rest.
[[nodiscard]] Tensor3 apply_mask(const Tensor3& t, const MaskTensor& m);

/// Number of retained entries for a sampling rate: round(sr * n), halves away
/// from zero.
[[nodiscard]] std::size_t retained_count(double sr, std::size_t n);

/// Element-wise uniform mask keeping exactly retained_count(sr, H*W*C)
/// entries. Indices are drawn by a forward partial Fisher-Yates shuffle of
/// 0..N-1 driven by SplitMix64(seed): for i = 0..n-1, j = i + below(N - i),
/// swap(perm[i], perm[j]); the first n entries of perm are observed.
[[nodiscard]] MaskTensor gen_mask(std::size_t height, std::size_t width, std::size_t channels, double sr,
                                  std::uint64_t seed);

}  // namespace mptc
