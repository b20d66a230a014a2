#pragma once

#include "mptc/tensor.hpp"

namespace mptc {

struct MetricContext {
    double peak = 255.0;
    double k1 = 0.01;
    double k2 = 0.03;
    std::size_t window = 8;

    void validate() const;
};

/// 10 log10(peak^2 / MSE) over all entries; +infinity when x == ref.
[[nodiscard]] double psnr(const Tensor3& x, const Tensor3& ref, const MetricContext& ctx);

/// Mean SSIM over every window x window position (stride 1) of every band,
/// uniform window, population (1/N) statistics,
/// C1 = (k1 peak)^2, C2 = (k2 peak)^2. Throws ImageTooSmall if a side is
/// shorter than the window.
[[nodiscard]] double ssim(const Tensor3& x, const Tensor3& ref, const MetricContext& ctx);

}  // namespace mptc
