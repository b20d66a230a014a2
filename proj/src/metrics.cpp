#include "mptc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mptc/errors.hpp"

namespace mptc {

namespace {

// (H+1) x (W+1) summed-area table of f(x, y) over one band.
template <typename Fn>
std::vector<double> integral(const Tensor3& x, const Tensor3& y, std::size_t c, Fn&& f) {
    const std::size_t h = x.height();
    const std::size_t w = x.width();
    std::vector<double> s((h + 1) * (w + 1), 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < w; ++j) {
            row += f(x(i, j, c), y(i, j, c));
            s[(i + 1) * (w + 1) + j + 1] = s[i * (w + 1) + j + 1] + row;
        }
    }
    return s;
}

double box(const std::vector<double>& s, std::size_t w, std::size_t i, std::size_t j, std::size_t n) {
    const std::size_t stride = w + 1;
    return s[(i + n) * stride + j + n] - s[i * stride + j + n] - s[(i + n) * stride + j] + s[i * stride + j];
}

}  // namespace

void MetricContext::validate() const {
    if (!(peak > 0.0)) throw InvalidArgument("metric peak must be positive");
    if (window == 0) throw InvalidArgument("ssim window must be positive");
}

double psnr(const Tensor3& x, const Tensor3& ref, const MetricContext& ctx) {
    ctx.validate();
    require_same_shape(x.shape(), ref.shape(), "psnr");
    double sse = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - ref[i];
        sse += d * d;
    }
    if (sse == 0.0) return std::numeric_limits<double>::infinity();
    const double mse = sse / static_cast<double>(x.size());
    return 10.0 * std::log10(ctx.peak * ctx.peak / mse);
}

double ssim(const Tensor3& x, const Tensor3& ref, const MetricContext& ctx) {
    ctx.validate();
    require_same_shape(x.shape(), ref.shape(), "ssim");
    const std::size_t n = ctx.window;
    if (x.height() < n || x.width() < n) {
        throw ImageTooSmall("ssim needs at least " + std::to_string(n) + "x" + std::to_string(n) + " bands, got " +
                            x.shape().str());
    }
    const double c1 = (ctx.k1 * ctx.peak) * (ctx.k1 * ctx.peak);
    const double c2 = (ctx.k2 * ctx.peak) * (ctx.k2 * ctx.peak);
    const double count = static_cast<double>(n * n);
    const std::size_t w = x.width();

    double total = 0.0;
    std::size_t windows = 0;
    for (std::size_t c = 0; c < x.channels(); ++c) {
        const auto sx = integral(x, ref, c, [](double a, double) { return a; });
        const auto sy = integral(x, ref, c, [](double, double b) { return b; });
        const auto sxx = integral(x, ref, c, [](double a, double) { return a * a; });
        const auto syy = integral(x, ref, c, [](double, double b) { return b * b; });
        const auto sxy = integral(x, ref, c, [](double a, double b) { return a * b; });
        for (std::size_t i = 0; i + n <= x.height(); ++i) {
            for (std::size_t j = 0; j + n <= w; ++j) {
                const double mx = box(sx, w, i, j, n) / count;
                const double my = box(sy, w, i, j, n) / count;
                const double vx = box(sxx, w, i, j, n) / count - mx * mx;
                const double vy = box(syy, w, i, j, n) / count - my * my;
                const double cov = box(sxy, w, i, j, n) / count - mx * my;
                const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
                const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                // Rounding in the moment sums can push a window a hair past +-1.
                total += std::clamp(num / den, -1.0, 1.0);
                ++windows;
            }
        }
    }
    return total / static_cast<double>(windows);
}

}  // namespace mptc
