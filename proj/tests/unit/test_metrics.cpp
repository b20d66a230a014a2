#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mptc/errors.hpp"
#include "mptc/metrics.hpp"
#include "support.hpp"

using namespace mptc;
using mptc::testing::random_tensor;

namespace {

double psnr_loop(const Tensor3& x, const Tensor3& y, double peak) {
    long double sse = 0.0L;
    for (std::size_t h = 0; h < x.height(); ++h)
        for (std::size_t w = 0; w < x.width(); ++w)
            for (std::size_t c = 0; c < x.channels(); ++c) {
                const long double d = x(h, w, c) - y(h, w, c);
                sse += d * d;
            }
    const long double mse = sse / x.size();
    return static_cast<double>(10.0L * std::log10(static_cast<long double>(peak) * peak / mse));
}

// Two-pass window statistics, no running sums.
double ssim_loop(const Tensor3& x, const Tensor3& y, double peak, std::size_t n) {
    const double c1 = std::pow(0.01 * peak, 2), c2 = std::pow(0.03 * peak, 2);
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t c = 0; c < x.channels(); ++c)
        for (std::size_t i = 0; i + n <= x.height(); ++i)
            for (std::size_t j = 0; j + n <= x.width(); ++j) {
                double mx = 0, my = 0;
                for (std::size_t a = 0; a < n; ++a)
                    for (std::size_t b = 0; b < n; ++b) {
                        mx += x(i + a, j + b, c);
                        my += y(i + a, j + b, c);
                    }
                mx /= n * n;
                my /= n * n;
                double vx = 0, vy = 0, cov = 0;
                for (std::size_t a = 0; a < n; ++a)
                    for (std::size_t b = 0; b < n; ++b) {
                        const double dx = x(i + a, j + b, c) - mx, dy = y(i + a, j + b, c) - my;
                        vx += dx * dx;
                        vy += dy * dy;
                        cov += dx * dy;
                    }
                vx /= n * n;
                vy /= n * n;
                cov /= n * n;
                total += (2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2));
                ++count;
            }
    return total / count;
}

}  // namespace

TEST(Psnr, HandCase) {
    // MSE 0.25 at peak 1: 10 log10(4) = 6.0206 dB.
    Tensor3 x(4, 4, 1, 0.0);
    Tensor3 y(4, 4, 1, 0.5);
    EXPECT_NEAR(psnr(x, y, MetricContext{.peak = 1.0}), 6.0206, 5e-5);
    EXPECT_NEAR(psnr(x, y, MetricContext{.peak = 1.0}), 20.0 * std::log10(2.0), 1e-12);
}

TEST(Psnr, IdenticalIsInfinite) {
    Tensor3 x = random_tensor({5, 5, 2}, 1);
    EXPECT_EQ(psnr(x, x, MetricContext{}), std::numeric_limits<double>::infinity());
}

TEST(Psnr, MatchesLoopOracle) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        Tensor3 x = random_tensor({8, 8, 3}, s, 0.0, 255.0);
        Tensor3 y = random_tensor({8, 8, 3}, s + 50, 0.0, 255.0);
        EXPECT_NEAR(psnr(x, y, MetricContext{}), psnr_loop(x, y, 255.0), 1e-9);
    }
}

TEST(Psnr, RejectsShapeMismatchAndBadPeak) {
    EXPECT_THROW((void)psnr(Tensor3(2, 2, 1), Tensor3(2, 2, 2), MetricContext{}), ShapeMismatch);
    EXPECT_THROW((void)psnr(Tensor3(2, 2, 1), Tensor3(2, 2, 1), MetricContext{.peak = 0.0}), InvalidArgument);
}

TEST(Ssim, SelfSimilarityIsExactlyOne) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        Tensor3 x = random_tensor({8 + s, 9, 2}, s, 0.0, 1.0);
        EXPECT_EQ(ssim(x, x, MetricContext{.peak = 1.0}), 1.0);
    }
    Tensor3 flat(8, 8, 1, 0.3);
    EXPECT_EQ(ssim(flat, flat, MetricContext{.peak = 1.0}), 1.0);
}

TEST(Ssim, MatchesLoopOracleOn8x8) {
    for (std::uint64_t s = 0; s < 5; ++s) {
        Tensor3 x = random_tensor({8, 8, 1}, s, 0.0, 255.0);
        Tensor3 y = random_tensor({8, 8, 1}, s + 10, 0.0, 255.0);
        EXPECT_NEAR(ssim(x, y, MetricContext{}), ssim_loop(x, y, 255.0, 8), 1e-9);
        Tensor3 z = x;
        for (double& v : z.data()) v = 0.9 * v + 10.0;
        EXPECT_NEAR(ssim(x, z, MetricContext{}), ssim_loop(x, z, 255.0, 8), 1e-9);
    }
}

TEST(Ssim, MatchesLoopOracleOnLargerImages) {
    Tensor3 x = random_tensor({13, 17, 3}, 3, 0.0, 1.0);
    Tensor3 y = x;
    SplitMix64 rng(4);
    for (double& v : y.data()) v += 0.1 * rng.gaussian();
    EXPECT_NEAR(ssim(x, y, MetricContext{.peak = 1.0}), ssim_loop(x, y, 1.0, 8), 1e-9);
}

TEST(Ssim, BoundedAndSymmetric) {
    Tensor3 x = random_tensor({10, 10, 2}, 5, 0.0, 1.0);
    Tensor3 y = random_tensor({10, 10, 2}, 6, 0.0, 1.0);
    const double a = ssim(x, y, MetricContext{.peak = 1.0});
    EXPECT_LE(a, 1.0);
    EXPECT_GE(a, -1.0);
    EXPECT_DOUBLE_EQ(a, ssim(y, x, MetricContext{.peak = 1.0}));
}

TEST(Ssim, TooSmallImage) {
    EXPECT_THROW((void)ssim(Tensor3(7, 20, 1), Tensor3(7, 20, 1), MetricContext{}), ImageTooSmall);
}
