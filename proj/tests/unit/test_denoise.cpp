#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

#include "mptc/denoise.hpp"
#include "mptc/errors.hpp"
#include "support.hpp"

using namespace mptc;
using mptc::testing::random_tensor;

namespace {

Image2D random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    Tensor3 t = random_tensor({h, w, 1}, seed, 0.0, 1.0);
    return Image2D(h, w, t.values());
}

double variance(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return s / static_cast<double>(v.size());
}

// Mirror an out-of-range index back in by repeated folding: -1 -> 0,
// n -> n - 1, and so on.
std::size_t fold(long i, long n) {
    while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - 1 - i;
    return static_cast<std::size_t>(i);
}

// Direct 2-D convolution with the separable Gaussian written as one kernel.
Image2D gaussian_oracle(const Image2D& img, double sigma) {
    const double s = sigma * static_cast<double>(std::min(img.height, img.width));
    const long r = static_cast<long>(std::ceil(3.0 * s));
    std::vector<double> k1;
    double sum = 0.0;
    for (long d = -r; d <= r; ++d) {
        k1.push_back(std::exp(-0.5 * d * d / (s * s)));
        sum += k1.back();
    }
    Image2D out(img.height, img.width);
    for (long y = 0; y < static_cast<long>(img.height); ++y)
        for (long x = 0; x < static_cast<long>(img.width); ++x) {
            double acc = 0.0;
            for (long dy = -r; dy <= r; ++dy)
                for (long dx = -r; dx <= r; ++dx)
                    acc += k1[dy + r] * k1[dx + r] / (sum * sum) *
                           img(fold(y + dy, static_cast<long>(img.height)), fold(x + dx, static_cast<long>(img.width)));
            out(y, x) = acc;
        }
    return out;
}

}  // namespace

TEST(GaussianSmoother, ZeroSigmaIsExactIdentity) {
    Tensor3 t = random_tensor({6, 5, 3}, 1);
    DenoiserSpec spec{.kind = DenoiserKind::GaussianSmoother, .sigma = 0.0};
    EXPECT_EQ(denoise(t, spec), t);
}

TEST(GaussianSmoother, MatchesDirectConvolution) {
    for (double sigma : {0.05, 0.1, 0.4}) {
        Image2D img = random_image(9, 12, 3);
        Image2D got = gaussian_smooth(img, sigma);
        Image2D ref = gaussian_oracle(img, sigma);
        for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(got.pixels[i], ref.pixels[i], 1e-12) << sigma;
    }
}

TEST(GaussianSmoother, ConstantImageIsFixed) {
    Image2D img(10, 7, 0.3);
    Image2D out = gaussian_smooth(img, 0.2);
    for (double v : out.pixels) EXPECT_NEAR(v, 0.3, 1e-14);
}

TEST(GaussianSmoother, VarianceNeverIncreases) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SplitMix64 rng(seed);
        const std::size_t h = 2 + rng.below(20), w = 2 + rng.below(20);
        const double sigma = 0.01 + rng.uniform();
        Image2D img = random_image(h, w, seed + 100);
        EXPECT_LE(variance(gaussian_smooth(img, sigma).pixels), variance(img.pixels) + 1e-15) << seed;
    }
}

TEST(GaussianSmoother, PreservesMean) {
    Image2D img = random_image(16, 16, 4);
    Image2D out = gaussian_smooth(img, 0.1);
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        a += img.pixels[i];
        b += out.pixels[i];
    }
    EXPECT_NEAR(a, b, 1e-10);
}

TEST(TvSmoother, ZeroSigmaAndConstantAreFixed) {
    Image2D img = random_image(8, 8, 5);
    EXPECT_EQ(tv_smooth(img, 0.0).pixels, img.pixels);
    Image2D flat(8, 8, 0.6);
    for (double v : tv_smooth(flat, 0.3).pixels) EXPECT_NEAR(v, 0.6, 1e-14);
}

TEST(TvSmoother, ReducesTotalVariationAndObjective) {
    Image2D img = random_image(16, 16, 6);
    const double lambda = 0.2 * 0.2;
    auto tv = [](const Image2D& u) {
        double s = 0.0;
        for (std::size_t y = 0; y < u.height; ++y)
            for (std::size_t x = 0; x < u.width; ++x) {
                const double gx = x + 1 < u.width ? u(y, x + 1) - u(y, x) : 0.0;
                const double gy = y + 1 < u.height ? u(y + 1, x) - u(y, x) : 0.0;
                s += std::sqrt(gx * gx + gy * gy);
            }
        return s;
    };
    auto objective = [&](const Image2D& u) {
        double d = 0.0;
        for (std::size_t i = 0; i < u.pixels.size(); ++i) d += 0.5 * std::pow(u.pixels[i] - img.pixels[i], 2);
        return d + lambda * tv(u);
    };
    Image2D out = tv_smooth(img, 0.2, 200);
    EXPECT_LT(tv(out), tv(img));
    EXPECT_LT(objective(out), objective(img));
    // Perturbing the minimizer should not lower the objective.
    SplitMix64 rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        Image2D p = out;
        for (double& v : p.pixels) v += 1e-3 * (rng.uniform() - 0.5);
        EXPECT_GE(objective(p), objective(out) - 1e-6);
    }
}

TEST(DenoiserKind, ParseAndPrint) {
    for (auto k : {DenoiserKind::Identity, DenoiserKind::GaussianSmoother, DenoiserKind::TvSmoother,
                   DenoiserKind::ExternalBridge, DenoiserKind::Bm3d}) {
        EXPECT_EQ(parse_denoiser_kind(to_string(k)), k);
    }
    EXPECT_EQ(parse_denoiser_kind("gaussian"), DenoiserKind::GaussianSmoother);
    EXPECT_THROW((void)parse_denoiser_kind("cnn"), InvalidArgument);
}

TEST(Denoiser, CountsCallsAndRejectsNegativeSigma) {
    Denoiser d(DenoiserSpec{.kind = DenoiserKind::GaussianSmoother, .sigma = 0.1});
    Tensor3 t = random_tensor({8, 8, 2}, 7);
    (void)d(t);
    (void)d.apply(t, 0.0);
    EXPECT_EQ(d.calls(), 2u);
    EXPECT_THROW((void)d.apply(t, -1.0), InvalidArgument);
    EXPECT_THROW(Denoiser(DenoiserSpec{.kind = DenoiserKind::Identity, .sigma = -0.1}), InvalidArgument);
}

TEST(Denoiser, IdentityKindReturnsInput) {
    Tensor3 t = random_tensor({4, 4, 3}, 8);
    EXPECT_EQ(denoise(t, DenoiserSpec{.kind = DenoiserKind::Identity, .sigma = 0.5}), t);
}

TEST(Denoiser, BandsAreIndependent) {
    Tensor3 t = random_tensor({10, 10, 3}, 9);
    Tensor3 out = denoise(t, DenoiserSpec{.kind = DenoiserKind::GaussianSmoother, .sigma = 0.1});
    Image2D band1 = gaussian_smooth(Image2D(10, 10, t.band(1)), 0.1);
    EXPECT_EQ(out.band(1), band1.pixels);
}

TEST(Denoiser, BridgeRequiresEndpoint) {
    ::unsetenv(kBridgeEndpointEnv);
    EXPECT_THROW(Denoiser(DenoiserSpec{.kind = DenoiserKind::ExternalBridge, .sigma = 0.1}), InvalidArgument);
}
