#include <gtest/gtest.h>

#include <cmath>

#include "mptc/denoise.hpp"
#include "mptc/errors.hpp"
#include "mptc/io.hpp"
#include "mptc/metrics.hpp"
#include "support.hpp"

using namespace mptc;

namespace {

Image2D load_gray64() {
    ImageFile f = read_image(mptc::testing::data_path("astronaut_gray64.png"));
    Image2D img(f.pixels.height(), f.pixels.width(), f.pixels.band(0));
    for (double& v : img.pixels) v /= 255.0;
    return img;
}

Image2D add_noise(const Image2D& img, double sigma, std::uint64_t seed) {
    SplitMix64 rng(seed);
    Image2D out = img;
    for (double& v : out.pixels) v += sigma * rng.gaussian();
    return out;
}

double image_psnr(const Image2D& a, const Image2D& b) {
    const Tensor3 ta({a.height, a.width, 1}, a.pixels);
    const Tensor3 tb({b.height, b.width, 1}, b.pixels);
    return psnr(ta, tb, MetricContext{.peak = 1.0});
}

}  // namespace

TEST(Bm3d, FlatImageIsFixedPoint) {
    for (double sigma : {0.01, 0.1, 0.5}) {
        Image2D flat(20, 17, 0.42);
        Image2D out = bm3d_band(flat, sigma);
        for (double v : out.pixels) EXPECT_NEAR(v, 0.42, 1e-12) << sigma;
    }
}

TEST(Bm3d, FlatTensorThroughDenoiser) {
    Tensor3 t(16, 16, 3, 0.7);
    Tensor3 out = denoise(t, DenoiserSpec{.kind = DenoiserKind::Bm3d, .sigma = 0.2});
    EXPECT_LT(mptc::testing::max_abs_diff(out, t), 1e-12);
}

TEST(Bm3d, ZeroSigmaThroughDenoiserIsIdentity) {
    Tensor3 t = mptc::testing::random_tensor({12, 12, 1}, 3, 0.0, 1.0);
    EXPECT_EQ(denoise(t, DenoiserSpec{.kind = DenoiserKind::Bm3d, .sigma = 0.0}), t);
}

TEST(Bm3d, TinyThresholdNearlyReproducesInput) {
    Image2D img = load_gray64();
    Image2D out = bm3d_band(img, 1e-6);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(out.pixels[i], img.pixels[i], 1e-4);
}

TEST(Bm3d, ImprovesNoisyImage) {
    Image2D clean = load_gray64();
    const double sigma = 25.0 / 255.0;
    Image2D noisy = add_noise(clean, sigma, 77);
    const double before = image_psnr(noisy, clean);
    const double after = image_psnr(bm3d_band(noisy, sigma), clean);
    EXPECT_GT(after, before + 2.0) << before << " -> " << after;
}

TEST(Bm3d, WienerStageDoesNotHurt) {
    Image2D clean = load_gray64();
    const double sigma = 25.0 / 255.0;
    Image2D noisy = add_noise(clean, sigma, 78);
    Bm3dParams p;
    const double hard = image_psnr(bm3d_band(noisy, sigma, p), clean);
    p.wiener = true;
    const double wiener = image_psnr(bm3d_band(noisy, sigma, p), clean);
    EXPECT_GT(wiener, hard - 0.25);
}

TEST(Bm3d, Deterministic) {
    Image2D noisy = add_noise(load_gray64(), 0.1, 5);
    EXPECT_EQ(bm3d_band(noisy, 0.1).pixels, bm3d_band(noisy, 0.1).pixels);
}

TEST(Bm3d, SmallestAdmissibleImage) {
    Image2D img(8, 8);
    SplitMix64 rng(1);
    for (double& v : img.pixels) v = rng.uniform();
    Image2D out = bm3d_band(img, 0.1);
    for (double v : out.pixels) EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW((void)bm3d_band(Image2D(7, 30), 0.1), ImageTooSmall);
}

TEST(Bm3d, ParameterValidation) {
    Bm3dParams p;
    EXPECT_NO_THROW(p.validate());
    p.max_group_size = 12;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = Bm3dParams{};
    p.step = 0;
    EXPECT_THROW(p.validate(), InvalidArgument);
    p = Bm3dParams{};
    p.block_size = 64;
    p.search_radius = 4;
    EXPECT_THROW(p.validate(), InvalidArgument);
}
