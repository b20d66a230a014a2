#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mptc/tensor.hpp"

namespace mptc {

/// Row-major single-band image.
struct Image2D {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image2D() = default;
    Image2D(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}
    Image2D(std::size_t h, std::size_t w, std::vector<double> px);

    double& operator()(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
    double operator()(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

/// Hard-thresholding (and optional Wiener) BM3D settings.
struct Bm3dParams {
    std::size_t block_size = 8;
    std::size_t search_radius = 19;
    std::size_t max_group_size = 16;
    std::size_t step = 3;
    double lambda = 2.7;
    bool wiener = false;

    void validate() const;
};

enum class DenoiserKind { Identity, GaussianSmoother, TvSmoother, ExternalBridge, Bm3d };

[[nodiscard]] std::string to_string(DenoiserKind kind);
/// Accepts "identity", "gaussian"/"gaussian-smoother", "tv"/"tv-smoother",
/// "bridge"/"external-bridge", "bm3d".
[[nodiscard]] DenoiserKind parse_denoiser_kind(const std::string& name);

/// A sigma-parameterized denoiser. Sigma is in units of the [0, 1]-normalized
/// data range.
struct DenoiserSpec {
    DenoiserKind kind = DenoiserKind::Identity;
    double sigma = 0.0;
    /// Command line of the external denoiser process (external-bridge only).
    std::optional<std::string> endpoint;
    /// Keep one bridge process alive across calls instead of one per call.
    bool persistent_bridge = false;
    double bridge_timeout_seconds = 120.0;
    Bm3dParams bm3d{};
    std::size_t tv_iterations = 100;

    void validate() const;
};

/// Per-band Gaussian convolution with pixel standard deviation
/// s = sigma * min(H, W) and kernel radius ceil(3 s); weights are normalized
/// to sum to one and borders use half-sample symmetric reflection. sigma = 0
/// returns the input unchanged.
[[nodiscard]] Image2D gaussian_smooth(const Image2D& img, double sigma);

/// Total-variation proximal map argmin_x 1/2 ||x - img||^2 + sigma^2 TV(x)
/// (isotropic TV, Neumann boundary) by Chambolle's dual projection.
[[nodiscard]] Image2D tv_smooth(const Image2D& img, double sigma, std::size_t iterations = 100);

/// BM3D on one band. Throws ImageTooSmall when a side is shorter than the
/// block size.
[[nodiscard]] Image2D bm3d_band(const Image2D& img, double sigma, const Bm3dParams& p = {});

class BridgeSession;

/// A configured denoiser; counts invocations and owns the bridge process in
/// persistent mode. Not thread-safe (one in-flight request per endpoint).
class Denoiser {
 public:
    explicit Denoiser(DenoiserSpec spec);
    ~Denoiser();
    Denoiser(Denoiser&&) noexcept;
    Denoiser& operator=(Denoiser&&) noexcept;

    /// Denoises t at the spec's sigma.
    [[nodiscard]] Tensor3 operator()(const Tensor3& t);
    /// Denoises t at an explicit sigma.
    [[nodiscard]] Tensor3 apply(const Tensor3& t, double sigma);

    [[nodiscard]] const DenoiserSpec& spec() const { return spec_; }
    [[nodiscard]] std::size_t calls() const { return calls_; }

 private:
    DenoiserSpec spec_;
    std::unique_ptr<BridgeSession> session_;
    std::size_t calls_ = 0;
};

/// One-shot convenience wrapper around Denoiser.
[[nodiscard]] Tensor3 denoise(const Tensor3& t, const DenoiserSpec& spec);

/// Environment variable that, when set, replaces the endpoint of every
/// external-bridge denoiser.
inline constexpr const char* kBridgeEndpointEnv = "MPTC_BRIDGE_ENDPOINT";

}  // namespace mptc
