#include "mptc/denoise.hpp"

#include <cstdlib>

#include "mptc/bridge.hpp"
#include "mptc/errors.hpp"

namespace mptc {

namespace {

template <typename BandFn>
Tensor3 per_band(const Tensor3& t, BandFn&& fn) {
    Tensor3 out(t.shape());
    for (std::size_t c = 0; c < t.channels(); ++c) {
        Image2D band(t.height(), t.width(), t.band(c));
        Image2D result = fn(band);
        out.set_band(c, result.pixels);
    }
    return out;
}

std::string resolve_endpoint(const DenoiserSpec& spec) {
    if (const char* env = std::getenv(kBridgeEndpointEnv); env != nullptr && *env != '\0') return env;
    if (!spec.endpoint || spec.endpoint->empty()) throw BridgeFailure("external-bridge denoiser has no endpoint");
    return *spec.endpoint;
}

}  // namespace

std::string to_string(DenoiserKind kind) {
    switch (kind) {
        case DenoiserKind::Identity: return "identity";
        case DenoiserKind::GaussianSmoother: return "gaussian-smoother";
        case DenoiserKind::TvSmoother: return "tv-smoother";
        case DenoiserKind::ExternalBridge: return "external-bridge";
        case DenoiserKind::Bm3d: return "bm3d";
    }
    return "unknown";
}

DenoiserKind parse_denoiser_kind(const std::string& name) {
    if (name == "identity" || name == "none") return DenoiserKind::Identity;
    if (name == "gaussian" || name == "gaussian-smoother") return DenoiserKind::GaussianSmoother;
    if (name == "tv" || name == "tv-smoother") return DenoiserKind::TvSmoother;
    if (name == "bridge" || name == "external-bridge") return DenoiserKind::ExternalBridge;
    if (name == "bm3d") return DenoiserKind::Bm3d;
    throw InvalidArgument("unknown denoiser kind '" + name + "'");
}

void DenoiserSpec::validate() const {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("denoiser sigma must be finite and >= 0");
    if (kind == DenoiserKind::ExternalBridge && (!endpoint || endpoint->empty()) &&
        std::getenv(kBridgeEndpointEnv) == nullptr) {
        throw InvalidArgument("external-bridge denoiser requires an endpoint");
    }
    if (kind == DenoiserKind::Bm3d) bm3d.validate();
}

Denoiser::Denoiser(DenoiserSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.kind == DenoiserKind::ExternalBridge) {
        session_ = std::make_unique<BridgeSession>(resolve_endpoint(spec_), spec_.persistent_bridge,
                                                   spec_.bridge_timeout_seconds);
    }
}

Denoiser::~Denoiser() = default;
Denoiser::Denoiser(Denoiser&&) noexcept = default;
Denoiser& Denoiser::operator=(Denoiser&&) noexcept = default;

Tensor3 Denoiser::operator()(const Tensor3& t) { return apply(t, spec_.sigma); }

Tensor3 Denoiser::apply(const Tensor3& t, double sigma) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("denoiser sigma must be finite and >= 0");
    ++calls_;
    Tensor3 out;
    switch (spec_.kind) {
        case DenoiserKind::Identity:
            return t;
        case DenoiserKind::ExternalBridge:
            return session_->request(t, sigma);
        case DenoiserKind::GaussianSmoother:
            if (sigma == 0.0) return t;
            out = per_band(t, [sigma](const Image2D& b) { return gaussian_smooth(b, sigma); });
            break;
        case DenoiserKind::TvSmoother:
            if (sigma == 0.0) return t;
            out = per_band(t, [&](const Image2D& b) { return tv_smooth(b, sigma, spec_.tv_iterations); });
            break;
        case DenoiserKind::Bm3d:
            if (sigma == 0.0) return t;
            out = per_band(t, [&](const Image2D& b) { return bm3d_band(b, sigma, spec_.bm3d); });
            break;
    }
    if (!out.all_finite()) throw Diverged(to_string(spec_.kind) + " produced non-finite output");
    return out;
}

Tensor3 denoise(const Tensor3& t, const DenoiserSpec& spec) {
    Denoiser d(spec);
    return d(t);
}

}  // namespace mptc
