#include "mptc/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "mptc/errors.hpp"
#include "mptc/metrics.hpp"

namespace mptc {

namespace {

Tensor3 x_argument_of(const SolverState& s, const Tensor3& z, double rho, double psi) {
    require_same_shape(z.shape(), s.y.shape(), "update_x");
    Tensor3 out(z.shape());
    const double denom = rho + psi;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double local = rho * (z[i] - s.m1[i] / rho);
        const double nonlocal = psi * (s.y[i] - s.m2[i] / psi);
        out[i] = (local + nonlocal) / denom;
    }
    return out;
}

Tensor3 y_argument_of(const SolverState& s, double psi) {
    Tensor3 out(s.x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.x[i] + s.m2[i] / psi;
    return out;
}

std::pair<Tensor3, Tensor3> multipliers_of(const SolverState& s, const Tensor3& z, double rho, double psi) {
    require_same_shape(z.shape(), s.x.shape(), "update_multipliers");
    Tensor3 m1(s.m1.shape());
    Tensor3 m2(s.m2.shape());
    for (std::size_t i = 0; i < m1.size(); ++i) {
        m1[i] = s.m1[i] + rho * (s.x[i] - z[i]);
        m2[i] = s.m2[i] + psi * (s.x[i] - s.y[i]);
    }
    return {std::move(m1), std::move(m2)};
}

// ||x - prev|| / ||prev||; a zero previous iterate counts as no change when x
// is also zero and as an unbounded change otherwise.
double relative_change(const Tensor3& x, const Tensor3& prev) {
    if (fro_norm(prev) == 0.0) {
        return fro_norm(x) == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return rel_change(x, prev);
}

TransformG initial_transform(const SolverConfig& cfg, std::size_t channels) {
    return cfg.transform == TransformG::Mode::LearnableLinear ? TransformG::learnable_linear(channels)
                                                              : TransformG::identity();
}

void require_finite(const Tensor3& t, const char* what, std::size_t iteration) {
    if (!t.all_finite()) {
        throw Diverged(std::string(what) + " became non-finite at outer iteration " + std::to_string(iteration));
    }
}

}  // namespace

InnerOptConfig SolverConfig::default_inner() {
    InnerOptConfig c;
    c.steps = 15;
    return c;
}

DenoiserSpec SolverConfig::default_local() {
    DenoiserSpec s;
    s.kind = DenoiserKind::GaussianSmoother;
    s.sigma = 0.1;
    return s;
}

DenoiserSpec SolverConfig::default_nonlocal() {
    DenoiserSpec s;
    s.kind = DenoiserKind::Bm3d;
    s.sigma = 0.1;
    return s;
}

void SolverConfig::validate() const {
    if (outer_iterations < 1) throw InvalidArgument("outer iterations K must be >= 1");
    if (std::isnan(tolerance) || tolerance < 0.0) throw InvalidArgument("tolerance must be >= 0");
    if (rank < 1) throw BadRank("rank must be >= 1");
    if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be positive");
    if (!(psi > 0.0) || !std::isfinite(psi)) throw InvalidArgument("psi must be positive");
    if (!(sigma1 >= 0.0) || !std::isfinite(sigma1)) throw InvalidArgument("sigma1 must be finite and >= 0");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw InvalidArgument("sigma2 must be finite and >= 0");
    inner.validate();
    if (enable_local) local.validate();
    if (enable_nonlocal) nonlocal.validate();
}

AdmmSolver::AdmmSolver(SolverConfig cfg)
    : cfg_((cfg.validate(), std::move(cfg))),
      local_(cfg_.enable_local ? cfg_.local : DenoiserSpec{}),
      nonlocal_(cfg_.enable_nonlocal ? cfg_.nonlocal : DenoiserSpec{}),
      optimizer_(cfg_.inner) {}

SolverState AdmmSolver::init_state(const Tensor3& observed, const MaskTensor& mask) const {
    return mptc::init_state(observed, mask, cfg_);
}

void AdmmSolver::update_factors(SolverState& state, const Tensor3& observed, const MaskTensor& mask) {
    const Subproblem1Data data{state.x, observed, mask, state.m1, cfg_.rho};
    for (std::size_t step = 0; step < cfg_.inner.steps; ++step) {
        FactorUpdate u = optimizer_.step(state.factors, state.g, data);
        state.factors = std::move(u.factors);
        state.g = std::move(u.transform);
    }
}

Tensor3 AdmmSolver::x_argument(const SolverState& state) const {
    return x_argument_of(state, compose(state.factors, state.g), cfg_.rho, cfg_.psi);
}

Tensor3 AdmmSolver::update_x(const SolverState& state) {
    Tensor3 arg = x_argument(state);
    if (!cfg_.enable_local) return arg;
    return local_.apply(arg, cfg_.sigma1);
}

Tensor3 AdmmSolver::update_y(const SolverState& state) {
    Tensor3 arg = y_argument_of(state, cfg_.psi);
    if (!cfg_.enable_nonlocal) return arg;
    return nonlocal_.apply(arg, cfg_.sigma2);
}

std::pair<Tensor3, Tensor3> AdmmSolver::update_multipliers(const SolverState& state) const {
    return multipliers_of(state, compose(state.factors, state.g), cfg_.rho, cfg_.psi);
}

ReconstructionReport AdmmSolver::run(const Tensor3& observed, const MaskTensor& mask, TraceReference reference,
                                     const ProgressFn& progress) {
    const auto start = std::chrono::steady_clock::now();
    if (reference.tensor != nullptr) require_same_shape(reference.tensor->shape(), observed.shape(), "run reference");
    const MetricContext metric{.peak = 1.0};
    const bool with_ssim =
        observed.height() >= metric.window && observed.width() >= metric.window && reference.tensor != nullptr;

    SolverState state = init_state(observed, mask);
    bool converged = false;
    while (state.iteration < cfg_.outer_iterations) {
        const std::size_t i = state.iteration + 1;
        Tensor3 previous = state.x;

        update_factors(state, observed, mask);
        if (!state.factors.all_finite()) throw Diverged("factors became non-finite at outer iteration " + std::to_string(i));
        state.x = update_x(state);
        require_finite(state.x, "X", i);
        state.y = update_y(state);
        require_finite(state.y, "Y", i);
        auto [m1, m2] = update_multipliers(state);
        require_finite(m1, "M1", i);
        require_finite(m2, "M2", i);
        state.m1 = std::move(m1);
        state.m2 = std::move(m2);
        state.iteration = i;

        IterationRecord rec;
        rec.iteration = i;
        rec.rel_change = relative_change(state.x, previous);
        rec.loss = optimizer_.last_loss();
        if (reference.tensor != nullptr) {
            rec.psnr_x = psnr(state.x, *reference.tensor, metric);
            rec.psnr_y = psnr(state.y, *reference.tensor, metric);
            if (with_ssim) {
                rec.ssim_x = ssim(state.x, *reference.tensor, metric);
                rec.ssim_y = ssim(state.y, *reference.tensor, metric);
            }
        }
        state.history.push_back(rec);
        if (progress) progress(rec);
        if (rec.rel_change <= cfg_.tolerance) {
            converged = true;
            break;
        }
    }

    ReconstructionReport report;
    report.low_rank = compose(state.factors, state.g);
    report.x = std::move(state.x);
    if (cfg_.clamp_observed) {
        for (std::size_t k = 0; k < report.x.size(); ++k) {
            if (mask.observed(k)) report.x[k] = observed[k];
        }
    }
    report.y = std::move(state.y);
    report.iterations = state.iteration;
    report.converged = converged;
    report.history = std::move(state.history);
    report.config = cfg_;
    report.local_calls = local_.calls();
    report.nonlocal_calls = nonlocal_.calls();
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

SolverState init_state(const Tensor3& observed, const MaskTensor& mask, const SolverConfig& cfg) {
    require_same_shape(observed.shape(), mask.shape(), "init_state");
    const Shape s = observed.shape();
    const double data_rms = fro_norm(observed) / std::sqrt(static_cast<double>(s.size()));
    SolverState state{
        .x = observed,
        .y = observed,
        .m1 = Tensor3(s, 0.0),
        .m2 = Tensor3(s, 0.0),
        .factors = init_factors(s.height, s.width, s.channels, cfg.rank, data_rms, cfg.seed),
        .g = initial_transform(cfg, s.channels),
        .iteration = 0,
        .history = {},
    };
    return state;
}

Tensor3 update_x(const SolverState& state, const SolverConfig& cfg) {
    Tensor3 arg = x_argument_of(state, compose(state.factors, state.g), cfg.rho, cfg.psi);
    if (!cfg.enable_local) return arg;
    Denoiser d(cfg.local);
    return d.apply(arg, cfg.sigma1);
}

Tensor3 update_y(const SolverState& state, const SolverConfig& cfg) {
    Tensor3 arg = y_argument_of(state, cfg.psi);
    if (!cfg.enable_nonlocal) return arg;
    Denoiser d(cfg.nonlocal);
    return d.apply(arg, cfg.sigma2);
}

std::pair<Tensor3, Tensor3> update_multipliers(const SolverState& state, const SolverConfig& cfg) {
    return multipliers_of(state, compose(state.factors, state.g), cfg.rho, cfg.psi);
}

ReconstructionReport run(const Tensor3& observed, const MaskTensor& mask, const SolverConfig& cfg,
                         TraceReference reference) {
    AdmmSolver solver(cfg);
    return solver.run(observed, mask, reference);
}

}  // namespace mptc
