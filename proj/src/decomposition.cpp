#include "mptc/decomposition.hpp"

#include <algorithm>
#include <cmath>

#include "mptc/errors.hpp"
#include "mptc/rng.hpp"
#include "mptc/spectral.hpp"

namespace mptc {

namespace {

void check_finite(std::span<const double> g, const char* name) {
    for (double v : g) {
        if (!std::isfinite(v)) {
            throw NonFiniteGradient(std::string("gradient of ") + name + " has a non-finite entry");
        }
    }
}

void check_data(const FactorPair& f, const Subproblem1Data& data) {
    f.validate();
    const Shape s = f.output_shape();
    require_same_shape(s, data.x.shape(), "subproblem 1 (X)");
    require_same_shape(s, data.observed.shape(), "subproblem 1 (O)");
    require_same_shape(s, data.mask.shape(), "subproblem 1 (mask)");
    require_same_shape(s, data.m1.shape(), "subproblem 1 (M1)");
}

// Smoothed |d| and its derivative, offset so that phi(0) = 0.
inline double smooth_abs(double d, double eps) { return std::sqrt(d * d + eps * eps) - eps; }
inline double smooth_abs_deriv(double d, double eps) { return d / std::sqrt(d * d + eps * eps); }

// Adds alpha * d PTV_eps / dA and / dB into ga, gb.
void add_ptv_gradient(const FactorPair& f, double alpha, double eps, Tensor3& ga, Tensor3& gb) {
    const Tensor3& a = f.a;
    for (std::size_t h = 0; h + 1 < a.height(); ++h) {
        for (std::size_t k = 0; k < a.width(); ++k) {
            for (std::size_t c = 0; c < a.channels(); ++c) {
                const double s = alpha * smooth_abs_deriv(a(h + 1, k, c) - a(h, k, c), eps);
                ga(h + 1, k, c) += s;
                ga(h, k, c) -= s;
            }
        }
    }
    const Tensor3& b = f.b;
    for (std::size_t k = 0; k < b.height(); ++k) {
        for (std::size_t w = 0; w + 1 < b.width(); ++w) {
            for (std::size_t c = 0; c < b.channels(); ++c) {
                const double s = alpha * smooth_abs_deriv(b(k, w + 1, c) - b(k, w, c), eps);
                gb(k, w + 1, c) += s;
                gb(k, w, c) -= s;
            }
        }
    }
}

template <typename Fn>
double sum_differences(const FactorPair& f, Fn&& fn) {
    double acc = 0.0;
    const Tensor3& a = f.a;
    for (std::size_t h = 0; h + 1 < a.height(); ++h)
        for (std::size_t k = 0; k < a.width(); ++k)
            for (std::size_t c = 0; c < a.channels(); ++c) acc += fn(a(h + 1, k, c) - a(h, k, c));
    const Tensor3& b = f.b;
    for (std::size_t k = 0; k < b.height(); ++k)
        for (std::size_t w = 0; w + 1 < b.width(); ++w)
            for (std::size_t c = 0; c < b.channels(); ++c) acc += fn(b(k, w + 1, c) - b(k, w, c));
    return acc;
}

// Loss terms that depend on Z = g(A*B), plus dJ/dZ when requested.
double data_terms(const Tensor3& z, const Subproblem1Data& data, Tensor3* grad_z) {
    double fidelity = 0.0;
    double coupling = 0.0;
    double penalty = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double r_obs = data.mask.observed(i) ? z[i] - data.observed[i] : 0.0;
        const double gap = data.x[i] - z[i];
        fidelity += r_obs * r_obs;
        coupling += gap * data.m1[i];
        penalty += gap * gap;
        if (grad_z) (*grad_z)[i] = 2.0 * r_obs - data.m1[i] - data.rho * gap;
    }
    return fidelity + coupling + 0.5 * data.rho * penalty;
}

}  // namespace

void FactorPair::validate() const {
    if (a.empty() || b.empty() || a.channels() != b.channels() || a.width() != b.height()) {
        throw ShapeMismatch("factors " + a.shape().str() + " and " + b.shape().str() + " do not compose");
    }
}

TransformG TransformG::learnable_linear(std::size_t channels) {
    TransformG g;
    g.mode = Mode::LearnableLinear;
    g.channels = channels;
    g.theta.assign(channels * channels, 0.0);
    for (std::size_t i = 0; i < channels; ++i) g.theta[i * channels + i] = 1.0;
    return g;
}

Tensor3 TransformG::apply(const Tensor3& t) const {
    if (!learnable()) return t;
    if (t.channels() != channels) throw ShapeMismatch("transform g expects " + std::to_string(channels) + " channels");
    Tensor3 out(t.shape());
    const std::size_t n = channels;
    for (std::size_t base = 0; base < t.size(); base += n) {
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += theta[i * n + j] * t[base + j];
            out[base + i] = acc;
        }
    }
    return out;
}

Tensor3 TransformG::pullback(const Tensor3& grad_out) const {
    if (!learnable()) return grad_out;
    Tensor3 out(grad_out.shape());
    const std::size_t n = channels;
    for (std::size_t base = 0; base < grad_out.size(); base += n) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += theta[i * n + j] * grad_out[base + i];
            out[base + j] = acc;
        }
    }
    return out;
}

std::vector<double> TransformG::theta_gradient(const Tensor3& t, const Tensor3& grad_out) const {
    if (!learnable()) return {};
    require_same_shape(t.shape(), grad_out.shape(), "theta_gradient");
    const std::size_t n = channels;
    std::vector<double> g(n * n, 0.0);
    for (std::size_t base = 0; base < t.size(); base += n)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += grad_out[base + i] * t[base + j];
    return g;
}

void InnerOptConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw InvalidArgument("learning rate must be finite and nonnegative");
    }
    if (!(ptv_weight >= 0.0)) throw InvalidArgument("ptv weight must be nonnegative");
    if (!(l1_epsilon > 0.0)) throw InvalidArgument("l1 smoothing epsilon must be positive");
    if (optimizer == InnerOptimizerKind::Adam &&
        !(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_epsilon > 0.0)) {
        throw InvalidArgument("invalid Adam hyperparameters");
    }
}

Tensor3 compose(const FactorPair& f, const TransformG& g) {
    f.validate();
    return g.apply(tprod(f.a, f.b));
}

double ptv(const FactorPair& f) {
    return sum_differences(f, [](double d) { return std::abs(d); });
}

double ptv_smoothed(const FactorPair& f, double eps) {
    return sum_differences(f, [eps](double d) { return smooth_abs(d, eps); });
}

double subproblem1_loss(const FactorPair& f, const TransformG& g, const Subproblem1Data& data,
                        const InnerOptConfig& cfg) {
    check_data(f, data);
    const Tensor3 z = compose(f, g);
    double loss = data_terms(z, data, nullptr);
    if (cfg.ptv_weight != 0.0) loss += cfg.ptv_weight * ptv_smoothed(f, cfg.l1_epsilon);
    return loss;
}

Subproblem1Gradient subproblem1_gradient(const FactorPair& f, const TransformG& g, const Subproblem1Data& data,
                                         const InnerOptConfig& cfg) {
    check_data(f, data);
    const SpectralTensor3 a_hat = dft_mode3(f.a);
    const SpectralTensor3 b_hat = dft_mode3(f.b);
    const Tensor3 p = idft_mode3(facewise_product(a_hat, Face::Plain, b_hat, Face::Plain));
    const Tensor3 z = g.apply(p);

    Subproblem1Gradient out;
    Tensor3 grad_z(z.shape());
    out.loss = data_terms(z, data, &grad_z);

    out.theta = g.theta_gradient(p, grad_z);
    const SpectralTensor3 gp_hat = dft_mode3(g.pullback(grad_z));
    // dJ/dA = G * B^T and dJ/dB = A^T * G under the t-product; facewise these
    // are G_k B_k^H and A_k^H G_k.
    out.a = idft_mode3(facewise_product(gp_hat, Face::Plain, b_hat, Face::Adjoint));
    out.b = idft_mode3(facewise_product(a_hat, Face::Adjoint, gp_hat, Face::Plain));

    if (cfg.ptv_weight != 0.0) {
        add_ptv_gradient(f, cfg.ptv_weight, cfg.l1_epsilon, out.a, out.b);
        out.loss += cfg.ptv_weight * ptv_smoothed(f, cfg.l1_epsilon);
    }
    return out;
}

FactorUpdate subproblem1_step(const FactorPair& f, const TransformG& g, const Subproblem1Data& data,
                              const InnerOptConfig& cfg) {
    InnerOptConfig plain = cfg;
    plain.optimizer = InnerOptimizerKind::GradientDescent;
    InnerOptimizer opt(plain);
    return opt.step(f, g, data);
}

InnerOptimizer::InnerOptimizer(InnerOptConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void InnerOptimizer::adam_update(std::span<double> params, std::span<const double> grad, Moments& m) const {
    if (m.first.size() != params.size()) {
        m.first.assign(params.size(), 0.0);
        m.second.assign(params.size(), 0.0);
    }
    const double b1 = cfg_.adam_beta1;
    const double b2 = cfg_.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m.first[i] = b1 * m.first[i] + (1.0 - b1) * grad[i];
        m.second[i] = b2 * m.second[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = m.first[i] / c1;
        const double vhat = m.second[i] / c2;
        params[i] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.adam_epsilon);
    }
}

FactorUpdate InnerOptimizer::step(const FactorPair& f, const TransformG& g, const Subproblem1Data& data) {
    Subproblem1Gradient grad = subproblem1_gradient(f, g, data, cfg_);
    check_finite(grad.a.data(), "A");
    check_finite(grad.b.data(), "B");
    check_finite(grad.theta, "theta");
    last_loss_ = grad.loss;

    FactorUpdate next{f, g};
    if (cfg_.optimizer == InnerOptimizerKind::GradientDescent) {
        const double lr = cfg_.learning_rate;
        auto descend = [lr](std::span<double> p, std::span<const double> d) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * d[i];
        };
        descend(next.factors.a.data(), grad.a.data());
        descend(next.factors.b.data(), grad.b.data());
        if (g.learnable()) descend(next.transform.theta, grad.theta);
    } else {
        ++t_;
        adam_update(next.factors.a.data(), grad.a.data(), a_moments_);
        adam_update(next.factors.b.data(), grad.b.data(), b_moments_);
        if (g.learnable()) adam_update(next.transform.theta, grad.theta, theta_moments_);
    }
    return next;
}

FactorPair init_factors(std::size_t height, std::size_t width, std::size_t channels, std::size_t rank,
                        double data_rms, std::uint64_t seed) {
    if (rank == 0 || rank > std::min(height, width)) {
        throw BadRank("rank " + std::to_string(rank) + " outside [1, min(H, W) = " +
                      std::to_string(std::min(height, width)) + "]");
    }
    if (!(data_rms >= 0.0) || !std::isfinite(data_rms)) throw InvalidArgument("data rms must be finite");
    const double stddev = std::sqrt(data_rms) / std::sqrt(static_cast<double>(rank));
    SplitMix64 rng(seed);
    FactorPair f{Tensor3(Shape{height, rank, channels}), Tensor3(Shape{rank, width, channels})};
    for (double& v : f.a.data()) v = stddev * rng.gaussian();
    for (double& v : f.b.data()) v = stddev * rng.gaussian();
    return f;
}

}  // namespace mptc
