#pragma once

#include <cstdint>
#include <vector>

#include "mptc/mask.hpp"
#include "mptc/tensor.hpp"

namespace mptc {

/// Low-rank factors: A is H x r x C, B is r x W x C, and A * B (t-product)
/// is the H x W x C estimate.
struct FactorPair {
    Tensor3 a;
    Tensor3 b;

    [[nodiscard]] std::size_t rank() const { return a.width(); }
    [[nodiscard]] Shape output_shape() const { return {a.height(), b.width(), a.channels()}; }
    /// Throws ShapeMismatch if the factors do not compose.
    void validate() const;
    [[nodiscard]] bool all_finite() const { return a.all_finite() && b.all_finite(); }
};

/// The map g applied after the t-product. Identity by default; the
/// learnable-linear mode mixes channels with a C x C matrix theta (row-major)
/// applied to every tube, initialized to the identity.
struct TransformG {
    enum class Mode { Identity, LearnableLinear };

    Mode mode = Mode::Identity;
    std::size_t channels = 0;
    std::vector<double> theta;

    static TransformG identity() { return {}; }
    static TransformG learnable_linear(std::size_t channels);

    [[nodiscard]] bool learnable() const { return mode == Mode::LearnableLinear; }
    [[nodiscard]] Tensor3 apply(const Tensor3& t) const;
    /// Pulls a gradient with respect to g(t) back to t (theta transposed).
    [[nodiscard]] Tensor3 pullback(const Tensor3& grad_out) const;
    /// Gradient with respect to theta: sum over tubes of grad_out(h,w,:) t(h,w,:)^T.
    [[nodiscard]] std::vector<double> theta_gradient(const Tensor3& t, const Tensor3& grad_out) const;
};

enum class InnerOptimizerKind { GradientDescent, Adam };

struct InnerOptConfig {
    double learning_rate = 1e-3;
    std::size_t steps = 15;
    double ptv_weight = 0.0;
    /// Smoothing of |d| in the factor-gradient penalty, in data units.
    double l1_epsilon = 1e-6;
    InnerOptimizerKind optimizer = InnerOptimizerKind::GradientDescent;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    void validate() const;
};

/// Everything subproblem 1 needs besides the parameters being optimized.
/// Non-owning; the referenced tensors must outlive the view.
struct Subproblem1Data {
    const Tensor3& x;
    const Tensor3& observed;
    const MaskTensor& mask;
    const Tensor3& m1;
    double rho;
};

/// g(A * B).
[[nodiscard]] Tensor3 compose(const FactorPair& f, const TransformG& g);

/// Exact factor-gradient penalty: l1 norm of the height differences of A plus
/// the l1 norm of the width differences of B (forward differences, the last
/// row/column has no difference).
[[nodiscard]] double ptv(const FactorPair& f);

/// Smoothed penalty sum(sqrt(d^2 + eps^2) - eps) over the same differences.
/// Zero for constant factors, tends to ptv() as eps -> 0.
[[nodiscard]] double ptv_smoothed(const FactorPair& f, double eps);

/// J(A, B) = ||P_Omega(g(A*B) - O)||^2 + alpha PTV_eps(A, B)
///           + <X - g(A*B), M1> + rho/2 ||X - g(A*B)||^2.
[[nodiscard]] double subproblem1_loss(const FactorPair& f, const TransformG& g, const Subproblem1Data& data,
                                      const InnerOptConfig& cfg);

struct Subproblem1Gradient {
    Tensor3 a;
    Tensor3 b;
    std::vector<double> theta;  // empty unless g is learnable
    double loss = 0.0;
};

/// Analytic gradient of subproblem1_loss with respect to A, B and theta.
[[nodiscard]] Subproblem1Gradient subproblem1_gradient(const FactorPair& f, const TransformG& g,
                                                       const Subproblem1Data& data, const InnerOptConfig& cfg);

struct FactorUpdate {
    FactorPair factors;
    TransformG transform;
};

/// One plain gradient-descent step on J with cfg.learning_rate. Inputs are
/// not modified. Throws NonFiniteGradient on a non-finite gradient entry.
[[nodiscard]] FactorUpdate subproblem1_step(const FactorPair& f, const TransformG& g, const Subproblem1Data& data,
                                            const InnerOptConfig& cfg);

/// Stateful first-order optimizer for subproblem 1: plain descent or Adam
/// (moments persist across calls, i.e. across outer iterations of a solve).
class InnerOptimizer {
 public:
    explicit InnerOptimizer(InnerOptConfig cfg);

    [[nodiscard]] FactorUpdate step(const FactorPair& f, const TransformG& g, const Subproblem1Data& data);
    [[nodiscard]] const InnerOptConfig& config() const { return cfg_; }
    [[nodiscard]] double last_loss() const { return last_loss_; }

 private:
    struct Moments {
        std::vector<double> first;
        std::vector<double> second;
    };
    void adam_update(std::span<double> params, std::span<const double> grad, Moments& m) const;

    InnerOptConfig cfg_;
    Moments a_moments_;
    Moments b_moments_;
    Moments theta_moments_;
    std::uint64_t t_ = 0;
    double last_loss_ = 0.0;
};

/// Gaussian factors with standard deviation sqrt(data_rms) / sqrt(r), where
/// data_rms = ||O||_F / sqrt(H W C). Deterministic in seed. Throws BadRank
/// unless 1 <= r <= min(H, W).
[[nodiscard]] FactorPair init_factors(std::size_t height, std::size_t width, std::size_t channels,
                                      std::size_t rank, double data_rms, std::uint64_t seed);

}  // namespace mptc
