#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mptc/decomposition.hpp"
#include "mptc/denoise.hpp"
#include "mptc/mask.hpp"
#include "mptc/tensor.hpp"

namespace mptc {

struct SolverConfig {
    std::size_t outer_iterations = 100;  ///< K
    double tolerance = 0.01;             ///< stop once ||X^i - X^{i-1}|| / ||X^{i-1}|| <= tolerance
    std::size_t rank = 10;
    double rho = 1.0;
    double psi = 1.0;
    double sigma1 = 0.1;  ///< local (R_L) strength
    double sigma2 = 0.1;  ///< non-local (R_N) strength
    InnerOptConfig inner = default_inner();
    TransformG::Mode transform = TransformG::Mode::Identity;
    DenoiserSpec local = default_local();
    DenoiserSpec nonlocal = default_nonlocal();
    bool enable_local = true;
    bool enable_nonlocal = true;
    /// Overwrite observed entries of the returned X with O after the solve.
    bool clamp_observed = false;
    std::uint64_t seed = 0;

    void validate() const;

    static InnerOptConfig default_inner();
    static DenoiserSpec default_local();
    static DenoiserSpec default_nonlocal();
};

struct IterationRecord {
    std::size_t iteration = 0;
    double rel_change = 0.0;
    double loss = 0.0;  ///< smoothed J after the last inner step
    std::optional<double> psnr_x;
    std::optional<double> ssim_x;
    std::optional<double> psnr_y;
    std::optional<double> ssim_y;
};

struct SolverState {
    Tensor3 x;
    Tensor3 y;
    Tensor3 m1;
    Tensor3 m2;
    FactorPair factors;
    TransformG g;
    std::size_t iteration = 0;
    std::vector<IterationRecord> history;
};

struct ReconstructionReport {
    Tensor3 x;
    Tensor3 y;
    Tensor3 low_rank;  ///< g(A * B)
    std::size_t iterations = 0;
    bool converged = false;  ///< stopped on the tolerance rather than on K
    std::vector<IterationRecord> history;
    SolverConfig config;
    double seconds = 0.0;
    std::size_t local_calls = 0;
    std::size_t nonlocal_calls = 0;
};

/// Optional ground truth for per-iteration PSNR/SSIM, in the solver's
/// normalized units (peak 1).
struct TraceReference {
    const Tensor3* tensor = nullptr;
};

using ProgressFn = std::function<void(const IterationRecord&)>;

/// ADMM driver: per outer iteration, `inner.steps` factor updates, then the
/// X, Y and multiplier updates. Owns the denoisers and the inner optimizer.
class AdmmSolver {
 public:
    explicit AdmmSolver(SolverConfig cfg);

    /// X = Y = O, M1 = M2 = 0, factors from init_factors(seed).
    [[nodiscard]] SolverState init_state(const Tensor3& observed, const MaskTensor& mask) const;

    /// Runs the inner loop on the factors (and theta) of `state`.
    void update_factors(SolverState& state, const Tensor3& observed, const MaskTensor& mask);

    /// (rho (Z - M1/rho) + psi (Y - M2/psi)) / (rho + psi), Z = g(A * B).
    [[nodiscard]] Tensor3 x_argument(const SolverState& state) const;
    [[nodiscard]] Tensor3 update_x(const SolverState& state);
    [[nodiscard]] Tensor3 update_y(const SolverState& state);
    /// (M1 + rho (X - Z), M2 + psi (X - Y)).
    [[nodiscard]] std::pair<Tensor3, Tensor3> update_multipliers(const SolverState& state) const;

    [[nodiscard]] ReconstructionReport run(const Tensor3& observed, const MaskTensor& mask,
                                           TraceReference reference = {}, const ProgressFn& progress = {});

    [[nodiscard]] const SolverConfig& config() const { return cfg_; }
    [[nodiscard]] std::size_t local_calls() const { return local_.calls(); }
    [[nodiscard]] std::size_t nonlocal_calls() const { return nonlocal_.calls(); }

 private:
    SolverConfig cfg_;
    Denoiser local_;
    Denoiser nonlocal_;
    InnerOptimizer optimizer_;
};

// Free-function forms of the solver steps for one-off use.
[[nodiscard]] SolverState init_state(const Tensor3& observed, const MaskTensor& mask, const SolverConfig& cfg);
[[nodiscard]] Tensor3 update_x(const SolverState& state, const SolverConfig& cfg);
[[nodiscard]] Tensor3 update_y(const SolverState& state, const SolverConfig& cfg);
[[nodiscard]] std::pair<Tensor3, Tensor3> update_multipliers(const SolverState& state, const SolverConfig& cfg);
[[nodiscard]] ReconstructionReport run(const Tensor3& observed, const MaskTensor& mask, const SolverConfig& cfg,
                                       TraceReference reference = {});

}  // namespace mptc
