#include <gtest/gtest.h>

#include <cmath>

#include "mptc/decomposition.hpp"
#include "mptc/errors.hpp"
#include "mptc/spectral.hpp"
#include "support.hpp"

using namespace mptc;
using mptc::testing::random_tensor;

namespace {

struct Problem {
    FactorPair f;
    TransformG g;
    Tensor3 x, o, m1;
    MaskTensor mask;
    double rho;
};

Problem make_problem(std::uint64_t seed, Shape s, std::size_t r, bool learnable) {
    SplitMix64 rng(seed);
    Problem p{
        .f = {random_tensor({s.height, r, s.channels}, seed + 1), random_tensor({r, s.width, s.channels}, seed + 2)},
        .g = learnable ? TransformG::learnable_linear(s.channels) : TransformG::identity(),
        .x = random_tensor(s, seed + 3),
        .o = {},
        .m1 = random_tensor(s, seed + 4, -0.5, 0.5),
        .mask = gen_mask(s.height, s.width, s.channels, 0.5, seed + 5),
        .rho = 0.5 + rng.uniform(),
    };
    p.o = apply_mask(random_tensor(s, seed + 6), p.mask);
    if (learnable) {
        for (double& t : p.g.theta) t += 0.3 * (rng.uniform() - 0.5);
    }
    return p;
}

// Term-by-term loss, built from the direct t-product and explicit loops.
double oracle_loss(const Problem& p, const InnerOptConfig& cfg) {
    Tensor3 z = tprod_direct(p.f.a, p.f.b);
    if (p.g.learnable()) {
        Tensor3 mixed(z.shape());
        const std::size_t c = z.channels();
        for (std::size_t h = 0; h < z.height(); ++h)
            for (std::size_t w = 0; w < z.width(); ++w)
                for (std::size_t i = 0; i < c; ++i)
                    for (std::size_t j = 0; j < c; ++j) mixed(h, w, i) += p.g.theta[i * c + j] * z(h, w, j);
        z = mixed;
    }
    double fit = 0.0, lin = 0.0, quad = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (p.mask.observed(i)) fit += (z[i] - p.o[i]) * (z[i] - p.o[i]);
        lin += (p.x[i] - z[i]) * p.m1[i];
        quad += (p.x[i] - z[i]) * (p.x[i] - z[i]);
    }
    double tv = 0.0;
    const double e = cfg.l1_epsilon;
    auto sa = [e](double d) { return std::sqrt(d * d + e * e) - e; };
    for (std::size_t h = 0; h + 1 < p.f.a.height(); ++h)
        for (std::size_t k = 0; k < p.f.a.width(); ++k)
            for (std::size_t c = 0; c < p.f.a.channels(); ++c) tv += sa(p.f.a(h + 1, k, c) - p.f.a(h, k, c));
    for (std::size_t k = 0; k < p.f.b.height(); ++k)
        for (std::size_t w = 0; w + 1 < p.f.b.width(); ++w)
            for (std::size_t c = 0; c < p.f.b.channels(); ++c) tv += sa(p.f.b(k, w + 1, c) - p.f.b(k, w, c));
    return fit + cfg.ptv_weight * tv + lin + 0.5 * p.rho * quad;
}

double loss_of(const Problem& p, const InnerOptConfig& cfg) {
    return subproblem1_loss(p.f, p.g, Subproblem1Data{p.x, p.o, p.mask, p.m1, p.rho}, cfg);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(Subproblem1, LossMatchesTermByTermOracle) {
    InnerOptConfig cfg;
    cfg.ptv_weight = 0.7;
    cfg.l1_epsilon = 1e-2;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        for (bool learnable : {false, true}) {
            Problem p = make_problem(seed * 10, {4, 3, 5}, 2, learnable);
            EXPECT_NEAR(loss_of(p, cfg), oracle_loss(p, cfg), 1e-10 * std::abs(oracle_loss(p, cfg)));
        }
    }
}

TEST(Subproblem1, GradientMatchesCentralDifferences) {
    InnerOptConfig cfg;
    cfg.ptv_weight = 0.3;
    cfg.l1_epsilon = 0.05;
    const double h = 1e-5;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const bool learnable = seed % 2 == 0;
        Problem p = make_problem(seed * 100, {3, 4, 3 + seed % 3}, 2, learnable);
        const auto grad = subproblem1_gradient(p.f, p.g, {p.x, p.o, p.mask, p.m1, p.rho}, cfg);
        EXPECT_NEAR(grad.loss, oracle_loss(p, cfg), 1e-9 * std::abs(grad.loss));

        auto check = [&](std::span<double> params, std::span<const double> analytic, const char* name) {
            for (std::size_t i = 0; i < params.size(); ++i) {
                const double saved = params[i];
                params[i] = saved + h;
                const double up = oracle_loss(p, cfg);
                params[i] = saved - h;
                const double down = oracle_loss(p, cfg);
                params[i] = saved;
                const double fd = (up - down) / (2 * h);
                EXPECT_LT(rel_err(analytic[i], fd), 1e-5) << name << "[" << i << "] seed " << seed;
            }
        };
        check(p.f.a.data(), grad.a.data(), "A");
        check(p.f.b.data(), grad.b.data(), "B");
        if (learnable) check(p.g.theta, grad.theta, "theta");
        else EXPECT_TRUE(grad.theta.empty());
    }
}

TEST(Subproblem1, ZeroLearningRateLeavesParametersUnchanged) {
    Problem p = make_problem(7, {4, 4, 3}, 2, true);
    InnerOptConfig cfg;
    cfg.learning_rate = 0.0;
    FactorUpdate u = subproblem1_step(p.f, p.g, {p.x, p.o, p.mask, p.m1, p.rho}, cfg);
    EXPECT_EQ(u.factors.a, p.f.a);
    EXPECT_EQ(u.factors.b, p.f.b);
    EXPECT_EQ(u.transform.theta, p.g.theta);
}

TEST(Subproblem1, SmallStepDecreasesLoss) {
    Problem p = make_problem(8, {5, 4, 3}, 2, false);
    InnerOptConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.ptv_weight = 0.1;
    const Subproblem1Data data{p.x, p.o, p.mask, p.m1, p.rho};
    const double before = subproblem1_loss(p.f, p.g, data, cfg);
    FactorUpdate u = subproblem1_step(p.f, p.g, data, cfg);
    EXPECT_LT(subproblem1_loss(u.factors, u.transform, data, cfg), before);
}

TEST(Subproblem1, AdamDecreasesLossOverSteps) {
    Problem p = make_problem(9, {5, 4, 3}, 2, true);
    InnerOptConfig cfg;
    cfg.optimizer = InnerOptimizerKind::Adam;
    cfg.learning_rate = 1e-2;
    const Subproblem1Data data{p.x, p.o, p.mask, p.m1, p.rho};
    InnerOptimizer opt(cfg);
    const double before = subproblem1_loss(p.f, p.g, data, cfg);
    FactorPair f = p.f;
    TransformG g = p.g;
    for (int i = 0; i < 50; ++i) {
        FactorUpdate u = opt.step(f, g, data);
        f = u.factors;
        g = u.transform;
    }
    EXPECT_LT(subproblem1_loss(f, g, data, cfg), before);
}

TEST(Subproblem1, NonFiniteGradientIsReported) {
    Problem p = make_problem(10, {3, 3, 2}, 1, false);
    p.x[0] = std::numeric_limits<double>::infinity();
    InnerOptConfig cfg;
    EXPECT_THROW((void)subproblem1_step(p.f, p.g, {p.x, p.o, p.mask, p.m1, p.rho}, cfg), NonFiniteGradient);
}

TEST(Subproblem1, ShapeMismatchIsRejected) {
    Problem p = make_problem(11, {3, 3, 2}, 1, false);
    Tensor3 wrong(3, 4, 2);
    InnerOptConfig cfg;
    EXPECT_THROW((void)subproblem1_loss(p.f, p.g, {wrong, p.o, p.mask, p.m1, p.rho}, cfg), ShapeMismatch);
}

TEST(Ptv, ConstantFactorsGiveZero) {
    FactorPair f{Tensor3(4, 2, 3, 1.5), Tensor3(2, 5, 3, -0.25)};
    EXPECT_EQ(ptv(f), 0.0);
    EXPECT_EQ(ptv_smoothed(f, 1e-3), 0.0);
}

TEST(Ptv, HandComputedCase) {
    // A differs along height only, B along width only.
    Tensor3 a(3, 1, 1);
    a[0] = 0.0;
    a[1] = 2.0;
    a[2] = -1.0;
    Tensor3 b(1, 3, 1);
    b[0] = 1.0;
    b[1] = 1.0;
    b[2] = 4.0;
    FactorPair f{a, b};
    EXPECT_DOUBLE_EQ(ptv(f), 2.0 + 3.0 + 0.0 + 3.0);
}

TEST(Ptv, SmoothedApproachesExact) {
    FactorPair f{random_tensor({5, 3, 2}, 21), random_tensor({3, 6, 2}, 22)};
    const double exact = ptv(f);
    EXPECT_LT(ptv_smoothed(f, 1e-3), exact);
    EXPECT_NEAR(ptv_smoothed(f, 1e-9), exact, 1e-6);
}

TEST(InitFactors, ScaleAndDeterminism) {
    const double rms = 0.49;
    FactorPair f = init_factors(40, 40, 4, 4, rms, 5);
    EXPECT_EQ(f.a.shape(), (Shape{40, 4, 4}));
    EXPECT_EQ(f.b.shape(), (Shape{4, 40, 4}));
    const double expected_std = std::sqrt(rms) / 2.0;
    const double n = static_cast<double>(f.a.size());
    EXPECT_NEAR(fro_norm(f.a) / std::sqrt(n), expected_std, 0.05 * expected_std);
    FactorPair g = init_factors(40, 40, 4, 4, rms, 5);
    EXPECT_EQ(f.a, g.a);
    EXPECT_EQ(f.b, g.b);
}

TEST(InitFactors, RankBounds) {
    EXPECT_THROW((void)init_factors(4, 6, 2, 0, 1.0, 1), BadRank);
    EXPECT_THROW((void)init_factors(4, 6, 2, 5, 1.0, 1), BadRank);
    EXPECT_NO_THROW((void)init_factors(4, 6, 2, 4, 1.0, 1));
}

TEST(TransformG, IdentityAndPullbackAdjoint) {
    Tensor3 t = random_tensor({3, 3, 4}, 31);
    EXPECT_EQ(TransformG::identity().apply(t), t);
    TransformG g = TransformG::learnable_linear(4);
    EXPECT_EQ(g.apply(t), t);
    SplitMix64 rng(4);
    for (double& v : g.theta) v = rng.uniform() - 0.5;
    Tensor3 u = random_tensor({3, 3, 4}, 32);
    // <g(t), u> = <t, g^T(u)>
    EXPECT_NEAR(inner(g.apply(t), u), inner(t, g.pullback(u)), 1e-12);
}
