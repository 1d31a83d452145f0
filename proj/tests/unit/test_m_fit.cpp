#include <cmath>
#include <limits>
#include <random>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/error.hpp"
#include "cmpstomo/m_fit.hpp"
#include "cmpstomo/nelder_mead.hpp"
#include "cmpstomo/predict.hpp"
#include "test_support.hpp"

using namespace cmpstomo;

namespace {

double rosenbrock(const RVector& x) {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
}

struct Truth {
    CmpsState state;
    CMatrix m;
    MFitProblem problem;
};

Truth make_truth(std::uint64_t seed, bool real, Grid1D grid = Grid1D{0.0, 0.2, 12}) {
    std::mt19937_64 rng(seed);
    Truth t{cmpstomo::testing::random_normalized_state(2, rng, real), {}, {}};
    const auto spec = spectral_decompose(t.state);
    const auto res = residues_in_diagonal_basis(t.state, spec);
    t.m = res.m;
    t.problem.spectrum.lambda = spec.eigenvalues;
    t.problem.spectrum.residues = two_point_residues(res.m, res.m_inv);
    t.problem.target4 = tabulate_exact(t.state, 4, grid);
    t.problem.target2 = tabulate_exact(t.state, 2, grid);
    t.problem.real_m = real;
    t.problem.seed = seed;
    return t;
}

// c D M D^-1 with D compatible with the real form: conjugate partners get
// conjugate entries and D[0] is free of the residue constraint.
CMatrix regauge(const CMatrix& m, const CVector& lambda, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.5, 2.0), ph(-3.0, 3.0);
    CVector d(m.rows());
    for (Index k = 0; k < m.rows(); ++k) {
        const bool partner = k > 0 && std::abs(lambda[k] - std::conj(lambda[k - 1])) < 1e-9 &&
                             lambda[k].imag() != 0.0;
        d[k] = partner ? std::conj(d[k - 1]) : std::polar(u(rng), lambda[k].imag() != 0.0 ? ph(rng) : 0.0);
    }
    return u(rng) * d.asDiagonal() * m * d.cwiseInverse().asDiagonal();
}

}  // namespace

TEST(NelderMead, MinimizesRosenbrock) {
    const auto r = nelder_mead(rosenbrock, RVector::Constant(2, -1.0), {.initial_step = 0.5});
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.x[0], 1.0, 1e-6);
    EXPECT_NEAR(r.x[1], 1.0, 1e-6);
}

TEST(NelderMead, TraceIsMonotoneAndRunIsDeterministic) {
    NelderMeadOptions o;
    o.record_trace = true;
    o.adaptive = true;
    auto f = [](const RVector& x) { return (x.array() - 0.3).square().sum() + std::pow(x[0] * x[1], 2); };
    const auto a = nelder_mead(f, RVector::Constant(5, 1.0), o);
    const auto b = nelder_mead(f, RVector::Constant(5, 1.0), o);
    ASSERT_FALSE(a.trace.empty());
    for (std::size_t i = 1; i < a.trace.size(); ++i) EXPECT_LE(a.trace[i], a.trace[i - 1]);
    EXPECT_EQ(a.value, b.value);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.evaluations, b.evaluations);
}

TEST(NelderMead, NonFiniteValuesAreAvoided) {
    auto f = [](const RVector& x) {
        return x[0] < 0.0 ? std::numeric_limits<double>::quiet_NaN() : std::pow(x[0] - 0.5, 2) + x[1] * x[1];
    };
    const auto r = nelder_mead(f, RVector::Constant(2, 0.2));
    EXPECT_NEAR(r.x[0], 0.5, 1e-5);
    EXPECT_TRUE(std::isfinite(r.value));
}

TEST(NelderMead, EvaluationBudget) {
    const auto r = nelder_mead(rosenbrock, RVector::Constant(2, -1.0), {.max_evaluations = 50});
    EXPECT_FALSE(r.converged);
    EXPECT_LE(r.evaluations, 55);
}

TEST(MGauge, ParseNames) {
    EXPECT_EQ(parse_gauge("corner"), MGauge::Corner);
    EXPECT_EQ(parse_gauge("first-row"), MGauge::FirstRow);
    EXPECT_EQ(parse_gauge("residues"), MGauge::Residues);
    EXPECT_EQ(to_string(MGauge::FirstRow), "first-row");
    EXPECT_THROW(parse_gauge("diagonal"), Error);
}

TEST(MParametrization, ComplexRoundTrip) {
    const auto t = make_truth(1, false);
    for (auto g : {MGauge::Corner, MGauge::FirstRow, MGauge::Residues}) {
        const MParametrization p(t.problem.spectrum, false, g);
        const CMatrix gauged = apply_gauge(t.m, p);
        EXPECT_LT((p.unpack(p.pack(t.m)) - gauged).norm(), 1e-10 * gauged.norm()) << to_string(g);
    }
    EXPECT_EQ(MParametrization(t.problem.spectrum, false, MGauge::Residues).size(), 18);
    EXPECT_EQ(MParametrization(t.problem.spectrum, false, MGauge::Corner).size(), 30);
}

TEST(MParametrization, RealFormRoundTrip) {
    const auto t = make_truth(2, true);
    const MParametrization p(t.problem.spectrum, true, MGauge::Residues);
    const CMatrix gauged = apply_gauge(t.m, p);
    EXPECT_LT((p.unpack(p.pack(t.m)) - gauged).norm(), 1e-10 * gauged.norm());
    // Residues gauge reproduces the fitted two-point residues exactly.
    const CVector r = two_point_residues(gauged, gauged.inverse());
    EXPECT_LT((r - t.problem.spectrum.residues).norm(), 1e-12);
}

TEST(MObjective, TruthIsGlobalMinimum) {
    for (bool real : {false, true}) {
        const auto t = make_truth(3, real);
        const MObjective f(t.problem);
        EXPECT_LT(f(t.m), 1e-18) << (real ? "real" : "complex");
        CMatrix identity = CMatrix::Identity(t.m.rows(), t.m.cols());
        EXPECT_GT(f(identity), 1e-3);
    }
}

TEST(MObjective, FactoredFormMatchesDirectSum) {
    const auto t = make_truth(4, false);
    std::mt19937_64 rng(4);
    const MObjective f(t.problem);
    for (int i = 0; i < 5; ++i) {
        const CMatrix m = t.m + 0.1 * cmpstomo::testing::random_complex(t.m.rows(), t.m.cols(), rng);
        const double fast = f(m), slow = f.direct(m);
        EXPECT_LT(std::abs(fast - slow), 1e-9 * slow);
    }
}

TEST(MObjective, GaugeInvariance) {
    std::mt19937_64 rng(9);
    for (int i = 0; i < 5; ++i) {
        const auto t = make_truth(10 + static_cast<std::uint64_t>(i), false);
        const MObjective f(t.problem);
        const CMatrix m = t.m + 0.05 * cmpstomo::testing::random_complex(t.m.rows(), t.m.cols(), rng);
        const double base = f(m);
        const double moved = f(regauge(m, t.problem.spectrum.lambda, rng));
        EXPECT_LT(std::abs(moved - base), 1e-12 * base);
    }
}

TEST(MObjective, SingularCandidateIsInfinite) {
    const auto t = make_truth(5, false);
    EXPECT_TRUE(std::isinf(objective(CMatrix::Ones(4, 4), t.problem)));
}

TEST(FitM, RecoversRealStateInRealForm) {
    auto t = make_truth(6, true);
    t.problem.num_starts = 10;
    const auto r = fit_m(t.problem);
    EXPECT_LT(r.objective, 1e-16);
    EXPECT_LT(r.eps4, 1e-6);
    EXPECT_LT(r.eps2, 1e-6);
    EXPECT_EQ(r.num_starts, 10);

    ReconstructedModel model{t.problem.spectrum.lambda, r.m, {}};
    const Grid1D grid = t.problem.target4.grid();
    EXPECT_LT(epsilon_metric(tabulate_exact(t.state, 6, grid), predict(model, 6, grid)).mean, 1e-5);
}

TEST(FitM, DeterministicAcrossRunsAndThreads) {
    auto t = make_truth(7, true);
    t.problem.num_starts = 6;
    t.problem.polish_restarts = 2;
    const auto a = fit_m(t.problem);
    const auto b = fit_m(t.problem);
    t.problem.threads = 3;
    const auto c = fit_m(t.problem);
    EXPECT_EQ(a.objective, b.objective);
    EXPECT_EQ(a.m, b.m);
    EXPECT_EQ(a.start_index, c.start_index);
    EXPECT_EQ(a.objective, c.objective);
}

TEST(FitM, RejectsInconsistentProblem) {
    auto t = make_truth(8, false);
    t.problem.spectrum.residues.resize(2);
    EXPECT_THROW(fit_m(t.problem), Error);
}
