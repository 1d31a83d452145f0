#include <array>
#include <cmath>
#include <random>
#include <vector>

#include <Eigen/LU>
#include <gtest/gtest.h>
#include <unsupported/Eigen/MatrixFunctions>

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/direct.hpp"
#include "cmpstomo/error.hpp"
#include "test_support.hpp"

using namespace cmpstomo;
using cmpstomo::testing::random_complex;
using cmpstomo::testing::random_normalized_state;
using cmpstomo::testing::rel_diff;

namespace {

CMatrix scalar(Complex z) {
    CMatrix m(1, 1);
    m(0, 0) = z;
    return m;
}

// Element-wise Kronecker product straight from the index definition.
CMatrix kron_oracle(const CMatrix& a, const CMatrix& b) {
    const Index d = a.rows();
    CMatrix out = CMatrix::Zero(d * d, d * d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j)
            for (Index k = 0; k < d; ++k)
                for (Index l = 0; l < d; ++l) out(i * d + j, k * d + l) = a(i, k) * b(j, l);
    return out;
}

std::vector<double> random_positions(std::size_t n, std::mt19937_64& rng, double span) {
    std::uniform_real_distribution<double> u(0.0, span);
    std::vector<double> x(n);
    for (auto& v : x) v = u(rng);
    std::sort(x.begin(), x.end());
    return x;
}

std::vector<double> gaps_of(const std::vector<double>& x) {
    std::vector<double> g;
    for (std::size_t j = 0; j + 1 < x.size(); ++j) g.push_back(x[j + 1] - x[j]);
    return g;
}

}  // namespace

TEST(TransferMatrix, AntiHermitianScalarCancels) {
    const CmpsState s(scalar({0.0, 1.0}), scalar({0.0, 0.0}));
    EXPECT_LT(std::abs(transfer_matrix(s)(0, 0)), 1e-15);
}

TEST(TransferMatrix, NormalizedScalarIsZero) {
    const CmpsState s(scalar(-0.5), scalar(1.0));
    EXPECT_EQ(transfer_matrix(s)(0, 0), Complex(0.0, 0.0));
}

TEST(TransferMatrix, MatchesIndexDefinition) {
    std::mt19937_64 rng(11);
    const CMatrix q = random_complex(2, 2, rng);
    const CMatrix r = random_complex(2, 2, rng);
    const CMatrix id = CMatrix::Identity(2, 2);
    const CMatrix expected =
        kron_oracle(q.conjugate(), id) + kron_oracle(id, q) + kron_oracle(r.conjugate(), r);
    EXPECT_LT((transfer_matrix(CmpsState(q, r)) - expected).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(TransferMatrix, DimensionMismatch) {
    std::mt19937_64 rng(1);
    try {
        CmpsState(random_complex(2, 2, rng), random_complex(3, 3, rng));
        FAIL() << "expected DimensionMismatch";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(Normalize, ScalarExamples) {
    const CmpsState s = normalize(CmpsState(scalar(0.0), scalar(1.0)));
    EXPECT_NEAR(s.q()(0, 0).real(), -0.5, 1e-15);
    EXPECT_LT(std::abs(transfer_matrix(s)(0, 0)), 1e-15);

    const CmpsState already = normalize(CmpsState(scalar(-0.5), scalar(1.0)));
    EXPECT_EQ(already.q()(0, 0), Complex(-0.5, 0.0));
}

TEST(Normalize, RandomStatesHaveZeroDominantEigenvalue) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const CmpsState s = normalize(
            CmpsState(random_complex(2, 2, rng), random_complex(2, 2, rng)));
        Eigen::ComplexEigenSolver<CMatrix> eig(transfer_matrix(s), false);
        EXPECT_NEAR(eig.eigenvalues().real().maxCoeff(), 0.0, 1e-12);
    }
}

TEST(Normalize, DegenerateSpectrumRejected) {
    const CmpsState s(CMatrix::Zero(2, 2), CMatrix::Zero(2, 2));
    try {
        normalize(s);
        FAIL() << "expected DegenerateSpectrum";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateSpectrum);
    }
}

TEST(SpectralDecompose, ScalarState) {
    const auto spec = spectral_decompose(CmpsState(scalar(-0.5), scalar(1.0)));
    ASSERT_EQ(spec.eigenvalues.size(), 1);
    EXPECT_EQ(spec.eigenvalues[0], Complex(0.0, 0.0));
    EXPECT_TRUE(spec.normalized);
}

TEST(SpectralDecompose, InvariantsOnRandomStates) {
    std::mt19937_64 rng(7);
    for (Index d : {1, 2, 3}) {
        for (int trial = 0; trial < 10; ++trial) {
            const CmpsState s = random_normalized_state(d, rng);
            const CMatrix t = transfer_matrix(s);
            const auto spec = spectral_decompose(s);
            EXPECT_TRUE(spec.normalized);
            const CMatrix lhs = t * spec.right;
            const CMatrix rhs = spec.right * spec.eigenvalues.asDiagonal();
            EXPECT_LT((lhs - rhs).norm() / std::max(t.norm(), 1.0), 1e-10);
            EXPECT_LT((spec.left_inverse * spec.right - CMatrix::Identity(d * d, d * d))
                          .cwiseAbs()
                          .maxCoeff(),
                      1e-10);
            EXPECT_LT(std::abs(spec.eigenvalues.sum() - t.trace()), 1e-10);
            for (Index k = 1; k < d * d; ++k) {
                EXPECT_LT(spec.eigenvalues[k].real(), 0.0);
                EXPECT_GE(spec.eigenvalues[k - 1].real(), spec.eigenvalues[k].real() - 1e-9);
            }
        }
    }
}

TEST(SpectralDecompose, RealStatesHaveConjugatePairs) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 20; ++trial) {
        const CmpsState s = random_normalized_state(2, rng, /*real=*/true);
        const CVector lambda = spectral_decompose(s).eigenvalues;
        for (Index k = 0; k < lambda.size(); ++k) {
            double best = 1e300;
            for (Index l = 0; l < lambda.size(); ++l)
                best = std::min(best, std::abs(lambda[l] - std::conj(lambda[k])));
            EXPECT_LT(best, 1e-10);
        }
    }
}

TEST(SpectralDecompose, DefectiveTransferMatrixRejected) {
    CMatrix q = CMatrix::Zero(2, 2);
    q(0, 1) = 1.0;
    try {
        spectral_decompose(CmpsState(q, CMatrix::Zero(2, 2)));
        FAIL() << "expected IllConditionedBasis";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::IllConditionedBasis);
    }
}

TEST(Residues, ScalarExamples) {
    for (double rv : {1.0, 4.0}) {
        const CmpsState s = normalize(CmpsState(scalar(0.0), scalar(rv)));
        const auto res = residues_in_diagonal_basis(s, spectral_decompose(s));
        EXPECT_NEAR(std::abs(res.m(0, 0) - 1.0), 0.0, 1e-14);
        EXPECT_NEAR(std::abs(res.m_inv(0, 0) - 1.0), 0.0, 1e-14);
    }
}

TEST(Residues, InverseAndHalfPowerIdentity) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        const CmpsState s = random_normalized_state(2, rng);
        const auto spec = spectral_decompose(s);
        const auto res = residues_in_diagonal_basis(s, spec);
        EXPECT_LT((res.m * res.m_inv - CMatrix::Identity(4, 4)).cwiseAbs().maxCoeff(), 1e-10);

        // Independent route: Schur square root of R, then the Kronecker of
        // the inverse half powers.
        const CMatrix root = s.r().sqrt();
        const CMatrix expected =
            spec.left_inverse * kron_oracle(root.inverse().conjugate(), root) * spec.right;
        EXPECT_LT((res.m_inv - expected).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_NEAR(std::abs(two_point_residues(res.m, res.m_inv).sum() - 1.0), 0.0, 1e-8);
    }
}

TEST(Residues, RejectsNegativeAndSingularR) {
    const CmpsState neg(scalar(-0.5), scalar(-1.0));
    try {
        residues_in_diagonal_basis(neg, spectral_decompose(neg));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoPrincipalRoot);
    }
    const CmpsState sing(scalar(-0.5), scalar(0.0));
    try {
        half_powers(sing.r());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularR);
    }
}

TEST(DirectEvaluator, ScalarStateIsFlat) {
    const CmpsState s(scalar(-0.5), scalar(1.0));
    for (double tau : {0.0, 0.5, 3.0, 40.0}) {
        const std::array<double, 2> x{1.0, 1.0 + tau};
        EXPECT_NEAR(eval_correlator_direct(s, x).value, 1.0, 1e-14);
    }
}

TEST(DirectEvaluator, CoincidentPointsGiveOne) {
    std::mt19937_64 rng(17);
    for (Index d : {1, 2, 3}) {
        const CmpsState s = random_normalized_state(d, rng);
        const std::array<double, 2> x{0.7, 0.7};
        EXPECT_NEAR(eval_correlator_direct(s, x).value, 1.0, 1e-9);
    }
}

TEST(DirectEvaluator, Errors) {
    std::mt19937_64 rng(19);
    const CmpsState s = random_normalized_state(2, rng);
    const std::array<double, 2> unsorted{1.0, 0.5};
    const std::array<double, 3> odd{0.0, 0.5, 1.0};
    auto kind_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::IoError;
    };
    EXPECT_EQ(kind_of([&] { eval_correlator_direct(s, unsorted); }), ErrorKind::InvalidArgument);
    EXPECT_EQ(kind_of([&] { eval_correlator_direct(s, odd); }), ErrorKind::OddOrderUnavailable);
    const CmpsState shifted(s.q() + CMatrix::Identity(2, 2), s.r());
    const std::array<double, 2> x{0.0, 1.0};
    EXPECT_EQ(kind_of([&] { eval_correlator_direct(shifted, x); }), ErrorKind::NotNormalized);
}

TEST(DiagonalEvaluator, TrivialCases) {
    const CmpsState s(scalar(-0.5), scalar(1.0));
    const auto spec = spectral_decompose(s);
    const auto res = residues_in_diagonal_basis(s, spec);
    const std::array<double, 3> gaps{0.1, 2.0, 7.0};
    EXPECT_NEAR(eval_correlator_diagonal(res, spec, gaps), 1.0, 1e-14);

    std::mt19937_64 rng(23);
    const CmpsState s2 = random_normalized_state(2, rng);
    const auto spec2 = spectral_decompose(s2);
    const auto res2 = residues_in_diagonal_basis(s2, spec2);
    const std::array<double, 5> zero{0, 0, 0, 0, 0};
    EXPECT_NEAR(eval_correlator_diagonal(res2, spec2, zero), 1.0, 1e-9);

    const std::array<double, 1> negative{-0.1};
    EXPECT_THROW(eval_correlator_diagonal(res2, spec2, negative), Error);
}

TEST(DiagonalEvaluator, MatchesDirectSixPoint) {
    std::mt19937_64 rng(29);
    const CmpsState s = random_normalized_state(2, rng);
    const auto spec = spectral_decompose(s);
    const auto res = residues_in_diagonal_basis(s, spec);
    const auto x = random_positions(6, rng, 3.0);
    const double direct = eval_correlator_direct(s, x).value;
    EXPECT_LT(rel_diff(direct, eval_correlator_diagonal(res, spec, gaps_of(x))), 1e-9);
}

// Property: both evaluators agree on random states, orders and simplices.
TEST(Properties, EvaluatorEquivalence) {
    std::mt19937_64 rng(31);
    std::uniform_int_distribution<int> pick_d(1, 3);
    std::uniform_int_distribution<int> pick_n(1, 3);
    for (int trial = 0; trial < 120; ++trial) {
        const Index d = pick_d(rng);
        const std::size_t n = 2 * static_cast<std::size_t>(pick_n(rng));
        const CmpsState s = random_normalized_state(d, rng);
        const auto spec = spectral_decompose(s);
        const auto res = residues_in_diagonal_basis(s, spec);
        const auto x = random_positions(n, rng, 4.0);
        const double direct = eval_correlator_direct(s, x).value;
        const double diag = eval_correlator_diagonal(res, spec, gaps_of(x));
        EXPECT_LT(std::abs(direct - diag) / std::max(std::abs(direct), 1e-12), 1e-9)
            << "d=" << d << " n=" << n;
    }
}

TEST(Properties, GaugeInvarianceOfRho) {
    std::mt19937_64 rng(37);
    std::uniform_int_distribution<Index> idx(0, 3);
    for (int trial = 0; trial < 10; ++trial) {
        const CmpsState s = random_normalized_state(2, rng);
        const auto res = residues_in_diagonal_basis(s, spectral_decompose(s));
        const CVector dvec = random_complex(4, 1, rng).col(0).array() + Complex(1.5, 0.0);
        const Complex c = random_complex(1, 1, rng)(0, 0) + Complex(0.5, 0.5);
        const CMatrix m2 = c * dvec.asDiagonal() * res.m * dvec.cwiseInverse().asDiagonal();
        const CMatrix m2_inv = m2.inverse();
        for (int rep = 0; rep < 20; ++rep) {
            const std::array<Index, 5> k{idx(rng), idx(rng), idx(rng), idx(rng), idx(rng)};
            const Complex a = rho_coefficient(res.m, res.m_inv, k);
            const Complex b = rho_coefficient(m2, m2_inv, k);
            EXPECT_LT(std::abs(a - b), 1e-10 * std::max(1.0, std::abs(a)));
        }
    }
}

TEST(Properties, RealStatesGiveRealCorrelators) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const CmpsState s = random_normalized_state(2, rng, /*real=*/true);
        const auto x = random_positions(4, rng, 3.0);
        EXPECT_LT(std::abs(eval_correlator_direct(s, x).discarded_imag), 1e-9);
        const auto spec = spectral_decompose(s);
        const auto res = residues_in_diagonal_basis(s, spec);
        EXPECT_LT(std::abs(correlator_chain(res.m, res.m_inv, spec.eigenvalues, gaps_of(x)).imag()),
                  1e-9);
    }
}

TEST(Properties, TwoPointDecayRateIsSpectralGap) {
    std::mt19937_64 rng(43);
    int checked = 0;
    while (checked < 5) {
        const CmpsState s = random_normalized_state(2, rng);
        const auto spec = spectral_decompose(s);
        const auto res = residues_in_diagonal_basis(s, spec);
        const CVector r = two_point_residues(res.m, res.m_inv);
        const Complex l2 = spec.eigenvalues[1];
        // Pick states whose slowest decaying mode is real, visible and
        // well separated from the next one.
        if (std::abs(l2.imag()) > 1e-9 || std::abs(r[1]) < 1e-3 ||
            spec.eigenvalues[2].real() > 2.0 * l2.real())
            continue;
        const double g = -l2.real();
        const DirectEvaluator direct(s);
        const std::array<double, 2> far{0.0, 200.0 / g};
        const double plateau = direct(far).value;
        std::vector<double> ts, logs;
        for (int i = 0; i <= 20; ++i) {
            const double t = (5.0 + 0.5 * i) / g;
            const std::array<double, 2> x{0.0, t};
            ts.push_back(t);
            logs.push_back(std::log(std::abs(direct(x).value - plateau)));
        }
        const double tm = std::accumulate(ts.begin(), ts.end(), 0.0) / ts.size();
        const double lm = std::accumulate(logs.begin(), logs.end(), 0.0) / logs.size();
        double num = 0, den = 0;
        for (std::size_t i = 0; i < ts.size(); ++i) {
            num += (ts[i] - tm) * (logs[i] - lm);
            den += (ts[i] - tm) * (ts[i] - tm);
        }
        EXPECT_NEAR(num / den, -g, 0.05 * g);
        ++checked;
    }
}

TEST(Serialization, JsonRoundTripIsBitExact) {
    std::mt19937_64 rng(47);
    const CmpsState s = random_normalized_state(3, rng);
    const nlohmann::json j = s;
    const auto text = j.dump();
    const CmpsState back = nlohmann::json::parse(text).get<CmpsState>();
    EXPECT_EQ(back.bond_dim(), 3);
    EXPECT_TRUE((back.q().array() == s.q().array()).all());
    EXPECT_TRUE((back.r().array() == s.r().array()).all());
}
