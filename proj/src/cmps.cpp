#include "cmpstomo/cmps.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include "cmpstomo/direct.hpp"
#include "cmpstomo/error.hpp"

namespace cmpstomo {

namespace {

constexpr double kDegeneracyTol = 1e-10;
constexpr double kMaxBasisCondition = 1e12;
constexpr double kNormalizedTol = 1e-12;

}  // namespace

std::vector<Index> spectral_order(const CVector& values) {
    std::vector<Index> order(static_cast<std::size_t>(values.size()));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
        return values[a].real() > values[b].real();
    });
    const double scale = 1.0 + values.cwiseAbs().maxCoeff();
    std::size_t begin = 0;
    while (begin < order.size()) {
        std::size_t end = begin + 1;
        while (end < order.size() &&
               std::abs(values[order[end]].real() - values[order[begin]].real()) <=
                   1e-9 * scale) {
            ++end;
        }
        std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](Index a, Index b) { return values[a].imag() > values[b].imag(); });
        begin = end;
    }
    return order;
}

namespace {

CVector sorted_eigenvalues(const CMatrix& t) {
    Eigen::ComplexEigenSolver<CMatrix> solver(t, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success) {
        fail(ErrorKind::IllConditionedBasis, "eigenvalue iteration did not converge");
    }
    const CVector& raw = solver.eigenvalues();
    const auto order = spectral_order(raw);
    CVector out(raw.size());
    for (Index k = 0; k < raw.size(); ++k) out[k] = raw[order[static_cast<std::size_t>(k)]];
    return out;
}

void require_square_pair(const CMatrix& q, const CMatrix& r) {
    if (q.rows() != q.cols() || r.rows() != r.cols() || q.rows() != r.rows()) {
        fail(ErrorKind::DimensionMismatch,
             "Q and R must both be d x d (got " + std::to_string(q.rows()) + "x" +
                 std::to_string(q.cols()) + " and " + std::to_string(r.rows()) + "x" +
                 std::to_string(r.cols()) + ")");
    }
    if (q.rows() == 0) fail(ErrorKind::DimensionMismatch, "bond dimension must be positive");
}

std::vector<double> flatten(const Eigen::MatrixXd& m) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
    return out;
}

Eigen::MatrixXd unflatten(const std::vector<double>& v, Index d, const char* key) {
    if (static_cast<Index>(v.size()) != d * d) {
        fail(ErrorKind::DimensionMismatch, std::string(key) + " must hold d*d entries");
    }
    Eigen::MatrixXd m(d, d);
    for (Index i = 0; i < d; ++i)
        for (Index j = 0; j < d; ++j) m(i, j) = v[static_cast<std::size_t>(i * d + j)];
    return m;
}

}  // namespace

CmpsState::CmpsState(CMatrix q, CMatrix r) : q_(std::move(q)), r_(std::move(r)) {
    require_square_pair(q_, r_);
}

void to_json(nlohmann::json& j, const CmpsState& state) {
    j = nlohmann::json{{"d", state.bond_dim()},
                       {"Q_re", flatten(state.q().real())},
                       {"Q_im", flatten(state.q().imag())},
                       {"R_re", flatten(state.r().real())},
                       {"R_im", flatten(state.r().imag())}};
}

void from_json(const nlohmann::json& j, CmpsState& state) {
    const auto d = j.at("d").get<Index>();
    if (d < 1) fail(ErrorKind::InvalidArgument, "d must be a positive integer");
    const auto qre = unflatten(j.at("Q_re").get<std::vector<double>>(), d, "Q_re");
    const auto qim = unflatten(j.at("Q_im").get<std::vector<double>>(), d, "Q_im");
    const auto rre = unflatten(j.at("R_re").get<std::vector<double>>(), d, "R_re");
    const auto rim = unflatten(j.at("R_im").get<std::vector<double>>(), d, "R_im");
    CMatrix q(d, d), r(d, d);
    q.real() = qre;
    q.imag() = qim;
    r.real() = rre;
    r.imag() = rim;
    state = CmpsState(std::move(q), std::move(r));
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
    CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index i = 0; i < a.rows(); ++i)
        for (Index k = 0; k < a.cols(); ++k)
            out.block(i * b.rows(), k * b.cols(), b.rows(), b.cols()) = a(i, k) * b;
    return out;
}

CMatrix transfer_matrix(const CmpsState& state) {
    require_square_pair(state.q(), state.r());
    const Index d = state.bond_dim();
    const CMatrix id = CMatrix::Identity(d, d);
    return kron(state.q().conjugate(), id) + kron(id, state.q()) +
           kron(state.r().conjugate(), state.r());
}

CmpsState normalize(const CmpsState& state) {
    const Index d = state.bond_dim();
    CMatrix q = state.q();
    // A second pass removes the rounding left by the first shift.
    for (int pass = 0; pass < 3; ++pass) {
        const CVector lambda = sorted_eigenvalues(transfer_matrix(CmpsState(q, state.r())));
        if (lambda.size() > 1 &&
            std::abs(lambda[0].real() - lambda[1].real()) < kDegeneracyTol) {
            fail(ErrorKind::DegenerateSpectrum,
                 "dominant transfer-matrix eigenvalue is not simple");
        }
        const double shift = lambda[0].real();
        if (shift == 0.0) break;
        q -= (0.5 * shift) * CMatrix::Identity(d, d);
        if (std::abs(shift) < 1e-15) break;
    }
    return CmpsState(std::move(q), state.r());
}

bool is_normalized(const CmpsState& state, double tol) {
    const CVector lambda = sorted_eigenvalues(transfer_matrix(state));
    if (std::abs(lambda[0].real()) > tol) return false;
    return lambda.size() == 1 || lambda[1].real() < -tol;
}

TransferSpectrum spectral_decompose(const CmpsState& state) {
    const CMatrix t = transfer_matrix(state);
    Eigen::ComplexEigenSolver<CMatrix> solver(t);
    if (solver.info() != Eigen::Success) {
        fail(ErrorKind::IllConditionedBasis, "eigen-decomposition did not converge");
    }
    const auto order = spectral_order(solver.eigenvalues());
    const Index n = t.rows();
    TransferSpectrum out;
    out.eigenvalues.resize(n);
    out.right.resize(n, n);
    for (Index k = 0; k < n; ++k) {
        const Index src = order[static_cast<std::size_t>(k)];
        out.eigenvalues[k] = solver.eigenvalues()[src];
        out.right.col(k) = solver.eigenvectors().col(src);
    }
    const Eigen::JacobiSVD<CMatrix> svd(out.right);
    const auto& sv = svd.singularValues();
    const double cond = sv[sv.size() - 1] > 0 ? sv[0] / sv[sv.size() - 1]
                                              : std::numeric_limits<double>::infinity();
    if (!(cond <= kMaxBasisCondition)) {
        fail(ErrorKind::IllConditionedBasis,
             "transfer matrix is not diagonalizable in a well-conditioned basis "
             "(cond(X) = " + std::to_string(cond) + "); use the direct evaluator");
    }
    out.left_inverse = out.right.partialPivLu().inverse();

    const bool dominant_zero = std::abs(out.eigenvalues[0].real()) <= kNormalizedTol;
    const bool rest_negative =
        n == 1 || out.eigenvalues.tail(n - 1).real().maxCoeff() < 0.0;
    out.normalized = dominant_zero && rest_negative;
    if (out.normalized) out.eigenvalues[0] = Complex(0.0, 0.0);
    return out;
}

ResidueTensor residues_in_diagonal_basis(const CmpsState& state,
                                         const TransferSpectrum& spectrum) {
    const Index n = state.bond_dim() * state.bond_dim();
    if (spectrum.right.rows() != n || spectrum.left_inverse.rows() != n) {
        fail(ErrorKind::DimensionMismatch, "spectrum does not match the state's bond dimension");
    }
    const HalfPowers half = half_powers(state.r());
    ResidueTensor out;
    out.m = spectrum.left_inverse * half.forward * spectrum.right;
    out.m_inv = spectrum.left_inverse * half.backward * spectrum.right;
    return out;
}

CorrelatorValue eval_correlator_direct(const CmpsState& state,
                                       std::span<const double> positions) {
    return DirectEvaluator(state)(positions);
}

Complex correlator_chain(const CMatrix& m, const CMatrix& m_inv, const CVector& eigenvalues,
                         std::span<const double> gaps) {
    const Index dim = eigenvalues.size();
    if (m.rows() != dim || m.cols() != dim || m_inv.rows() != dim || m_inv.cols() != dim) {
        fail(ErrorKind::DimensionMismatch, "M, M^-1 and the spectrum disagree in size");
    }
    if (gaps.empty() || gaps.size() % 2 == 0) {
        fail(ErrorKind::OddOrderUnavailable,
             "only even correlator orders are defined (gap count must be odd)");
    }
    Eigen::RowVectorXcd v = m.row(0);
    for (std::size_t j = 0; j < gaps.size(); ++j) {
        if (!(gaps[j] >= 0.0)) fail(ErrorKind::InvalidArgument, "gaps must be nonnegative");
        v = v.cwiseProduct((eigenvalues * gaps[j]).array().exp().matrix().transpose());
        if (j + 1 < gaps.size()) v = (j % 2 == 0) ? Eigen::RowVectorXcd(v * m_inv)
                                                   : Eigen::RowVectorXcd(v * m);
    }
    return (v * m_inv.col(0)).value();
}

double eval_correlator_diagonal(const ResidueTensor& residues,
                                const TransferSpectrum& spectrum,
                                std::span<const double> gaps) {
    return correlator_chain(residues.m, residues.m_inv, spectrum.eigenvalues, gaps).real();
}

Complex rho_coefficient(const CMatrix& m, const CMatrix& m_inv, std::span<const Index> k) {
    if (k.empty() || k.size() % 2 == 0) {
        fail(ErrorKind::OddOrderUnavailable, "rho needs n-1 indices with n even");
    }
    Complex value = m(0, k[0]);
    for (std::size_t t = 1; t < k.size(); ++t) {
        value *= (t % 2 == 1) ? m_inv(k[t - 1], k[t]) : m(k[t - 1], k[t]);
    }
    return value * m_inv(k.back(), 0);
}

CVector two_point_residues(const CMatrix& m, const CMatrix& m_inv) {
    return m.row(0).transpose().cwiseProduct(m_inv.col(0));
}

}  // namespace cmpstomo
