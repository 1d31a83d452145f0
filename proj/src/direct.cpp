#include "cmpstomo/direct.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include "cmpstomo/error.hpp"

namespace cmpstomo {

HalfPowers half_powers(const CMatrix& r) {
    const Eigen::JacobiSVD<CMatrix> svd(r);
    const auto& sv = svd.singularValues();
    if (!(sv[sv.size() - 1] > 1e-14 * sv[0])) {
        fail(ErrorKind::SingularR, "R is singular; its inverse square root does not exist");
    }
    const Eigen::ComplexEigenSolver<CMatrix> eig(r, false);
    const double scale = sv[0];
    for (Index k = 0; k < eig.eigenvalues().size(); ++k) {
        const Complex z = eig.eigenvalues()[k];
        if (z.real() <= 0.0 && std::abs(z.imag()) <= 1e-12 * scale) {
            fail(ErrorKind::NoPrincipalRoot,
                 "R has an eigenvalue on the closed negative real axis");
        }
    }
    const CMatrix root = r.sqrt();
    const CMatrix root_inv = root.inverse();
    return HalfPowers{kron(root.conjugate(), root_inv), kron(root_inv.conjugate(), root)};
}

DirectEvaluator::DirectEvaluator(const CmpsState& state)
    : transfer_(transfer_matrix(state)), half_(half_powers(state.r())) {
    if (!is_normalized(state)) {
        fail(ErrorKind::NotNormalized,
             "direct evaluation needs a normalized state (dominant eigenvalue 0)");
    }
    const Eigen::JacobiSVD<CMatrix> svd(transfer_, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Index last = transfer_.rows() - 1;
    right_ = svd.matrixV().col(last);
    left_ = svd.matrixU().col(last).adjoint();
    const Complex overlap = (left_ * right_).value();
    left_ /= overlap;
}

CMatrix DirectEvaluator::propagator(double t) const { return (transfer_ * t).exp(); }

CorrelatorValue DirectEvaluator::chain(std::span<const CMatrix* const> propagators) const {
    if (propagators.empty() || propagators.size() % 2 == 0) {
        fail(ErrorKind::OddOrderUnavailable,
             "only even correlator orders are defined (gap count must be odd)");
    }
    Eigen::RowVectorXcd v = left_ * half_.forward;
    for (std::size_t j = 0; j < propagators.size(); ++j) {
        v = v * (*propagators[j]);
        v = v * ((j % 2 == 0) ? half_.backward : half_.forward);
    }
    const Complex c = (v * right_).value();
    return CorrelatorValue{c.real(), c.imag()};
}

CorrelatorValue DirectEvaluator::operator()(std::span<const double> positions) const {
    if (positions.size() < 2 || positions.size() % 2 != 0) {
        fail(ErrorKind::OddOrderUnavailable,
             "correlator order must be even and at least 2 (odd orders carry the "
             "random global phase and are not accessible)");
    }
    if (!std::is_sorted(positions.begin(), positions.end())) {
        fail(ErrorKind::InvalidArgument, "positions must be sorted ascending");
    }
    std::vector<CMatrix> props;
    props.reserve(positions.size() - 1);
    for (std::size_t j = 0; j + 1 < positions.size(); ++j) {
        props.push_back(propagator(positions[j + 1] - positions[j]));
    }
    std::vector<const CMatrix*> ptrs;
    for (const auto& p : props) ptrs.push_back(&p);
    return chain(ptrs);
}

}  // namespace cmpstomo
