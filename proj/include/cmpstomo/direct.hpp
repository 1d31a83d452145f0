#pragma once

#include <span>

#include "cmpstomo/cmps.hpp"

namespace cmpstomo {

/// conj(R)^{1/2} (x) R^{-1/2} and its inverse conj(R)^{-1/2} (x) R^{1/2},
/// from the principal square root of R. Throws SingularR when R is
/// numerically singular and NoPrincipalRoot when R has an eigenvalue on the
/// closed negative real axis.
struct HalfPowers {
    CMatrix forward;
    CMatrix backward;
};

HalfPowers half_powers(const CMatrix& r);

/// Matrix-exponential evaluation of phase correlators for one state. The
/// state is checked for normalization once, at construction.
class DirectEvaluator {
public:
    explicit DirectEvaluator(const CmpsState& state);

    CorrelatorValue operator()(std::span<const double> positions) const;

    /// exp(T t), by scaling and squaring with a Pade approximant.
    CMatrix propagator(double t) const;

    /// Contracts the correlator chain with one caller-supplied propagator
    /// per gap, so grids with repeated gaps can share exponentials.
    CorrelatorValue chain(std::span<const CMatrix* const> propagators) const;

    const CMatrix& transfer() const { return transfer_; }
    const HalfPowers& half() const { return half_; }
    const Eigen::RowVectorXcd& left() const { return left_; }
    const CVector& right() const { return right_; }

private:
    CMatrix transfer_;
    HalfPowers half_;
    Eigen::RowVectorXcd left_;  // left null vector, scaled so left_ * right_ = 1
    CVector right_;
};

}  // namespace cmpstomo
