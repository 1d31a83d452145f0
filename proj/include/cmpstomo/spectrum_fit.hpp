#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "cmpstomo/corr.hpp"
#include "cmpstomo/types.hpp"

namespace cmpstomo {

/// f(t) = sum_k r_k exp(lambda_k t). Complex lambda come in conjugate pairs
/// with conjugate residues, so f is real. Terms are ordered like a transfer
/// spectrum: descending real part, then descending imaginary part.
struct ExpSumModel {
    CVector lambda;
    CVector residues;
    double residual = 0.0;  // weighted residual norm of the last fit
    bool pinned_dominant = false;
    std::vector<std::string> warnings;

    Index order() const { return lambda.size(); }
    Complex evaluate(double t) const;
};

nlohmann::json to_json(const ExpSumModel& model);
ExpSumModel exp_sum_from_json(const nlohmann::json& j);

/// Two-point function on the uniform gap grid t_g = g * step, averaged over
/// all simplex entries sharing the gap g.
struct TwoPointSamples {
    RVector values;
    RVector std_err;  // empty when the tensor carries no errors
    double step = 1.0;
};

TwoPointSamples two_point_samples(const CorrTensor& c2);

/// Number of Hankel singular values above `rel_tol * sigma_1`.
Index detect_order(const RVector& samples, double rel_tol = 1e-10);

/// Matrix-pencil estimate: the signal subspace of the Hankel matrix gives
/// z_k, lambda_k = log(z_k) / step, and residues follow from a linear least
/// squares fit. Throws OrderTooHigh when the Hankel rank is below m.
ExpSumModel prony_initialize(const RVector& samples, double step, Index m,
                             double rank_tol = 1e-10);

struct RefineOptions {
    double rel_tol = 1e-12;
    int max_iterations = 500;
    bool pin_dominant = false;
    // With pinning, every other mode must decay at least this fast.
    double min_decay = 0.0;
};

/// Weighted nonlinear least squares over (lambda, r), with conjugate pairs
/// parametrized by (Re lambda, |Im lambda|) and Re lambda <= 0 enforced.
/// The residues are eliminated by variable projection and the remaining
/// exponents refined with Levenberg-Marquardt. `weights` may be empty
/// (uniform). With `pin_dominant`, the real exponent nearest zero is snapped
/// to exactly 0 afterwards and the rest refit around it with
/// Re lambda <= -min_decay.
ExpSumModel refine_least_squares(const ExpSumModel& init, const RVector& samples, double step,
                                 const RVector& weights, const RefineOptions& options = {});

struct SpectrumFitOptions {
    Index m = 4;
    bool pin_dominant = true;
    bool use_weights = true;  // inverse-variance when the tensor has errors
    double min_decay = -1.0;  // negative: 1 / (sample window length)
};

/// Full two-point fit used by the pipeline.
ExpSumModel fit_spectrum(const CorrTensor& c2, const SpectrumFitOptions& options);

}  // namespace cmpstomo
