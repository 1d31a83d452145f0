#pragma once

#include <cstdint>
#include <variant>

#include "json.hpp"

#include "cmpstomo/corr.hpp"

namespace cmpstomo {

/// k(x, y) = sigma2 * exp(-|x - y| / xi).
struct ExponentialKernel {
    double sigma2 = 0.25;  // rad^2
    double xi = 10.0;      // micrometres
};

/// Covariance matrix supplied directly on the target grid.
struct MatrixKernel {
    RMatrix covariance;
};

/// Gaussian stand-in for the fluctuating relative phase phi(x) plus a
/// Gaussian per-shot global offset; each shot is theta(x) = phi(x) + offset.
struct PhaseFieldModel {
    std::variant<ExponentialKernel, MatrixKernel> kernel = ExponentialKernel{};
    double global_phase_spread = 0.0;  // std. dev. of the per-shot offset, rad
    std::uint64_t seed = 0;
};

RMatrix kernel_matrix(const PhaseFieldModel& model, const Grid1D& grid);

/// Draws `num_shots` profiles. Shot s uses its own generator streams derived
/// from (seed, s), so the field part does not depend on the global-phase
/// spread and any partition of the shot range reproduces the same output.
ShotEnsemble sample_shots(const PhaseFieldModel& model, const Grid1D& grid, Index num_shots);

/// exp(-Var(theta(x) - theta(y)) / 2) for the exponential kernel: the
/// Gaussian expectation of cos(theta(x) - theta(y)).
double gaussian_two_point(const ExponentialKernel& kernel, double distance);

/// {"kernel": "exp", "sigma2", "xi", "global_phase_spread", "seed"}. Unknown
/// keys are rejected.
PhaseFieldModel phase_model_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PhaseFieldModel& model);

}  // namespace cmpstomo
