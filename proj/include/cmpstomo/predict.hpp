#pragma once

#include "json.hpp"

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/corr.hpp"

namespace cmpstomo {

/// Spectrum plus M matrix: everything needed to evaluate correlators of any
/// even order. `provenance` carries free-form fit metadata.
struct ReconstructedModel {
    CVector lambda;
    CMatrix m;
    nlohmann::json provenance = nlohmann::json::object();

    Index order() const { return lambda.size(); }
};

nlohmann::json to_json(const ReconstructedModel& model);
ReconstructedModel reconstructed_from_json(const nlohmann::json& j);

struct PredictOptions {
    bool allow_order8 = false;  // the order-8 simplex is large; opt in explicitly
};

/// Throws OddOrderUnavailable for odd orders and CostGuard above 6 (8 with
/// allow_order8).
void check_prediction_order(int order, const PredictOptions& options = {});

/// Fills the whole ordered simplex of `grid` with Re(e1^T M D Minv D M ...
/// Minv e1). Consecutive simplex entries share leading gaps, so partial chain
/// products are reused.
CorrTensor predict(const ReconstructedModel& model, int order, const Grid1D& grid,
                   const PredictOptions& options = {});

/// Exact tensor of a normalized state via the matrix-exponential evaluator,
/// one propagator per distinct gap.
CorrTensor tabulate_exact(const CmpsState& state, int order, const Grid1D& grid);

}  // namespace cmpstomo
