#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "cmpstomo/corr.hpp"
#include "cmpstomo/predict.hpp"

namespace cmpstomo {

struct OrderScore {
    int order = 0;
    RelativeDeviation eps;
    Index out_of_bounds = 0;       // predicted entries with |C| > 1 + 1e-6
    double max_abs_predicted = 0.0;
    double reversal_asymmetry = 0.0;  // max |C(tau) - C(reversed tau)| of the prediction
};

/// Two-dimensional cut through an n-point tensor: the first two gaps run
/// over the grid, the remaining gaps are all `fixed_gap` steps, and x_1 is
/// the first grid point. Entries that fall off the grid are NaN.
struct ProjectionSlice {
    int order = 0;
    int fixed_gap = 0;
    RMatrix measured;
    RMatrix predicted;

    /// proj_n{order}_fix{g-g-...}.csv, "none" when nothing is fixed.
    std::string file_name() const;
};

struct ValidationReport {
    std::string label;
    Grid1D grid;
    std::vector<OrderScore> scores;
    std::vector<ProjectionSlice> slices;

    const OrderScore* score(int order) const;
};

struct ReportOptions {
    std::vector<int> fixed_gaps{0, 2, 5};  // in grid steps
    double floor = 1e-8;                   // epsilon_metric exclusion threshold
    PredictOptions predict{};
};

/// Scores the model against every measured tensor. All tensors must share
/// one grid and have distinct even orders.
ValidationReport validation_report(const ReconstructedModel& model,
                                   const std::vector<CorrTensor>& measured,
                                   const ReportOptions& options = {}, std::string label = {});

/// Same scores against precomputed predictions.
ValidationReport compare_tensors(const std::vector<CorrTensor>& measured,
                                 const std::vector<CorrTensor>& predicted,
                                 const ReportOptions& options = {}, std::string label = {});

nlohmann::json to_json(const ValidationReport& report);

/// Plain-text error table with one row per labeled report and one column
/// per order, relative mean deviations in percent.
std::string render_table(const std::vector<ValidationReport>& reports);

/// Writes measured/ and predicted/ subdirectories of slice CSVs.
void write_projections(const std::filesystem::path& dir, const ValidationReport& report);

}  // namespace cmpstomo
