#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "cmpstomo/simplex.hpp"
#include "cmpstomo/types.hpp"

namespace cmpstomo {

/// Uniform 1D grid, positions start + i * step (micrometres).
struct Grid1D {
    double start = 0.0;
    double step = 1.0;
    Index count = 1;

    double position(Index i) const { return start + static_cast<double>(i) * step; }
    void validate() const;
    bool operator==(const Grid1D&) const = default;
};

/// Parses "start:step:count".
Grid1D parse_grid(const std::string& spec);

/// n-point correlator stored on the ordered simplex i_1 <= ... <= i_n of a
/// grid, in lexicographic order.
class CorrTensor {
public:
    CorrTensor(int order, Grid1D grid);

    int order() const { return order_; }
    const Grid1D& grid() const { return grid_; }
    const SimplexIndexer& indexer() const { return indexer_; }
    Index size() const { return indexer_.size(); }

    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    std::optional<std::vector<double>>& std_err() { return std_err_; }
    const std::optional<std::vector<double>>& std_err() const { return std_err_; }

    std::optional<Index> shot_count;

    double at(std::span<const int> index) const { return values_[static_cast<std::size_t>(indexer_.rank(index))]; }

    /// Gap vector (x_{j+1} - x_j) of a multi-index, in grid steps.
    static void gaps_in_steps(std::span<const int> index, std::span<int> gaps);

private:
    int order_;
    Grid1D grid_;
    SimplexIndexer indexer_;
    std::vector<double> values_;
    std::optional<std::vector<double>> std_err_;
};

/// Single-shot phase profiles theta(x), one row per realization.
struct ShotEnsemble {
    Grid1D grid;
    RMatrix shots;  // num_shots x grid.count, radians

    Index num_shots() const { return shots.rows(); }
    void validate() const;
};

struct EstimatorOptions {
    int max_order = 6;
};

/// Sample mean over shots of cos(theta_1 - theta_2 + theta_3 - ... - theta_n)
/// on every simplex entry, with the standard error of the mean.
CorrTensor estimate_correlator(const ShotEnsemble& shots, int order,
                               const EstimatorOptions& options = {});

/// Raw ensemble average of exp(i (theta_1 - theta_2 + theta_3 - ...)) at
/// the given grid indices. Any length is accepted, so odd orders can be
/// inspected; for odd length the per-shot global phase survives.
Complex raw_phase_average(const ShotEnsemble& shots, std::span<const int> indices);

struct RelativeDeviation {
    double mean = 0.0;
    double max = 0.0;
    Index included = 0;
    Index excluded = 0;
};

/// Mean and maximum of |C - C_rec| / |C_rec| over the simplex. Entries
/// with |C_rec| below `floor` are skipped and counted in `excluded`.
RelativeDeviation epsilon_metric(const CorrTensor& measured, const CorrTensor& reconstructed,
                                 double floor = 1e-8);

void write_corr(const std::filesystem::path& path, const CorrTensor& tensor);
CorrTensor read_corr(const std::filesystem::path& path);

void write_shots(const std::filesystem::path& path, const ShotEnsemble& shots);
ShotEnsemble read_shots(const std::filesystem::path& path);

}  // namespace cmpstomo
