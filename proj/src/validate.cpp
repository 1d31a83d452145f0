#include "cmpstomo/validate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "cmpstomo/error.hpp"

namespace cmpstomo {

namespace {

constexpr double kBound = 1.0 + 1e-6;

double reversal_asymmetry(const CorrTensor& t) {
    const int n = t.order();
    std::vector<int> idx = t.indexer().first();
    std::vector<int> rev(idx.size());
    double worst = 0.0;
    std::size_t offset = 0;
    do {
        // Reversing the gaps keeps x_1 and x_n and reflects the interior.
        for (int j = 0; j < n; ++j)
            rev[static_cast<std::size_t>(j)] = idx[0] + idx[static_cast<std::size_t>(n - 1)] -
                                               idx[static_cast<std::size_t>(n - 1 - j)];
        worst = std::max(worst, std::abs(t.values()[offset] - t.at(rev)));
        ++offset;
    } while (t.indexer().next(std::span<int>(idx)));
    return worst;
}

RMatrix slice(const CorrTensor& t, int fixed_gap) {
    const int n = t.order();
    const Index g = t.grid().count;
    const Index rows = g;
    const Index cols = n > 2 ? g : 1;
    RMatrix out = RMatrix::Constant(rows, cols, std::numeric_limits<double>::quiet_NaN());
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (Index a = 0; a < rows; ++a)
        for (Index b = 0; b < cols; ++b) {
            idx[0] = 0;
            idx[1] = static_cast<int>(a);
            if (n > 2) idx[2] = static_cast<int>(a + b);
            bool inside = idx[static_cast<std::size_t>(std::min(n - 1, 2))] < g;
            for (int j = 3; j < n && inside; ++j) {
                idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + fixed_gap;
                inside = idx[static_cast<std::size_t>(j)] < g;
            }
            if (inside) out(a, b) = t.at(idx);
        }
    return out;
}

void write_matrix(const std::filesystem::path& path, const RMatrix& m) {
    std::ofstream f(path);
    if (!f) fail(ErrorKind::IoError, "cannot write " + path.string());
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j) f << ',';
            f << (std::isnan(m(i, j)) ? std::string("nan") : fmt::format("{:.17g}", m(i, j)));
        }
        f << '\n';
    }
    if (!f) fail(ErrorKind::IoError, "failed writing " + path.string());
}

}  // namespace

std::string ProjectionSlice::file_name() const {
    std::string fixed;
    for (int j = 3; j < order; ++j) fixed += (fixed.empty() ? "" : "-") + std::to_string(fixed_gap);
    return fmt::format("proj_n{}_fix{}.csv", order, fixed.empty() ? "none" : fixed);
}

const OrderScore* ValidationReport::score(int order) const {
    for (const auto& s : scores)
        if (s.order == order) return &s;
    return nullptr;
}

ValidationReport compare_tensors(const std::vector<CorrTensor>& measured,
                                 const std::vector<CorrTensor>& predicted,
                                 const ReportOptions& options, std::string label) {
    if (measured.empty()) fail(ErrorKind::InvalidArgument, "no measured tensors to validate against");
    if (measured.size() != predicted.size()) {
        fail(ErrorKind::DimensionMismatch, "one prediction per measured tensor is required");
    }
    ValidationReport report;
    report.label = std::move(label);
    report.grid = measured.front().grid();
    std::set<int> seen;
    for (std::size_t i = 0; i < measured.size(); ++i) {
        const CorrTensor& meas = measured[i];
        const CorrTensor& pred = predicted[i];
        if (!(meas.grid() == report.grid) || !(pred.grid() == report.grid) ||
            pred.order() != meas.order()) {
            fail(ErrorKind::DimensionMismatch, "incompatible grids: all tensors must share one grid");
        }
        if (!seen.insert(meas.order()).second) {
            fail(ErrorKind::InvalidArgument, fmt::format("order {} given twice", meas.order()));
        }
        OrderScore s;
        s.order = meas.order();
        s.eps = epsilon_metric(meas, pred, options.floor);
        for (double v : pred.values()) {
            s.max_abs_predicted = std::max(s.max_abs_predicted, std::abs(v));
            if (std::abs(v) > kBound) ++s.out_of_bounds;
        }
        s.reversal_asymmetry = reversal_asymmetry(pred);
        report.scores.push_back(s);

        // Order 2 has a single gap, so its one slice fixes nothing.
        const std::vector<int> fixed = meas.order() > 2 ? options.fixed_gaps : std::vector<int>{0};
        for (int g : fixed) {
            ProjectionSlice sl;
            sl.order = meas.order();
            sl.fixed_gap = g;
            sl.measured = slice(meas, g);
            sl.predicted = slice(pred, g);
            report.slices.push_back(std::move(sl));
        }
    }
    std::sort(report.scores.begin(), report.scores.end(),
              [](const OrderScore& a, const OrderScore& b) { return a.order < b.order; });
    return report;
}

ValidationReport validation_report(const ReconstructedModel& model,
                                   const std::vector<CorrTensor>& measured,
                                   const ReportOptions& options, std::string label) {
    if (measured.empty()) fail(ErrorKind::InvalidArgument, "no measured tensors to validate against");
    std::vector<CorrTensor> predicted;
    for (const auto& m : measured) {
        if (!(m.grid() == measured.front().grid())) {
            fail(ErrorKind::DimensionMismatch, "incompatible grids: all tensors must share one grid");
        }
        predicted.push_back(predict(model, m.order(), m.grid(), options.predict));
    }
    return compare_tensors(measured, predicted, options, std::move(label));
}

nlohmann::json to_json(const ValidationReport& report) {
    nlohmann::json orders = nlohmann::json::array();
    for (const auto& s : report.scores) {
        orders.push_back({{"order", s.order},
                          {"eps_mean", s.eps.mean},
                          {"eps_max", s.eps.max},
                          {"included", s.eps.included},
                          {"excluded", s.eps.excluded},
                          {"out_of_bounds", s.out_of_bounds},
                          {"max_abs_predicted", s.max_abs_predicted},
                          {"reversal_asymmetry", s.reversal_asymmetry}});
    }
    nlohmann::json slices = nlohmann::json::array();
    for (const auto& sl : report.slices)
        slices.push_back({{"order", sl.order}, {"fixed_gap", sl.fixed_gap}, {"file", sl.file_name()}});
    return nlohmann::json{{"label", report.label},
                          {"grid", {{"start", report.grid.start}, {"step", report.grid.step}, {"count", report.grid.count}}},
                          {"orders", orders},
                          {"projections", slices}};
}

std::string render_table(const std::vector<ValidationReport>& reports) {
    std::set<int> orders;
    std::size_t label_width = 5;
    for (const auto& r : reports) {
        for (const auto& s : r.scores) orders.insert(s.order);
        label_width = std::max(label_width, r.label.size());
    }
    const int col = 9;
    std::string out;
    const std::string pad(label_width + 2, ' ');
    out += pad + "| " + fmt::format("{:^{}}", "Correlation error", col * static_cast<int>(orders.size())) + "\n";
    out += pad + "|";
    for (int n : orders) out += fmt::format("{:>{}}", "C" + std::to_string(n), col);
    out += "\n" + std::string(label_width + 2, '-') + "+" + std::string(static_cast<std::size_t>(col) * orders.size(), '-') + "\n";
    for (const auto& r : reports) {
        out += fmt::format("{:<{}}  |", r.label, label_width);
        for (int n : orders) {
            const OrderScore* s = r.score(n);
            out += s ? fmt::format("{:>{}}", fmt::format("{:.1f}%", 100.0 * s->eps.mean), col)
                     : fmt::format("{:>{}}", "-", col);
        }
        out += "\n";
    }
    return out;
}

void write_projections(const std::filesystem::path& dir, const ValidationReport& report) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "measured", ec);
    std::filesystem::create_directories(dir / "predicted", ec);
    if (ec) fail(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
    for (const auto& sl : report.slices) {
        write_matrix(dir / "measured" / sl.file_name(), sl.measured);
        write_matrix(dir / "predicted" / sl.file_name(), sl.predicted);
    }
}

}  // namespace cmpstomo
