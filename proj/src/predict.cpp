#include "cmpstomo/predict.hpp"

#include <string>
#include <vector>

#include <Eigen/LU>

#include "cmpstomo/direct.hpp"
#include "cmpstomo/error.hpp"

namespace cmpstomo {

namespace {

constexpr int kMaxDefaultOrder = 6;
constexpr int kMaxOrder = 8;
constexpr double kMinRcond = 1e-13;

}  // namespace

void check_prediction_order(int order, const PredictOptions& options) {
    const bool allow_order8 = options.allow_order8;
    if (order < 2 || order % 2 != 0) {
        fail(ErrorKind::OddOrderUnavailable,
             "order " + std::to_string(order) +
                 " is not available: only even orders survive the random global phase");
    }
    if (order > kMaxOrder || (order > kMaxDefaultOrder && !allow_order8)) {
        fail(ErrorKind::CostGuard, "order " + std::to_string(order) +
                                       " exceeds the cost guard (6, or 8 when explicitly allowed)");
    }
}

namespace {

// Walks the simplex in storage order. `advance(j, gap, prefix_in, prefix_out)`
// extends the chain by gap j; `finish(prefix, gap)` closes it with the last gap.
template <typename Vec, typename Advance, typename Finish>
void walk_simplex(CorrTensor& out, const Vec& start, Advance advance, Finish finish) {
    const int n = out.order();
    std::vector<int> idx = out.indexer().first();
    // prefix[j] is the chain after gaps 0..j-1; prefix[0] = start.
    std::vector<Vec> prefix(static_cast<std::size_t>(n - 1), start);
    int valid = 1;  // prefixes [0, valid) are current
    std::size_t offset = 0;
    int first_changed = 0;
    auto& values = out.values();
    do {
        valid = std::min(valid, std::max(first_changed, 1));
        for (int j = valid - 1; j < n - 2; ++j) {
            advance(j, idx[static_cast<std::size_t>(j + 1)] - idx[static_cast<std::size_t>(j)],
                    prefix[static_cast<std::size_t>(j)], prefix[static_cast<std::size_t>(j + 1)]);
        }
        valid = n - 1;
        values[offset++] = finish(prefix[static_cast<std::size_t>(n - 2)],
                                  idx[static_cast<std::size_t>(n - 1)] - idx[static_cast<std::size_t>(n - 2)]);
    } while (out.indexer().next(std::span<int>(idx), &first_changed));
}

}  // namespace

nlohmann::json to_json(const ReconstructedModel& model) {
    nlohmann::json lam = nlohmann::json::array(), re = nlohmann::json::array(),
                   im = nlohmann::json::array();
    for (Index k = 0; k < model.order(); ++k) lam.push_back({model.lambda[k].real(), model.lambda[k].imag()});
    for (Index i = 0; i < model.m.rows(); ++i)
        for (Index j = 0; j < model.m.cols(); ++j) {
            re.push_back(model.m(i, j).real());
            im.push_back(model.m(i, j).imag());
        }
    return nlohmann::json{{"lambda", lam}, {"M_re", re}, {"M_im", im}, {"provenance", model.provenance}};
}

ReconstructedModel reconstructed_from_json(const nlohmann::json& j) {
    ReconstructedModel out;
    const auto& lam = j.at("lambda");
    const Index m = static_cast<Index>(lam.size());
    out.lambda.resize(m);
    for (Index k = 0; k < m; ++k)
        out.lambda[k] = Complex(lam[static_cast<std::size_t>(k)].at(0).get<double>(),
                                lam[static_cast<std::size_t>(k)].at(1).get<double>());
    const auto& re = j.at("M_re");
    const nlohmann::json im = j.value("M_im", nlohmann::json::array());
    if (static_cast<Index>(re.size()) != m * m || (!im.empty() && im.size() != re.size())) {
        fail(ErrorKind::DimensionMismatch, "M must be m x m with m = len(lambda)");
    }
    out.m.resize(m, m);
    for (Index i = 0; i < m * m; ++i)
        out.m(i / m, i % m) = Complex(re[static_cast<std::size_t>(i)].get<double>(),
                                      im.empty() ? 0.0 : im[static_cast<std::size_t>(i)].get<double>());
    out.provenance = j.value("provenance", nlohmann::json::object());
    return out;
}

CorrTensor predict(const ReconstructedModel& model, int order, const Grid1D& grid,
                   const PredictOptions& options) {
    check_prediction_order(order, options);
    grid.validate();
    const Index m = model.order();
    if (m < 1 || model.m.rows() != m || model.m.cols() != m) {
        fail(ErrorKind::InvalidArgument, "model needs an m x m matrix M with m = len(lambda)");
    }
    if (!model.lambda.allFinite() || !model.m.allFinite()) {
        fail(ErrorKind::InvalidArgument, "model contains non-finite entries");
    }
    const Eigen::PartialPivLU<CMatrix> lu(model.m);
    if (!(lu.rcond() > kMinRcond)) fail(ErrorKind::InvalidArgument, "M is numerically singular");
    const CMatrix m_inv = lu.inverse();

    // decay[g][k] = exp(lambda_k * g * step)
    std::vector<CVector> decay(static_cast<std::size_t>(grid.count));
    for (Index g = 0; g < grid.count; ++g)
        decay[static_cast<std::size_t>(g)] =
            (model.lambda * (static_cast<double>(g) * grid.step)).array().exp().matrix();

    CorrTensor out(order, grid);
    const Eigen::RowVectorXcd start = model.m.row(0);
    const CVector last_col = m_inv.col(0);
    walk_simplex(
        out, start,
        [&](int j, int gap, const Eigen::RowVectorXcd& in, Eigen::RowVectorXcd& res) {
            const Eigen::RowVectorXcd scaled =
                in.cwiseProduct(decay[static_cast<std::size_t>(gap)].transpose());
            res = scaled * (j % 2 == 0 ? m_inv : model.m);
        },
        [&](const Eigen::RowVectorXcd& in, int gap) {
            return (in.cwiseProduct(decay[static_cast<std::size_t>(gap)].transpose()) * last_col)
                .value()
                .real();
        });
    return out;
}

CorrTensor tabulate_exact(const CmpsState& state, int order, const Grid1D& grid) {
    check_prediction_order(order, {.allow_order8 = true});
    grid.validate();
    const DirectEvaluator eval(state);
    const auto& half = eval.half();
    std::vector<CMatrix> even(static_cast<std::size_t>(grid.count)), odd(even.size());
    std::vector<CVector> close(even.size());
    for (Index g = 0; g < grid.count; ++g) {
        const CMatrix p = eval.propagator(static_cast<double>(g) * grid.step);
        even[static_cast<std::size_t>(g)] = p * half.backward;
        odd[static_cast<std::size_t>(g)] = p * half.forward;
        close[static_cast<std::size_t>(g)] = even[static_cast<std::size_t>(g)] * eval.right();
    }
    CorrTensor out(order, grid);
    const Eigen::RowVectorXcd start = eval.left() * half.forward;
    walk_simplex(
        out, start,
        [&](int j, int gap, const Eigen::RowVectorXcd& in, Eigen::RowVectorXcd& res) {
            res = in * (j % 2 == 0 ? even : odd)[static_cast<std::size_t>(gap)];
        },
        [&](const Eigen::RowVectorXcd& in, int gap) {
            return (in * close[static_cast<std::size_t>(gap)]).value().real();
        });
    return out;
}

}  // namespace cmpstomo
