#include "cmpstomo/nelder_mead.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cmpstomo/error.hpp"

namespace cmpstomo {

namespace {

constexpr double kReflect = 1.0;

class Search {
public:
    Search(const std::function<double(const RVector&)>& f, const NelderMeadOptions& options,
           NelderMeadResult& result)
        : f_(f), options_(options), result_(result) {}

    void set_dimension(Index n) {
        const double dn = static_cast<double>(n);
        expand_ = options_.adaptive ? 1.0 + 2.0 / dn : 2.0;
        contract_ = options_.adaptive ? 0.75 - 0.5 / dn : 0.5;
        shrink_ = options_.adaptive ? 1.0 - 1.0 / dn : 0.5;
        if (n < 2) shrink_ = 0.5;
    }

    double eval(const RVector& x) {
        ++result_.evaluations;
        const double v = f_(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::infinity();
    }

    bool budget_left() const { return result_.evaluations < options_.max_evaluations; }

    // Returns true when the simplex collapsed below the diameter tolerance.
    bool run(const RVector& start, double start_value, double step) {
        const Index n = start.size();
        std::vector<RVector> x(static_cast<std::size_t>(n + 1), start);
        std::vector<double> fx(static_cast<std::size_t>(n + 1), start_value);
        for (Index i = 0; i < n && budget_left(); ++i) {
            x[static_cast<std::size_t>(i + 1)][i] += step;
            fx[static_cast<std::size_t>(i + 1)] = eval(x[static_cast<std::size_t>(i + 1)]);
        }
        std::vector<std::size_t> order(x.size());

        for (;;) {
            std::iota(order.begin(), order.end(), 0);
            std::stable_sort(order.begin(), order.end(),
                             [&](std::size_t a, std::size_t b) { return fx[a] < fx[b]; });
            const std::size_t best = order.front();
            const std::size_t worst = order.back();
            const std::size_t second = order[order.size() - 2];
            record(fx[best]);

            double diameter = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i)
                diameter = std::max(diameter, (x[i] - x[best]).cwiseAbs().maxCoeff());
            if (diameter < options_.diameter_tol) {
                keep(x[best], fx[best]);
                return true;
            }
            if (!budget_left()) {
                keep(x[best], fx[best]);
                return false;
            }

            RVector centroid = RVector::Zero(n);
            for (std::size_t i = 0; i < x.size(); ++i)
                if (i != worst) centroid += x[i];
            centroid /= static_cast<double>(n);

            const RVector xr = centroid + kReflect * (centroid - x[worst]);
            const double fr = eval(xr);
            if (fr < fx[best]) {
                const RVector xe = centroid + expand_ * (xr - centroid);
                const double fe = eval(xe);
                if (fe < fr) {
                    x[worst] = xe;
                    fx[worst] = fe;
                } else {
                    x[worst] = xr;
                    fx[worst] = fr;
                }
                continue;
            }
            if (fr < fx[second]) {
                x[worst] = xr;
                fx[worst] = fr;
                continue;
            }
            if (fr < fx[worst]) {
                const RVector xc = centroid + contract_ * (xr - centroid);
                const double fc = eval(xc);
                if (fc <= fr) {
                    x[worst] = xc;
                    fx[worst] = fc;
                    continue;
                }
            } else {
                const RVector xcc = centroid + contract_ * (x[worst] - centroid);
                const double fcc = eval(xcc);
                if (fcc < fx[worst]) {
                    x[worst] = xcc;
                    fx[worst] = fcc;
                    continue;
                }
            }
            for (std::size_t i = 0; i < x.size() && budget_left(); ++i) {
                if (i == best) continue;
                x[i] = x[best] + shrink_ * (x[i] - x[best]);
                fx[i] = eval(x[i]);
            }
        }
    }

private:
    void record(double v) {
        if (!options_.record_trace) return;
        // The best vertex never gets worse, except when a restart begins at it.
        result_.trace.push_back(result_.trace.empty() ? v : std::min(v, result_.trace.back()));
    }

    void keep(const RVector& x, double v) {
        if (result_.x.size() == 0 || v < result_.value) {
            result_.x = x;
            result_.value = v;
        }
    }

    double expand_ = 2.0;
    double contract_ = 0.5;
    double shrink_ = 0.5;
    const std::function<double(const RVector&)>& f_;
    const NelderMeadOptions& options_;
    NelderMeadResult& result_;
};

}  // namespace

NelderMeadResult nelder_mead(const std::function<double(const RVector&)>& f, const RVector& x0,
                             const NelderMeadOptions& options) {
    if (x0.size() == 0) fail(ErrorKind::InvalidArgument, "Nelder-Mead needs at least one parameter");
    if (!(options.initial_step > 0.0)) fail(ErrorKind::InvalidArgument, "initial_step must be positive");
    NelderMeadResult result;
    Search search(f, options, result);
    search.set_dimension(x0.size());
    const double f0 = search.eval(x0);
    result.x = x0;
    result.value = f0;
    result.converged = search.run(x0, f0, options.initial_step);
    if (result.converged && options.restart_on_stagnation && search.budget_left()) {
        result.restarted = true;
        const RVector start = result.x;
        result.converged =
            search.run(start, result.value, options.initial_step * options.restart_scale);
    }
    return result;
}

}  // namespace cmpstomo
