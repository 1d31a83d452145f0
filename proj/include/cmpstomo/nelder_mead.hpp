#pragma once

#include <functional>
#include <vector>

#include "cmpstomo/types.hpp"

namespace cmpstomo {

struct NelderMeadOptions {
    double initial_step = 0.2;     // per-coordinate offset of the starting vertices
    double diameter_tol = 1e-10;   // max-norm distance of the vertices from the best one
    long max_evaluations = 20000;
    bool restart_on_stagnation = true;
    double restart_scale = 0.1;    // restart simplex size relative to initial_step
    bool record_trace = false;
    /// Dimension-dependent coefficients (expansion 1 + 2/n, contraction
    /// 0.75 - 1/2n, shrink 1 - 1/n) instead of the standard 2 / 0.5 / 0.5.
    bool adaptive = false;
};

struct NelderMeadResult {
    RVector x;
    double value = 0.0;
    long evaluations = 0;
    bool converged = false;  // diameter criterion met before the budget ran out
    bool restarted = false;
    std::vector<double> trace;  // best value after every iteration, if recorded
};

/// Derivative-free minimization with reflection 1, expansion 2, contraction
/// 0.5 and shrink 0.5. Non-finite values are treated as +inf. When the
/// simplex collapses before the budget is spent, the search restarts once
/// from a smaller simplex around the best vertex.
NelderMeadResult nelder_mead(const std::function<double(const RVector&)>& f, const RVector& x0,
                             const NelderMeadOptions& options = {});

}  // namespace cmpstomo
