#include "cmpstomo/spectrum_fit.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <fmt/format.h>

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/error.hpp"

namespace cmpstomo {

namespace {

constexpr double kFeasibilitySlack = 1e-8;

// One real exponent, or a conjugate pair a +- i b with b > 0.
struct Mode {
    double a = 0.0;
    double b = 0.0;
    bool pair = false;
    bool fixed = false;
};

double pair_tolerance(Complex z) { return 1e-10 * (1.0 + std::abs(z)); }

std::vector<Mode> modes_from(const ExpSumModel& model) {
    std::vector<Mode> modes;
    std::vector<bool> used(static_cast<std::size_t>(model.order()), false);
    for (Index k = 0; k < model.order(); ++k) {
        if (used[static_cast<std::size_t>(k)]) continue;
        const Complex z = model.lambda[k];
        if (z.real() > kFeasibilitySlack) {
            fail(ErrorKind::InfeasibleInitializer,
                 fmt::format("initial exponent {}{:+}i has positive real part", z.real(), z.imag()));
        }
        used[static_cast<std::size_t>(k)] = true;
        if (std::abs(z.imag()) <= pair_tolerance(z)) {
            modes.push_back(Mode{std::min(z.real(), 0.0), 0.0, false, false});
            continue;
        }
        Index partner = -1;
        for (Index l = k + 1; l < model.order(); ++l) {
            if (!used[static_cast<std::size_t>(l)] &&
                std::abs(model.lambda[l] - std::conj(z)) <= 1e-8 * (1.0 + std::abs(z))) {
                partner = l;
                break;
            }
        }
        if (partner < 0) {
            fail(ErrorKind::InfeasibleInitializer,
                 "complex exponents must come in conjugate pairs for a real signal");
        }
        used[static_cast<std::size_t>(partner)] = true;
        modes.push_back(Mode{std::min(z.real(), 0.0), std::abs(z.imag()), true, false});
    }
    return modes;
}

Index basis_size(const std::vector<Mode>& modes) {
    Index p = 0;
    for (const auto& m : modes) p += m.pair ? 2 : 1;
    return p;
}

RMatrix basis(const std::vector<Mode>& modes, Index n, double step) {
    RMatrix phi(n, basis_size(modes));
    for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * step;
        Index c = 0;
        for (const auto& m : modes) {
            const double env = std::exp(m.a * t);
            if (m.pair) {
                phi(i, c++) = env * std::cos(m.b * t);
                phi(i, c++) = env * std::sin(m.b * t);
            } else {
                phi(i, c++) = env;
            }
        }
    }
    return phi;
}

struct Projection {
    RVector coeffs;
    RVector residual;  // sqrt(w) * (f - phi c)
    double objective = 0.0;
};

Projection project(const std::vector<Mode>& modes, const RVector& f, const RVector& sqrt_w,
                   double step) {
    const RMatrix phi = basis(modes, f.size(), step);
    const RMatrix wphi = sqrt_w.asDiagonal() * phi;
    const RVector wf = sqrt_w.cwiseProduct(f);
    Projection p;
    p.coeffs = wphi.colPivHouseholderQr().solve(wf);
    p.residual = wf - wphi * p.coeffs;
    p.objective = p.residual.squaredNorm();
    return p;
}

std::vector<double*> free_params(std::vector<Mode>& modes) {
    std::vector<double*> out;
    for (auto& m : modes) {
        if (m.fixed) continue;
        out.push_back(&m.a);
        if (m.pair) out.push_back(&m.b);
    }
    return out;
}

// Free modes must satisfy Re lambda <= -min_decay; fixed modes are untouched.
void clamp_feasible(std::vector<Mode>& modes, double min_decay) {
    for (auto& m : modes) {
        if (m.fixed) continue;
        m.a = std::min(m.a, -min_decay);
        m.b = std::abs(m.b);
    }
}

ExpSumModel to_model(const std::vector<Mode>& modes, const RVector& coeffs) {
    const Index m = basis_size(modes);
    CVector lambda(m), res(m);
    Index k = 0, c = 0;
    for (const auto& mode : modes) {
        if (mode.pair) {
            const Complex r(0.5 * coeffs[c], -0.5 * coeffs[c + 1]);
            lambda[k] = Complex(mode.a, mode.b);
            res[k++] = r;
            lambda[k] = Complex(mode.a, -mode.b);
            res[k++] = std::conj(r);
            c += 2;
        } else {
            lambda[k] = Complex(mode.a, 0.0);
            res[k++] = Complex(coeffs[c++], 0.0);
        }
    }
    const auto order = spectral_order(lambda);
    ExpSumModel out;
    out.lambda.resize(m);
    out.residues.resize(m);
    for (Index i = 0; i < m; ++i) {
        out.lambda[i] = lambda[order[static_cast<std::size_t>(i)]];
        out.residues[i] = res[order[static_cast<std::size_t>(i)]];
    }
    return out;
}

// Levenberg-Marquardt on the variable-projection functional.
double levenberg_marquardt(std::vector<Mode>& modes, const RVector& f, const RVector& sqrt_w,
                           double step, const RefineOptions& options, double min_decay = 0.0) {
    clamp_feasible(modes, min_decay);
    auto params = free_params(modes);
    const Index np = static_cast<Index>(params.size());
    Projection current = project(modes, f, sqrt_w, step);
    if (np == 0) return current.objective;
    double mu = 1e-3;
    const double scale = f.squaredNorm() > 0 ? f.squaredNorm() : 1.0;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        if (current.objective <= 1e-30 * scale) break;
        RMatrix jac(f.size(), np);
        for (Index p = 0; p < np; ++p) {
            double& x = *params[static_cast<std::size_t>(p)];
            const double saved = x;
            const double h = 1e-7 * std::max(1.0, std::abs(saved));
            x = saved + h;
            const RVector plus = project(modes, f, sqrt_w, step).residual;
            x = saved - h;
            const RVector minus = project(modes, f, sqrt_w, step).residual;
            x = saved;
            jac.col(p) = (plus - minus) / (2.0 * h);
        }
        const RMatrix jtj = jac.transpose() * jac;
        const RVector grad = jac.transpose() * current.residual;
        if (grad.cwiseAbs().maxCoeff() == 0.0) break;

        bool accepted = false;
        while (!accepted && mu < 1e20) {
            RMatrix a = jtj;
            a.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const RVector delta = a.ldlt().solve(-grad);
            std::vector<double> saved(params.size());
            for (Index p = 0; p < np; ++p) {
                saved[static_cast<std::size_t>(p)] = *params[static_cast<std::size_t>(p)];
                *params[static_cast<std::size_t>(p)] += delta[p];
            }
            clamp_feasible(modes, min_decay);
            Projection trial = project(modes, f, sqrt_w, step);
            if (std::isfinite(trial.objective) && trial.objective < current.objective) {
                const double decrease = current.objective - trial.objective;
                current = std::move(trial);
                mu = std::max(mu / 10.0, 1e-12);
                accepted = true;
                if (decrease < options.rel_tol * current.objective) return current.objective;
            } else {
                for (Index p = 0; p < np; ++p) *params[static_cast<std::size_t>(p)] = saved[static_cast<std::size_t>(p)];
                mu *= 10.0;
            }
        }
        if (!accepted) break;
    }
    return current.objective;
}

// Refit around a pinned dominant mode. Any other mode slower than
// options.min_decay would duplicate the steady state, so such modes are
// restarted from a few decay rates (keeping their type) and the best
// feasible fit is kept.
std::vector<Mode> refit_pinned(std::vector<Mode> modes, const RVector& f, const RVector& sqrt_w,
                               double step, const RefineOptions& options) {
    const double floor = options.min_decay;
    std::vector<std::size_t> slow;
    for (std::size_t i = 0; i < modes.size(); ++i)
        if (!modes[i].fixed && modes[i].a > -floor) slow.push_back(i);

    std::vector<std::vector<Mode>> candidates{modes};
    if (floor > 0.0 && !slow.empty()) {
        const double horizon = 1.0 / floor;
        for (const double rate : {2.0, 5.0, 10.0, 20.0}) {
            for (const double freq : {0.0, 0.5, 1.0, 2.0}) {
                auto c = modes;
                for (const auto i : slow) {
                    c[i].a = -rate / horizon;
                    if (c[i].pair) c[i].b = freq > 0.0 ? freq * 2.0 * std::numbers::pi / horizon : c[i].b;
                }
                candidates.push_back(std::move(c));
            }
        }
    }
    std::vector<Mode> best;
    double best_obj = std::numeric_limits<double>::infinity();
    for (auto& c : candidates) {
        const double obj = levenberg_marquardt(c, f, sqrt_w, step, options, floor);
        if (obj < best_obj) {
            best_obj = obj;
            best = c;
        }
    }
    return best;
}

}  // namespace

Complex ExpSumModel::evaluate(double t) const {
    Complex acc(0.0, 0.0);
    for (Index k = 0; k < order(); ++k) acc += residues[k] * std::exp(lambda[k] * t);
    return acc;
}

nlohmann::json to_json(const ExpSumModel& model) {
    nlohmann::json lam = nlohmann::json::array(), res = nlohmann::json::array();
    for (Index k = 0; k < model.order(); ++k) {
        lam.push_back({model.lambda[k].real(), model.lambda[k].imag()});
        res.push_back({model.residues[k].real(), model.residues[k].imag()});
    }
    return nlohmann::json{{"lambda", lam},
                          {"r", res},
                          {"residual", model.residual},
                          {"m", model.order()},
                          {"pinned_dominant", model.pinned_dominant}};
}

ExpSumModel exp_sum_from_json(const nlohmann::json& j) {
    ExpSumModel out;
    const auto& lam = j.at("lambda");
    const auto& res = j.at("r");
    if (lam.size() != res.size()) fail(ErrorKind::DimensionMismatch, "lambda and r lengths differ");
    out.lambda.resize(static_cast<Index>(lam.size()));
    out.residues.resize(static_cast<Index>(res.size()));
    for (std::size_t k = 0; k < lam.size(); ++k) {
        out.lambda[static_cast<Index>(k)] = Complex(lam[k].at(0).get<double>(), lam[k].at(1).get<double>());
        out.residues[static_cast<Index>(k)] = Complex(res[k].at(0).get<double>(), res[k].at(1).get<double>());
    }
    out.residual = j.value("residual", 0.0);
    out.pinned_dominant = j.value("pinned_dominant", false);
    return out;
}

TwoPointSamples two_point_samples(const CorrTensor& c2) {
    if (c2.order() != 2) fail(ErrorKind::InvalidArgument, "two-point samples need an order-2 tensor");
    const Index g = c2.grid().count;
    TwoPointSamples out;
    out.step = c2.grid().step;
    out.values = RVector::Zero(g);
    RVector var = RVector::Zero(g);
    std::vector<Index> counts(static_cast<std::size_t>(g), 0);
    std::vector<int> idx = c2.indexer().first();
    std::size_t offset = 0;
    do {
        const Index gap = idx[1] - idx[0];
        out.values[gap] += c2.values()[offset];
        if (c2.std_err()) var[gap] += std::pow((*c2.std_err())[offset], 2);
        ++counts[static_cast<std::size_t>(gap)];
        ++offset;
    } while (c2.indexer().next(std::span<int>(idx)));
    for (Index k = 0; k < g; ++k) {
        const double n = static_cast<double>(counts[static_cast<std::size_t>(k)]);
        out.values[k] /= n;
        var[k] /= n * n;
    }
    if (c2.std_err()) out.std_err = var.cwiseSqrt();
    return out;
}

Index detect_order(const RVector& samples, double rel_tol) {
    const Index n = samples.size();
    const Index l = n / 2;
    RMatrix h(n - l, l + 1);
    for (Index i = 0; i < h.rows(); ++i)
        for (Index j = 0; j < h.cols(); ++j) h(i, j) = samples[i + j];
    const Eigen::JacobiSVD<RMatrix> svd(h);
    const auto& sv = svd.singularValues();
    Index rank = 0;
    while (rank < sv.size() && sv[rank] > rel_tol * sv[0]) ++rank;
    return rank;
}

ExpSumModel prony_initialize(const RVector& samples, double step, Index m, double rank_tol) {
    const Index n = samples.size();
    if (m < 1) fail(ErrorKind::InvalidArgument, "model order must be positive");
    if (n < 2 * m) {
        fail(ErrorKind::InvalidArgument,
             fmt::format("need at least {} samples for order {}, got {}", 2 * m, m, n));
    }
    if (!(step > 0.0)) fail(ErrorKind::InvalidArgument, "sample step must be positive");

    const Index l = n / 2;
    RMatrix h(n - l, l + 1);
    for (Index i = 0; i < h.rows(); ++i)
        for (Index j = 0; j < h.cols(); ++j) h(i, j) = samples[i + j];
    const Eigen::JacobiSVD<RMatrix> svd(h, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    Index rank = 0;
    while (rank < sv.size() && sv[rank] > rank_tol * sv[0]) ++rank;
    if (rank < m) {
        fail(ErrorKind::OrderTooHigh,
             fmt::format("requested order {} exceeds the numerical rank {} of the data", m, rank));
    }

    // Shift invariance of the signal subspace: S2 = S1 * Phi, eig(Phi) = z.
    const RMatrix s = (h.rows() >= h.cols() ? svd.matrixU() : svd.matrixV()).leftCols(m);
    const Index len = s.rows();
    const RMatrix phi = s.topRows(len - 1).colPivHouseholderQr().solve(s.bottomRows(len - 1));
    const Eigen::EigenSolver<RMatrix> eig(phi, false);

    ExpSumModel out;
    out.lambda.resize(m);
    for (Index k = 0; k < m; ++k) {
        Complex z = eig.eigenvalues()[k];
        if (z.imag() == 0.0 && z.real() < 0.0) {
            // An alternating component cannot be paired in a real signal; keep its decay only.
            out.warnings.push_back(
                "a pencil eigenvalue lies on the negative real axis (|Im lambda| * step = pi, "
                "aliasing); it was replaced by its modulus");
            z = Complex(-z.real(), 0.0);
        }
        Complex lam = std::log(z) / step;
        // Real-signal exponents cannot grow; project onto Re lambda <= 0.
        lam = Complex(std::min(lam.real(), 0.0), lam.imag());
        out.lambda[k] = lam;
    }
    const auto order = spectral_order(out.lambda);
    CVector sorted(m);
    for (Index k = 0; k < m; ++k) sorted[k] = out.lambda[order[static_cast<std::size_t>(k)]];
    out.lambda = sorted;
    for (Index k = 0; k < m; ++k) {
        if (std::abs(out.lambda[k].imag()) * step >= 0.9 * std::numbers::pi) {
            out.warnings.push_back(fmt::format(
                "|Im lambda| * step = {:.3f} is close to the aliasing limit pi",
                std::abs(out.lambda[k].imag()) * step));
        }
    }

    CMatrix vand(n, m);
    for (Index i = 0; i < n; ++i)
        for (Index k = 0; k < m; ++k) vand(i, k) = std::exp(out.lambda[k] * (static_cast<double>(i) * step));
    const CVector rhs = samples.cast<Complex>();
    out.residues = vand.colPivHouseholderQr().solve(rhs);
    // Make conjugate-paired residues exactly conjugate.
    for (Index k = 0; k < m; ++k) {
        if (std::abs(out.lambda[k].imag()) <= pair_tolerance(out.lambda[k])) {
            out.lambda[k] = Complex(out.lambda[k].real(), 0.0);
            out.residues[k] = Complex(out.residues[k].real(), 0.0);
            continue;
        }
        if (out.lambda[k].imag() < 0) continue;
        for (Index l2 = 0; l2 < m; ++l2) {
            if (l2 != k && std::abs(out.lambda[l2] - std::conj(out.lambda[k])) <=
                               1e-8 * (1.0 + std::abs(out.lambda[k]))) {
                const Complex avg = 0.5 * (out.residues[k] + std::conj(out.residues[l2]));
                out.lambda[l2] = std::conj(out.lambda[k]);
                out.residues[k] = avg;
                out.residues[l2] = std::conj(avg);
                break;
            }
        }
    }
    out.residual = (vand * out.residues - rhs).norm();
    return out;
}

ExpSumModel refine_least_squares(const ExpSumModel& init, const RVector& samples, double step,
                                 const RVector& weights, const RefineOptions& options) {
    if (init.lambda.size() != init.residues.size() || init.order() < 1) {
        fail(ErrorKind::InfeasibleInitializer, "initial model is empty or inconsistent");
    }
    if (weights.size() != 0 && weights.size() != samples.size()) {
        fail(ErrorKind::DimensionMismatch, "weights must match the samples");
    }
    if (weights.size() != 0 && (weights.array() < 0.0).any()) {
        fail(ErrorKind::InvalidArgument, "weights must be nonnegative");
    }
    const RVector sqrt_w =
        weights.size() == 0 ? RVector::Ones(samples.size()) : RVector(weights.cwiseSqrt());

    std::vector<Mode> modes = modes_from(init);
    const double initial = project(modes, samples, sqrt_w, step).objective;
    double objective = levenberg_marquardt(modes, samples, sqrt_w, step, options);
    if (objective > initial * (1.0 + 1e-12) + 1e-300) {
        fail(ErrorKind::Divergence, "least-squares refinement increased the objective");
    }

    bool pinned = false;
    if (options.pin_dominant) {
        Mode* nearest = nullptr;
        for (auto& m : modes) {
            if (!m.pair && (!nearest || std::abs(m.a) < std::abs(nearest->a))) nearest = &m;
        }
        if (nearest) {
            nearest->a = 0.0;
            nearest->fixed = true;
            pinned = true;
            modes = refit_pinned(modes, samples, sqrt_w, step, options);
        }
    }
    const Projection fin = project(modes, samples, sqrt_w, step);
    ExpSumModel out = to_model(modes, fin.coeffs);
    out.residual = std::sqrt(fin.objective);
    out.pinned_dominant = pinned;
    out.warnings = init.warnings;
    return out;
}

ExpSumModel fit_spectrum(const CorrTensor& c2, const SpectrumFitOptions& options) {
    const TwoPointSamples s = two_point_samples(c2);
    RVector weights;
    if (options.use_weights && s.std_err.size() > 0 && (s.std_err.array() > 0.0).all()) {
        weights = s.std_err.cwiseAbs2().cwiseInverse();
        weights /= weights.mean();
    }
    const ExpSumModel init = prony_initialize(s.values, s.step, options.m);
    RefineOptions ro;
    ro.pin_dominant = options.pin_dominant;
    ro.min_decay = options.min_decay >= 0.0
                       ? options.min_decay
                       : 1.0 / (static_cast<double>(s.values.size() - 1) * s.step);
    return refine_least_squares(init, s.values, s.step, weights, ro);
}

}  // namespace cmpstomo
