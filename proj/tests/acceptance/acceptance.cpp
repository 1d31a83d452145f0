// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Optional arguments select criteria by name.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <fmt/format.h>

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/corr.hpp"
#include "cmpstomo/error.hpp"
#include "cmpstomo/m_fit.hpp"
#include "cmpstomo/predict.hpp"
#include "cmpstomo/shot_sim.hpp"
#include "cmpstomo/spectrum_fit.hpp"
#include "cmpstomo/synth.hpp"
#include "cmpstomo/validate.hpp"

using namespace cmpstomo;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Largest deviation between fitted and true exponents, matching each true
// exponent to its nearest fitted one. Relative for nonzero exponents.
double lambda_error(const CVector& fit, const CVector& truth) {
    double worst = 0.0;
    for (Index k = 0; k < truth.size(); ++k) {
        double best = INFINITY;
        for (Index j = 0; j < fit.size(); ++j) best = std::min(best, std::abs(fit[j] - truth[k]));
        worst = std::max(worst, std::abs(truth[k]) > 0.0 ? best / std::abs(truth[k]) : best);
    }
    return worst;
}

Outcome oracle_equivalence() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> gap(0.0, 3.0), origin(-5.0, 5.0);
    double worst = 0.0;
    int evaluations = 0;
    for (int i = 0; i < 100; ++i) {
        const Index d = 1 + i % 3;
        const auto gs = generate_state({.d = d, .seed = 1000 + static_cast<std::uint64_t>(i)});
        const auto spec = spectral_decompose(gs.state);
        const auto res = residues_in_diagonal_basis(gs.state, spec);
        for (int n : {2, 4, 6}) {
            for (int rep = 0; rep < 5; ++rep) {
                std::vector<double> gaps(static_cast<std::size_t>(n - 1)), pos(static_cast<std::size_t>(n));
                pos[0] = origin(rng);
                for (int j = 0; j < n - 1; ++j) {
                    gaps[static_cast<std::size_t>(j)] = gap(rng);
                    pos[static_cast<std::size_t>(j + 1)] = pos[static_cast<std::size_t>(j)] + gaps[static_cast<std::size_t>(j)];
                }
                const double a = eval_correlator_direct(gs.state, pos).value;
                const double b = eval_correlator_diagonal(res, spec, gaps);
                worst = std::max(worst, std::abs(a - b) / std::max(std::abs(a), std::abs(b)));
                ++evaluations;
            }
        }
    }
    const double t = seconds_since(t0);
    return {worst < 1e-9 && t < 60.0,
            fmt::format("{} evaluations, 100 states, d in {{1,2,3}}, max rel diff {:.2e}, {:.1f} s",
                        evaluations, worst, t)};
}

struct LoopResult {
    double lambda_err = 0.0;
    double eps2 = 0.0, eps4 = 0.0, eps6 = 0.0, eps6_truth = 0.0;
    double objective = 0.0;
};

LoopResult run_loop(std::uint64_t seed, double sigma) {
    const auto gs = generate_state({.d = 2, .seed = seed});
    const auto spec = spectral_decompose(gs.state);
    const Grid1D grid{0.0, 0.2, 30};
    CorrTensor c2 = tabulate_exact(gs.state, 2, grid);
    CorrTensor c4 = tabulate_exact(gs.state, 4, grid);
    const CorrTensor c6 = tabulate_exact(gs.state, 6, grid);
    CorrTensor m6 = c6;
    if (sigma > 0.0) {
        add_noise(c2, sigma, seed);
        add_noise(c4, sigma, seed);
        add_noise(m6, sigma, seed);
    }
    MFitProblem p;
    p.spectrum = fit_spectrum(c2, {});
    p.target2 = c2;
    p.target4 = c4;
    p.real_m = false;
    p.num_starts = 100;
    p.seed = seed;
    const MFitResult fit = fit_m(p);
    const ReconstructedModel model{p.spectrum.lambda, fit.m, {}};
    const CorrTensor p6 = predict(model, 6, grid);
    LoopResult r;
    r.lambda_err = lambda_error(p.spectrum.lambda, spec.eigenvalues);
    r.eps2 = fit.eps2;
    r.eps4 = fit.eps4;
    r.eps6 = epsilon_metric(m6, p6).mean;
    r.eps6_truth = epsilon_metric(c6, p6).mean;
    r.objective = fit.objective;
    return r;
}

Outcome closed_loop() {
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto t0 = Clock::now();
        const LoopResult r = run_loop(seed, 0.0);
        const double t = seconds_since(t0);
        pass = pass && r.lambda_err < 1e-5 && r.eps6 < 1e-4 && t < 600.0;
        detail += fmt::format("{}seed {}: lambda rel err {:.1e}, eps6 {:.1e}, {:.0f} s",
                              detail.empty() ? "" : "; ", seed, r.lambda_err, r.eps6, t);
    }
    return {pass, "complex M, grid 0:0.2:30, 100 starts; " + detail};
}

Outcome noise_scaling() {
    const auto t0 = Clock::now();
    std::vector<double> e4, e6, e6t;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const LoopResult r = run_loop(seed, 0.01);
        e4.push_back(r.eps4);
        e6.push_back(r.eps6);
        e6t.push_back(r.eps6_truth);
        fmt::print("  noise seed {:2}: eps2 {:.4f} eps4 {:.4f} eps6 {:.4f} (vs truth {:.4f})\n", seed, r.eps2,
                   r.eps4, r.eps6, r.eps6_truth);
        std::fflush(stdout);
    }
    const double t = seconds_since(t0);
    const double m4 = median(e4), m6 = median(e6);
    const auto in_band = [](double v) { return v >= 0.003 && v <= 0.05; };
    return {in_band(m4) && in_band(m6) && t < 7200.0,
            fmt::format("sigma 0.01, 20 seeds: median eps4 {:.2f}%, median eps6 {:.2f}% (vs truth {:.2f}%), "
                        "{:.0f} s",
                        100 * m4, 100 * m6, 100 * median(e6t), t)};
}

Outcome global_phase_cancellation() {
    const auto t0 = Clock::now();
    const Grid1D grid{0.0, 1.0, 8};
    PhaseFieldModel model;
    model.kernel = ExponentialKernel{0.25, 10.0};
    model.seed = 77;
    const ShotEnsemble calm = sample_shots(model, grid, 10000);
    model.global_phase_spread = 5.0;
    const ShotEnsemble spread = sample_shots(model, grid, 10000);

    // Generic offsets: cancellation up to rounding.
    double generic = 0.0;
    for (int n : {2, 4, 6}) {
        const auto a = estimate_correlator(calm, n), b = estimate_correlator(spread, n);
        for (std::size_t i = 0; i < a.values().size(); ++i)
            generic = std::max(generic, std::abs(a.values()[i] - b.values()[i]));
    }

    // Offsets and phases on a binary lattice: every sum is exact, so the
    // estimates must agree bit for bit.
    RMatrix lattice = (calm.shots.array() * 64.0).round() / 64.0;
    RMatrix shifted = lattice;
    std::mt19937_64 rng(5);
    std::normal_distribution<double> offset(0.0, 5.0);
    for (Index s = 0; s < shifted.rows(); ++s) shifted.row(s).array() += std::round(offset(rng) * 8.0) / 8.0;
    bool identical = true;
    for (int n : {2, 4, 6}) {
        const auto a = estimate_correlator({grid, lattice}, n), b = estimate_correlator({grid, shifted}, n);
        identical = identical && a.values() == b.values();
    }

    const std::vector<int> odd{0, 2, 5};
    const double r0 = std::abs(raw_phase_average(calm, odd));
    const double r5 = std::abs(raw_phase_average(spread, odd));
    const double t = seconds_since(t0);
    return {identical && generic <= 1e-12 && r5 / r0 < 0.2 && t < 60.0,
            fmt::format("1e4 shots: lattice-phase even orders bit-identical: {}; generic max diff {:.1e}; "
                        "odd |avg| {:.3f} -> {:.4f} (ratio {:.3f}) at spread 5 rad; {:.1f} s",
                        identical ? "yes" : "no", generic, r0, r5, r5 / r0, t)};
}

Outcome metric_fidelity() {
    const Grid1D two{0.0, 1.0, 2};  // order-2 simplex of 3 entries
    CorrTensor c(2, two), rec(2, two);
    c.values() = {1.0, 0.9, 0.8};
    rec.values() = {1.0, 1.0, 1.0};
    const auto e = epsilon_metric(c, rec);
    const auto z = epsilon_metric(c, c);
    const bool fixture = std::abs(e.mean - 0.1) <= 1e-15 && std::abs(e.max - 0.2) <= 1e-15 &&
                         z.mean == 0.0 && z.max == 0.0;

    const auto gs = generate_state({.d = 2, .seed = 9});
    const Grid1D grid{0.0, 0.5, 6};
    const std::vector<std::pair<std::string, std::vector<double>>> rows{
        {"3 ms", {0.003, 0.014, 0.021}}, {"7 ms", {0.007, 0.055, 0.065}}, {"23 ms", {0.046, 0.148, 0.157}}};
    std::vector<ValidationReport> reports;
    bool scores = true;
    for (const auto& [label, dev] : rows) {
        std::vector<CorrTensor> measured, predicted;
        for (int i = 0; i < 3; ++i) {
            const int n = 2 * (i + 1);
            predicted.push_back(tabulate_exact(gs.state, n, grid));
            measured.push_back(predicted.back());
            for (double& v : measured.back().values()) v *= 1.0 + dev[static_cast<std::size_t>(i)];
        }
        reports.push_back(compare_tensors(measured, predicted, {}, label));
        for (int i = 0; i < 3; ++i)
            scores = scores && std::abs(reports.back().scores[static_cast<std::size_t>(i)].eps.mean -
                                        dev[static_cast<std::size_t>(i)]) < 1e-12;
    }
    const std::string table = render_table(reports);
    const bool layout = table.find("Correlation error") != std::string::npos &&
                        table.find("C2") != std::string::npos && table.find("C6") != std::string::npos &&
                        table.find("3 ms   |     0.3%     1.4%     2.1%") != std::string::npos &&
                        table.find("23 ms  |     4.6%    14.8%    15.7%") != std::string::npos &&
                        std::count(table.begin(), table.end(), '\n') == 6;
    fmt::print("{}", table);
    return {fixture && scores && layout,
            fmt::format("fixture mean {:.17g} max {:.17g}; identical (0, 0): {}; three-row table: {}", e.mean,
                        e.max, z.mean == 0.0 && z.max == 0.0 ? "yes" : "no", layout ? "yes" : "no")};
}

Outcome exponential_fit() {
    const double step = 0.1;
    const Index n = 40;
    RVector f(n), g(n);
    for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * step;
        f[i] = 0.6 * std::exp(-0.5 * t) + 0.4 * std::exp(-2.0 * t);
        g[i] = f[i] * std::exp(-0.3 * t);
    }
    const auto fit = refine_least_squares(prony_initialize(f, step, 2), f, step, {});
    const auto shifted = refine_least_squares(prony_initialize(g, step, 2), g, step, {});
    double lam = 0.0, res = 0.0, shift = 0.0;
    const double want_l[2] = {-0.5, -2.0}, want_r[2] = {0.6, 0.4};
    for (int k = 0; k < 2; ++k) {
        lam = std::max(lam, std::abs(fit.lambda[k] - want_l[k]));
        res = std::max(res, std::abs(fit.residues[k] - want_r[k]));
        shift = std::max(shift, std::abs(shifted.lambda[k] - (fit.lambda[k] - 0.3)));
    }
    return {lam < 1e-8 && res < 1e-8 && shift < 1e-6,
            fmt::format("lambda err {:.1e}, residue err {:.1e}, shift a=0.3 err {:.1e}", lam, res, shift)};
}

Outcome gauge_invariance() {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> n01(0.0, 1.0);
    std::uniform_real_distribution<double> scale(0.3, 3.0), phase(-3.0, 3.0);
    const Grid1D grid{0.0, 0.2, 12};
    double obj_worst = 0.0, rho_worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        const auto gs = generate_state({.d = 2, .seed = 500 + static_cast<std::uint64_t>(i)});
        const auto spec = spectral_decompose(gs.state);
        const auto res = residues_in_diagonal_basis(gs.state, spec);
        MFitProblem p;
        p.spectrum.lambda = spec.eigenvalues;
        p.spectrum.residues = two_point_residues(res.m, res.m_inv);
        p.target2 = tabulate_exact(gs.state, 2, grid);
        p.target4 = tabulate_exact(gs.state, 4, grid);
        p.real_m = false;
        const Index m = res.m.rows();
        CMatrix cand = res.m;
        for (Index a = 0; a < m; ++a)
            for (Index b = 0; b < m; ++b) cand(a, b) += 0.1 * Complex(n01(rng), n01(rng));
        CVector d(m);
        for (Index k = 0; k < m; ++k) d[k] = std::polar(scale(rng), phase(rng));
        const Complex c = std::polar(scale(rng), phase(rng));
        const CMatrix moved = c * d.asDiagonal() * cand * d.cwiseInverse().asDiagonal();

        const MObjective f(p);
        const double f0 = f(cand), f1 = f(moved);
        obj_worst = std::max(obj_worst, std::abs(f1 - f0) / f0);

        const CMatrix inv0 = cand.inverse(), inv1 = moved.inverse();
        std::vector<Index> k(5, 0);
        double scale_rho = 0.0, diff = 0.0;
        for (Index flat = 0; flat < m * m * m * m * m; ++flat) {
            Index rest = flat;
            for (auto& kj : k) {
                kj = rest % m;
                rest /= m;
            }
            for (std::size_t len : {1u, 3u, 5u}) {
                const std::span<const Index> ks(k.data(), len);
                const Complex r0 = rho_coefficient(cand, inv0, ks), r1 = rho_coefficient(moved, inv1, ks);
                scale_rho = std::max(scale_rho, std::abs(r0));
                diff = std::max(diff, std::abs(r1 - r0));
            }
        }
        rho_worst = std::max(rho_worst, diff / scale_rho);
    }
    return {obj_worst < 1e-12 && rho_worst < 1e-12,
            fmt::format("20 instances, M -> c D M D^-1: objective rel change {:.1e}, rho rel change {:.1e}",
                        obj_worst, rho_worst)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"oracle-equivalence", oracle_equivalence},
        {"closed-loop-noiseless", closed_loop},
        {"noise-scaling", noise_scaling},
        {"global-phase-cancellation", global_phase_cancellation},
        {"metric-fidelity", metric_fidelity},
        {"exponential-fit-exactness", exponential_fit},
        {"gauge-invariance", gauge_invariance},
    };
    std::vector<std::string> selected(argv + 1, argv + argc);
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        if (!selected.empty() && std::find(selected.begin(), selected.end(), name) == selected.end()) continue;
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        fmt::print("{} {}: {}\n", o.pass ? "PASS" : "FAIL", name, o.detail);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
