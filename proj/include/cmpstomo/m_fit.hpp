#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

#include "cmpstomo/corr.hpp"
#include "cmpstomo/nelder_mead.hpp"
#include "cmpstomo/spectrum_fit.hpp"

namespace cmpstomo {

/// How the rescaling and diagonal-similarity freedom of M is removed.
/// `Corner` fixes only M[0,0] = 1. `FirstRow` fixes the whole first row,
/// which also removes M -> D M D^{-1}. `Residues` additionally solves the
/// two-point condition (M^{-1})_{k0} = r_k exactly, one entry per row, so
/// the residue penalty vanishes identically.
enum class MGauge { Corner, FirstRow, Residues };

MGauge parse_gauge(const std::string& name);
std::string to_string(MGauge gauge);
struct MFitProblem {
    ExpSumModel spectrum;
    CorrTensor target4{4, Grid1D{}};
    CorrTensor target2{2, Grid1D{}};
    bool real_m = true;
    int num_starts = 100;
    std::uint64_t seed = 0;
    double beta = 1.0;   // weight of the two-point residue penalty
    double gamma = 1.0;  // weight of the normalization penalty
    MGauge gauge = MGauge::Residues;
    NelderMeadOptions search{.adaptive = true};
    /// Fresh Nelder-Mead runs from the winning point after the multi-start
    /// phase, stopping early once a run improves by less than 1%.
    int polish_restarts = 20;
    double polish_step = 0.05;
    int threads = 1;

    Index dim() const { return spectrum.order(); }
    void validate() const;
};

struct MFitResult {
    CMatrix m;
    double objective = 0.0;
    double eps4 = 0.0;
    double eps2 = 0.0;
    int start_index = -1;
    bool converged = false;
    int num_starts = 0;
    int rejected_starts = 0;
    int polish_runs = 0;
    double start_objective = 0.0;  // best value before polishing
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const MFitResult& result);

/// Precomputes everything about the four-point target that does not depend
/// on M, so one evaluation costs O(m^6) instead of a pass over the simplex.
class MObjective {
public:
    explicit MObjective(const MFitProblem& problem);

    /// Sum over the simplex of (C4_pred - C4)^2 + beta |r(M) - r_fit|^2 +
    /// gamma (sum r(M) - 1)^2. +inf when M is numerically singular.
    double operator()(const CMatrix& m) const;

    /// Same value computed pass by pass over the simplex, for checking.
    double direct(const CMatrix& m) const;

private:
    const MFitProblem& problem_;
    RMatrix r_factor_;    // triangular factor of the real design matrix
    RVector projected_;   // Q^T t
    double orthogonal_;   // |t - Q Q^T t|^2
};

/// Convenience wrapper; builds the precomputation on every call.
double objective(const CMatrix& m_candidate, const MFitProblem& problem);

/// Parameter vector <-> gauge-fixed M. In real mode M = U^{-1} B U with B
/// real, where U takes each conjugate pair (k, k') of the spectrum to its
/// cosine and sine components; for a real-valued state this is exactly the
/// form the residue matrix takes. In complex mode B = M.
class MParametrization {
public:
    MParametrization(const ExpSumModel& spectrum, bool real_m, MGauge gauge);

    Index size() const { return size_; }
    CMatrix unpack(const RVector& x) const;
    /// Parameters of `m` after moving it into the gauge. Throws
    /// InvalidArgument when `m` cannot be represented (e.g. not of real form).
    RVector pack(const CMatrix& m) const;
    /// Maps freely drawn entries of B onto the gauge slice.
    RVector from_entries(const RMatrix& re, const RMatrix& im) const;

    MGauge gauge() const { return gauge_; }
    bool real_m() const { return real_m_; }
    /// First row every gauge-fixed M shares (FirstRow and Residues gauges).
    Eigen::RowVectorXcd first_row_of_m() const { return first_row_.transpose() * u_; }

private:
    CMatrix to_m(const CMatrix& b) const;
    CMatrix to_b(const CMatrix& m) const;
    void fix(CMatrix& b) const;
    RVector collect(const CMatrix& b) const;
    bool is_gauge_entry(Index i, Index j) const;

    Index m_;
    bool real_m_;
    MGauge gauge_;
    CMatrix u_, u_inv_;
    CVector first_row_;   // fixed first row of B
    CVector residues_b_;  // U r_fit
    Index pivot_ = 0;
    Index size_ = 0;
};

/// Brings M into the gauge by M -> c D M D^{-1}, with D compatible with the
/// real form in real mode.
CMatrix apply_gauge(const CMatrix& m, const MParametrization& param);

/// Multi-start Nelder-Mead; start s draws its initial entries from a
/// generator seeded by (seed, s). Lowest objective wins, earlier start on
/// ties. Throws FitFailed when every start is singular.
MFitResult fit_m(const MFitProblem& problem);

}  // namespace cmpstomo
