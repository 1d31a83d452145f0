#include "cmpstomo/m_fit.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "cmpstomo/error.hpp"
#include "cmpstomo/predict.hpp"
#include "cmpstomo/rng.hpp"

namespace cmpstomo {

namespace {

constexpr double kSingularRcond = 1e-10;
constexpr double kTieTolerance = 1e-14;

struct StartOutcome {
    bool rejected = true;
    NelderMeadResult search;
};

CVector implied_residues(const CMatrix& m, const CMatrix& m_inv) {
    return m.row(0).transpose().cwiseProduct(m_inv.col(0));
}

double penalties(const CMatrix& m, const CMatrix& m_inv, const MFitProblem& p) {
    const CVector r = implied_residues(m, m_inv);
    return p.beta * (r - p.spectrum.residues).squaredNorm() +
           p.gamma * std::norm(r.sum() - Complex(1.0, 0.0));
}

bool invert(const CMatrix& m, CMatrix& m_inv) {
    const Eigen::PartialPivLU<CMatrix> lu(m);
    const double rc = lu.rcond();
    if (!(rc > kSingularRcond)) return false;
    m_inv = lu.inverse();
    return m_inv.allFinite();
}

ReconstructedModel as_model(const MFitProblem& p, const CMatrix& m) {
    ReconstructedModel model;
    model.lambda = p.spectrum.lambda;
    model.m = m;
    return model;
}

}  // namespace

void MFitProblem::validate() const {
    const Index m = dim();
    if (m < 1) fail(ErrorKind::InvalidArgument, "spectrum is empty");
    if (spectrum.residues.size() != m) {
        fail(ErrorKind::DimensionMismatch, "spectrum lambda and r lengths differ");
    }
    if (target4.order() != 4 || target2.order() != 2) {
        fail(ErrorKind::InvalidArgument, "targets must be order-4 and order-2 tensors");
    }
    if (!(target4.grid() == target2.grid())) {
        fail(ErrorKind::DimensionMismatch, "four- and two-point targets must share a grid");
    }
    if (num_starts < 1) fail(ErrorKind::InvalidArgument, "num_starts must be at least 1");
    if (!(beta >= 0.0) || !(gamma >= 0.0)) fail(ErrorKind::InvalidArgument, "beta and gamma must be nonnegative");
    if (threads < 1) fail(ErrorKind::InvalidArgument, "threads must be at least 1");
}

nlohmann::json to_json(const MFitResult& result) {
    nlohmann::json re = nlohmann::json::array(), im = nlohmann::json::array();
    for (Index i = 0; i < result.m.rows(); ++i)
        for (Index j = 0; j < result.m.cols(); ++j) {
            re.push_back(result.m(i, j).real());
            im.push_back(result.m(i, j).imag());
        }
    return nlohmann::json{{"M", re},
                          {"M_im", im},
                          {"objective", result.objective},
                          {"eps4", result.eps4},
                          {"eps2", result.eps2},
                          {"start_index", result.start_index},
                          {"converged", result.converged},
                          {"n_starts", result.num_starts},
                          {"rejected_starts", result.rejected_starts},
                          {"start_objective", result.start_objective},
                          {"polish_runs", result.polish_runs},
                          {"seed", result.seed}};
}

MObjective::MObjective(const MFitProblem& problem) : problem_(problem) {
    problem.validate();
    const Index m = problem.dim();
    const Index cube = m * m * m;
    const auto& grid = problem.target4.grid();
    const std::size_t rows = static_cast<std::size_t>(problem.target4.size());

    std::vector<CVector> decay(static_cast<std::size_t>(grid.count));
    for (Index g = 0; g < grid.count; ++g)
        decay[static_cast<std::size_t>(g)] =
            (problem.spectrum.lambda * (static_cast<double>(g) * grid.step)).array().exp().matrix();

    // Columns: Re Phi_{jkl} then -Im Phi_{jkl}, so that C4 = design * [Re rho; Im rho].
    RMatrix design(static_cast<Index>(rows), 2 * cube);
    std::vector<int> idx = problem.target4.indexer().first();
    Index row = 0;
    do {
        const CVector& e1 = decay[static_cast<std::size_t>(idx[1] - idx[0])];
        const CVector& e2 = decay[static_cast<std::size_t>(idx[2] - idx[1])];
        const CVector& e3 = decay[static_cast<std::size_t>(idx[3] - idx[2])];
        Index c = 0;
        for (Index j = 0; j < m; ++j)
            for (Index k = 0; k < m; ++k) {
                const Complex jk = e1[j] * e2[k];
                for (Index l = 0; l < m; ++l, ++c) {
                    const Complex phi = jk * e3[l];
                    design(row, c) = phi.real();
                    design(row, c + cube) = -phi.imag();
                }
            }
        ++row;
    } while (problem.target4.indexer().next(std::span<int>(idx)));

    const RVector t = Eigen::Map<const RVector>(problem.target4.values().data(),
                                                static_cast<Index>(rows));
    const Eigen::HouseholderQR<RMatrix> qr(design);
    const RVector qt = qr.householderQ().adjoint() * t;
    const Index keep = std::min<Index>(static_cast<Index>(rows), 2 * cube);
    r_factor_ = qr.matrixQR().topRows(keep).triangularView<Eigen::Upper>();
    projected_ = qt.head(keep);
    orthogonal_ = qt.tail(static_cast<Index>(rows) - keep).squaredNorm();
}

double MObjective::operator()(const CMatrix& m) const {
    CMatrix m_inv;
    if (!m.allFinite() || !invert(m, m_inv)) return std::numeric_limits<double>::infinity();
    const Index d = m.rows();
    const Index cube = d * d * d;
    RVector rho(2 * cube);
    Index c = 0;
    for (Index j = 0; j < d; ++j)
        for (Index k = 0; k < d; ++k) {
            const Complex jk = m(0, j) * m_inv(j, k);
            for (Index l = 0; l < d; ++l, ++c) {
                const Complex v = jk * m(k, l) * m_inv(l, 0);
                rho[c] = v.real();
                rho[c + cube] = v.imag();
            }
        }
    const double fit = (r_factor_ * rho - projected_).squaredNorm() + orthogonal_;
    return fit + penalties(m, m_inv, problem_);
}

double MObjective::direct(const CMatrix& m) const {
    CMatrix m_inv;
    if (!m.allFinite() || !invert(m, m_inv)) return std::numeric_limits<double>::infinity();
    const CorrTensor pred = predict(as_model(problem_, m), 4, problem_.target4.grid());
    double fit = 0.0;
    for (std::size_t i = 0; i < pred.values().size(); ++i)
        fit += std::pow(pred.values()[i] - problem_.target4.values()[i], 2);
    return fit + penalties(m, m_inv, problem_);
}

double objective(const CMatrix& m_candidate, const MFitProblem& problem) {
    return MObjective(problem)(m_candidate);
}

MGauge parse_gauge(const std::string& name) {
    if (name == "corner") return MGauge::Corner;
    if (name == "first-row") return MGauge::FirstRow;
    if (name == "residues") return MGauge::Residues;
    fail(ErrorKind::InvalidArgument, "unknown gauge '" + name + "' (corner, first-row, residues)");
}

std::string to_string(MGauge gauge) {
    switch (gauge) {
        case MGauge::Corner: return "corner";
        case MGauge::FirstRow: return "first-row";
        case MGauge::Residues: return "residues";
    }
    return "?";
}

MParametrization::MParametrization(const ExpSumModel& spectrum, bool real_m, MGauge gauge)
    : m_(spectrum.order()), real_m_(real_m), gauge_(gauge) {
    if (m_ < 1) fail(ErrorKind::InvalidArgument, "spectrum is empty");
    u_ = CMatrix::Identity(m_, m_);
    first_row_ = CVector::Ones(m_);
    if (real_m_) {
        const double h = 1.0 / std::sqrt(2.0);
        const Complex i1(0.0, 1.0);
        for (Index k = 0; k < m_; ++k) {
            const Complex z = spectrum.lambda[k];
            if (std::abs(z.imag()) <= 1e-10 * (1.0 + std::abs(z))) continue;
            const bool paired = z.imag() > 0 && k + 1 < m_ &&
                                std::abs(spectrum.lambda[k + 1] - std::conj(z)) <= 1e-8 * (1.0 + std::abs(z));
            if (!paired) {
                fail(ErrorKind::InvalidArgument,
                     "real M needs a spectrum of real values and adjacent conjugate pairs");
            }
            u_(k, k) = h;
            u_(k, k + 1) = h;
            u_(k + 1, k) = -i1 * h;
            u_(k + 1, k + 1) = i1 * h;
            first_row_[k + 1] = 0.0;
            ++k;
        }
        if (u_(0, 0) != Complex(1.0, 0.0)) {
            fail(ErrorKind::InvalidArgument, "real M needs a real leading eigenvalue");
        }
    }
    u_inv_ = u_.adjoint();
    // r_k = M_{0k} (M^{-1})_{k0}, so the constraint on B is B U (r / t) = e1
    // with t the fixed first row of M.
    const CVector t = first_row_of_m().transpose();
    residues_b_ = u_ * (gauge_ == MGauge::Corner ? spectrum.residues
                                                  : CVector(spectrum.residues.cwiseQuotient(t)));
    if (real_m_) residues_b_ = residues_b_.real().cast<Complex>();
    residues_b_.cwiseAbs().maxCoeff(&pivot_);
    if (gauge_ == MGauge::Residues && !(std::abs(residues_b_[pivot_]) > 0.0)) {
        fail(ErrorKind::InvalidArgument, "two-point residues vanish; residue gauge undefined");
    }
    Index free = 0;
    for (Index i = 0; i < m_; ++i)
        for (Index j = 0; j < m_; ++j)
            if (!is_gauge_entry(i, j)) ++free;
    size_ = real_m_ ? free : 2 * free;
}

bool MParametrization::is_gauge_entry(Index i, Index j) const {
    if (i == 0) return gauge_ != MGauge::Corner || j == 0;
    return gauge_ == MGauge::Residues && j == pivot_;
}

CMatrix MParametrization::to_m(const CMatrix& b) const { return u_inv_ * b * u_; }
CMatrix MParametrization::to_b(const CMatrix& m) const { return u_ * m * u_inv_; }

void MParametrization::fix(CMatrix& b) const {
    if (gauge_ == MGauge::Corner) {
        b(0, 0) = 1.0;
        return;
    }
    b.row(0) = first_row_.transpose();
    if (gauge_ != MGauge::Residues) return;
    // Rows below the first are orthogonal to the scaled residues.
    for (Index i = 1; i < m_; ++i) {
        Complex acc(0.0, 0.0);
        for (Index j = 0; j < m_; ++j)
            if (j != pivot_) acc += b(i, j) * residues_b_[j];
        b(i, pivot_) = -acc / residues_b_[pivot_];
    }
}

RVector MParametrization::collect(const CMatrix& b) const {
    RVector x(size_);
    const Index half = real_m_ ? size_ : size_ / 2;
    Index p = 0;
    for (Index i = 0; i < m_; ++i)
        for (Index j = 0; j < m_; ++j) {
            if (is_gauge_entry(i, j)) continue;
            x[p] = b(i, j).real();
            if (!real_m_) x[p + half] = b(i, j).imag();
            ++p;
        }
    return x;
}

CMatrix MParametrization::unpack(const RVector& x) const {
    if (x.size() != size_) fail(ErrorKind::DimensionMismatch, "parameter vector has the wrong length");
    CMatrix b = CMatrix::Zero(m_, m_);
    const Index half = real_m_ ? size_ : size_ / 2;
    Index p = 0;
    for (Index i = 0; i < m_; ++i)
        for (Index j = 0; j < m_; ++j) {
            if (is_gauge_entry(i, j)) continue;
            b(i, j) = Complex(x[p], real_m_ ? 0.0 : x[p + half]);
            ++p;
        }
    fix(b);
    return to_m(b);
}

RVector MParametrization::from_entries(const RMatrix& re, const RMatrix& im) const {
    CMatrix b(m_, m_);
    for (Index i = 0; i < m_; ++i)
        for (Index j = 0; j < m_; ++j) b(i, j) = Complex(re(i, j), real_m_ ? 0.0 : im(i, j));
    fix(b);
    return collect(b);
}

RVector MParametrization::pack(const CMatrix& m) const {
    if (m.rows() != m_ || m.cols() != m_) fail(ErrorKind::DimensionMismatch, "M has the wrong size");
    const CMatrix b = to_b(apply_gauge(m, *this));
    if (real_m_ && b.imag().norm() > 1e-8 * b.norm()) {
        fail(ErrorKind::InvalidArgument, "M is not of real form for this spectrum");
    }
    return collect(b);
}

CMatrix apply_gauge(const CMatrix& m, const MParametrization& param) {
    if (std::abs(m(0, 0)) == 0.0) fail(ErrorKind::InvalidArgument, "M[0,0] vanishes; gauge undefined");
    const CMatrix scaled = m / m(0, 0);
    if (param.gauge() == MGauge::Corner) return scaled;
    // (D M D^{-1})_{0j} = M_{0j} / D_j with D_0 = 1.
    const Eigen::RowVectorXcd target = param.first_row_of_m();
    CVector dg(m.rows());
    for (Index j = 0; j < m.rows(); ++j) {
        if (std::abs(scaled(0, j)) == 0.0) fail(ErrorKind::InvalidArgument, "M has a zero in its first row");
        dg[j] = scaled(0, j) / target[j];
    }
    return dg.asDiagonal() * scaled * dg.cwiseInverse().asDiagonal();
}

MFitResult fit_m(const MFitProblem& problem) {
    const MObjective obj(problem);
    const Index d = problem.dim();
    const MParametrization param(problem.spectrum, problem.real_m, problem.gauge);
    const auto f = [&](const RVector& x) { return obj(param.unpack(x)); };

    std::vector<StartOutcome> outcomes(static_cast<std::size_t>(problem.num_starts));
    const auto run_start = [&](int s) {
        std::mt19937_64 rng(stream_seed(problem.seed, static_cast<std::uint64_t>(s)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        RMatrix re(d, d), im = RMatrix::Zero(d, d);
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j) {
                re(i, j) = u(rng);
                if (!problem.real_m) im(i, j) = u(rng);
            }
        const RVector x0 = param.from_entries(re, im);
        auto& out = outcomes[static_cast<std::size_t>(s)];
        if (!std::isfinite(f(x0))) return;
        out.rejected = false;
        out.search = nelder_mead(f, x0, problem.search);
    };

    const int workers = std::min(problem.threads, problem.num_starts);
    if (workers <= 1) {
        for (int s = 0; s < problem.num_starts; ++s) run_start(s);
    } else {
        std::atomic<int> next{0};
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&] {
                for (int s = next++; s < problem.num_starts; s = next++) run_start(s);
            });
        for (auto& t : pool) t.join();
    }

    MFitResult result;
    RVector best;
    result.num_starts = problem.num_starts;
    result.seed = problem.seed;
    for (int s = 0; s < problem.num_starts; ++s) {
        const auto& o = outcomes[static_cast<std::size_t>(s)];
        if (o.rejected) {
            ++result.rejected_starts;
            continue;
        }
        const double v = o.search.value;
        const bool better = result.start_index < 0 ||
                            v < result.objective - kTieTolerance * std::max(std::abs(v), std::abs(result.objective));
        if (better) {
            result.start_index = s;
            result.objective = v;
            result.converged = o.search.converged;
            best = o.search.x;
        }
    }
    if (result.start_index < 0 || !std::isfinite(result.objective)) {
        fail(ErrorKind::FitFailed, "every Nelder-Mead start was rejected (singular initial M)");
    }
    result.start_objective = result.objective;

    NelderMeadOptions polish = problem.search;
    polish.initial_step = problem.polish_step;
    for (int k = 0; k < problem.polish_restarts && result.objective > 0.0; ++k) {
        const NelderMeadResult run = nelder_mead(f, best, polish);
        ++result.polish_runs;
        if (!(run.value < result.objective)) break;
        const bool small_gain = run.value > 0.99 * result.objective;
        best = run.x;
        result.objective = run.value;
        result.converged = run.converged;
        if (small_gain) break;
    }
    result.m = param.unpack(best);
    const ReconstructedModel model = as_model(problem, result.m);
    result.eps4 = epsilon_metric(problem.target4, predict(model, 4, problem.target4.grid())).mean;
    result.eps2 = epsilon_metric(problem.target2, predict(model, 2, problem.target2.grid())).mean;
    return result;
}

}  // namespace cmpstomo
