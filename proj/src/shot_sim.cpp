#include "cmpstomo/shot_sim.hpp"

#include <cmath>
#include <random>
#include <set>

#include <Eigen/Eigenvalues>

#include "cmpstomo/error.hpp"
#include "cmpstomo/rng.hpp"

namespace cmpstomo {

namespace {

constexpr double kPsdTolerance = 1e-10;

}  // namespace

RMatrix kernel_matrix(const PhaseFieldModel& model, const Grid1D& grid) {
    grid.validate();
    if (const auto* mk = std::get_if<MatrixKernel>(&model.kernel)) {
        if (mk->covariance.rows() != grid.count || mk->covariance.cols() != grid.count) {
            fail(ErrorKind::DimensionMismatch, "covariance matrix does not match the grid");
        }
        return mk->covariance;
    }
    const auto& ek = std::get<ExponentialKernel>(model.kernel);
    if (!(ek.sigma2 >= 0.0) || !(ek.xi > 0.0)) {
        fail(ErrorKind::InvalidArgument, "exponential kernel needs sigma2 >= 0 and xi > 0");
    }
    RMatrix k(grid.count, grid.count);
    for (Index i = 0; i < grid.count; ++i)
        for (Index j = 0; j < grid.count; ++j)
            k(i, j) = ek.sigma2 * std::exp(-std::abs(grid.position(i) - grid.position(j)) / ek.xi);
    return k;
}

ShotEnsemble sample_shots(const PhaseFieldModel& model, const Grid1D& grid, Index num_shots) {
    if (num_shots < 1) fail(ErrorKind::InvalidArgument, "num_shots must be at least 1");
    if (!(model.global_phase_spread >= 0.0)) {
        fail(ErrorKind::InvalidArgument, "global_phase_spread must be nonnegative");
    }
    const RMatrix k = kernel_matrix(model, grid);
    if (!k.isApprox(k.transpose(), 1e-12)) fail(ErrorKind::NonPsdKernel, "kernel is not symmetric");

    // Symmetric factor K = F F^T with small negative eigenvalues clipped.
    const Eigen::SelfAdjointEigenSolver<RMatrix> eig(0.5 * (k + k.transpose()));
    RVector ev = eig.eigenvalues();
    if (ev.minCoeff() < -kPsdTolerance) {
        fail(ErrorKind::NonPsdKernel, "kernel matrix has a negative eigenvalue below -1e-10");
    }
    ev = ev.cwiseMax(0.0);
    const RMatrix factor = eig.eigenvectors() * ev.cwiseSqrt().asDiagonal();

    ShotEnsemble out;
    out.grid = grid;
    out.shots.resize(num_shots, grid.count);
    RVector z(grid.count);
    for (Index s = 0; s < num_shots; ++s) {
        std::mt19937_64 field_rng(stream_seed(model.seed, static_cast<std::uint64_t>(s), 1));
        std::mt19937_64 global_rng(stream_seed(model.seed, static_cast<std::uint64_t>(s), 2));
        std::normal_distribution<double> normal(0.0, 1.0);
        for (Index i = 0; i < grid.count; ++i) z[i] = normal(field_rng);
        std::normal_distribution<double> global(0.0, 1.0);
        const double offset = model.global_phase_spread * global(global_rng);
        out.shots.row(s) = (factor * z).transpose().array() + offset;
    }
    return out;
}

double gaussian_two_point(const ExponentialKernel& kernel, double distance) {
    // Var(phi(x) - phi(y)) = 2 sigma2 (1 - e^{-|x-y|/xi}).
    return std::exp(-kernel.sigma2 * (1.0 - std::exp(-std::abs(distance) / kernel.xi)));
}

PhaseFieldModel phase_model_from_json(const nlohmann::json& j) {
    static const std::set<std::string> known{"kernel", "sigma2", "xi", "global_phase_spread", "seed"};
    if (!j.is_object()) fail(ErrorKind::InvalidArgument, "phase model config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.count(key)) fail(ErrorKind::InvalidArgument, "unknown phase model key '" + key + "'");
    }
    PhaseFieldModel m;
    const std::string kind = j.value("kernel", std::string("exp"));
    if (kind != "exp") fail(ErrorKind::InvalidArgument, "unsupported kernel '" + kind + "'");
    ExponentialKernel ek;
    ek.sigma2 = j.value("sigma2", ek.sigma2);
    ek.xi = j.value("xi", ek.xi);
    m.kernel = ek;
    m.global_phase_spread = j.value("global_phase_spread", 0.0);
    m.seed = j.value("seed", std::uint64_t{0});
    return m;
}

nlohmann::json to_json(const PhaseFieldModel& model) {
    nlohmann::json j{{"global_phase_spread", model.global_phase_spread}, {"seed", model.seed}};
    if (const auto* ek = std::get_if<ExponentialKernel>(&model.kernel)) {
        j["kernel"] = "exp";
        j["sigma2"] = ek->sigma2;
        j["xi"] = ek->xi;
    } else {
        j["kernel"] = "matrix";
    }
    return j;
}

}  // namespace cmpstomo
