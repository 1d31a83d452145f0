#include "cmpstomo/synth.hpp"

#include <random>

#include "cmpstomo/error.hpp"
#include "cmpstomo/rng.hpp"

namespace cmpstomo {

GeneratedState generate_state(const GenerateOptions& options) {
    if (options.d < 1) fail(ErrorKind::InvalidArgument, "bond dimension d must be at least 1");
    if (options.max_attempts < 1) fail(ErrorKind::InvalidArgument, "max_attempts must be positive");
    std::mt19937_64 rng(stream_seed(options.seed, 0, 0));
    // Standard complex Gaussian: E|z|^2 = 1.
    std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
    const auto draw = [&] {
        CMatrix m(options.d, options.d);
        for (Index i = 0; i < m.rows(); ++i)
            for (Index j = 0; j < m.cols(); ++j) {
                const double re = normal(rng);
                m(i, j) = Complex(re, normal(rng));
            }
        return m;
    };
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        const CMatrix q = draw();
        const CMatrix r = draw();
        try {
            CmpsState s = normalize(CmpsState(q, r));
            const TransferSpectrum spec = spectral_decompose(s);
            if (options.d > 1 && -spec.eigenvalues[1].real() <= options.min_gap) continue;
            (void)residues_in_diagonal_basis(s, spec);
            return GeneratedState{std::move(s), attempt};
        } catch (const Error&) {
            // Degenerate or ill-conditioned draw; try again.
        }
    }
    fail(ErrorKind::InvalidArgument, "rejection budget exhausted: no acceptable state in " +
                                         std::to_string(options.max_attempts) + " draws");
}

void add_noise(CorrTensor& tensor, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) fail(ErrorKind::InvalidArgument, "noise sigma must be nonnegative");
    std::mt19937_64 rng(stream_seed(seed, static_cast<std::uint64_t>(tensor.order()), 3));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : tensor.values()) v += sigma * normal(rng);
    tensor.std_err() = std::vector<double>(tensor.values().size(), sigma);
}

}  // namespace cmpstomo
