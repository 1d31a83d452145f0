#pragma once

#include <cstdint>

#include "cmpstomo/cmps.hpp"
#include "cmpstomo/corr.hpp"

namespace cmpstomo {

struct GenerateOptions {
    Index d = 2;
    std::uint64_t seed = 0;
    double min_gap = 0.05;  // required -Re lambda_2 after normalization
    int max_attempts = 100;
};

struct GeneratedState {
    CmpsState state;
    int attempts = 0;
};

/// Random normalized state with i.i.d. standard complex Gaussian Q and R,
/// redrawn until R has a usable square root and the spectral gap exceeds
/// `min_gap`.
GeneratedState generate_state(const GenerateOptions& options);

/// Adds i.i.d. N(0, sigma^2) to every entry and records sigma as the
/// standard error. The stream depends on (seed, order) only.
void add_noise(CorrTensor& tensor, double sigma, std::uint64_t seed);

}  // namespace cmpstomo
