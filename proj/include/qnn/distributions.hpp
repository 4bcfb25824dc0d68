#pragma once

#include <array>
#include <string_view>

#include "qnn/rng.hpp"
#include "qnn/tensor.hpp"

namespace qnn::sawb {

// The six reference shapes the scale estimator is fitted on. Parameters are
// fixed: Gaussian(0, 1), Uniform[−1, 1], Laplace(0, 1), Logistic(0, 1),
// symmetric Triangle on [−2, 2], von Mises(0, κ = 4).
enum class Distribution { gaussian, uniform, laplace, logistic, triangle, vonmises };

inline constexpr std::array<Distribution, 6> kReferenceDistributions{
    Distribution::gaussian, Distribution::uniform,  Distribution::laplace,
    Distribution::logistic, Distribution::triangle, Distribution::vonmises,
};

std::string_view name(Distribution d);
Distribution distribution_from_name(std::string_view name);

double draw(Distribution d, Rng& rng);
// n i.i.d. draws as a 1-D tensor.
Tensor sample_distribution(Distribution d, std::size_t n, Rng& rng);

}  // namespace qnn::sawb
