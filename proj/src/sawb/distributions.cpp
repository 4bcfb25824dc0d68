#include "qnn/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qnn/error.hpp"

namespace qnn::sawb {
namespace {

constexpr double kVonMisesKappa = 4.0;
constexpr double kTriangleExtreme = 2.0;

// Best & Fisher (1979) rejection sampler.
double draw_vonmises(Rng& rng, double kappa) {
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    const double u1 = rng.uniform();
    const double u2 = rng.uniform_open();
    const double u3 = rng.uniform();
    const double z = std::cos(std::numbers::pi * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double theta = std::acos(std::clamp(f, -1.0, 1.0));
      return u3 < 0.5 ? -theta : theta;
    }
  }
}

}  // namespace

std::string_view name(Distribution d) {
  switch (d) {
    case Distribution::gaussian: return "gaussian";
    case Distribution::uniform: return "uniform";
    case Distribution::laplace: return "laplace";
    case Distribution::logistic: return "logistic";
    case Distribution::triangle: return "triangle";
    case Distribution::vonmises: return "vonmises";
  }
  return "?";
}

Distribution distribution_from_name(std::string_view n) {
  for (Distribution d : kReferenceDistributions) {
    if (name(d) == n) return d;
  }
  throw ParameterError("unknown distribution '" + std::string(n) + "'");
}

double draw(Distribution d, Rng& rng) {
  switch (d) {
    case Distribution::gaussian:
      return rng.normal();
    case Distribution::uniform:
      return 2.0 * rng.uniform() - 1.0;
    case Distribution::laplace: {
      const double u = rng.uniform_open() - 0.5;
      return u < 0.0 ? std::log(1.0 + 2.0 * u) : -std::log(1.0 - 2.0 * u);
    }
    case Distribution::logistic: {
      const double u = rng.uniform_open();
      return std::log(u / (1.0 - u));
    }
    case Distribution::triangle: {
      const double u = rng.uniform();
      const double a = kTriangleExtreme;
      return u < 0.5 ? -a + a * std::sqrt(2.0 * u) : a - a * std::sqrt(2.0 * (1.0 - u));
    }
    case Distribution::vonmises:
      return draw_vonmises(rng, kVonMisesKappa);
  }
  return 0.0;
}

Tensor sample_distribution(Distribution d, std::size_t n, Rng& rng) {
  if (n == 0) throw ParameterError("sample_distribution: n must be >= 1");
  Tensor out({n});
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(draw(d, rng));
  return out;
}

}  // namespace qnn::sawb
