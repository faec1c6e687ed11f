#include "radloc/model.hpp"

#include <cmath>
#include <stdexcept>

namespace radloc {

double flux_contribution(const SensorPose& sensor, const SourceParams& source) {
  if (sensor.height <= 0.0)
    throw std::invalid_argument("flux_contribution: sensor height must be > 0");
  const double d2 = (sensor.position - source.position).squaredNorm();
  return source.strength / (sensor.height * sensor.height + d2);
}

double dipole_flux_contribution(const SensorPose& sensor,
                                const SourceParams& source) {
  if (!source.dipole)
    throw std::invalid_argument(
        "dipole_flux_contribution: source has no dipole moment");
  const double mono = flux_contribution(sensor, source);
  const Eigen::VectorXd d = sensor.position - source.position;
  const double dn = d.norm();
  double dip = 0.0;
  if (dn > 0.0) {
    const double r2 = sensor.height * sensor.height + d.squaredNorm();
    dip = source.dipole->dot(d / dn) / (r2 * std::sqrt(r2));
  }
  return std::max(mono + dip, 0.0);
}

double source_flux(const SensorPose& sensor, const SourceParams& source) {
  return source.dipole ? dipole_flux_contribution(sensor, source)
                       : flux_contribution(sensor, source);
}

double expected_intensity(const SensorPose& sensor,
                          std::span<const SourceParams> sources) {
  double flux = 0.0;
  for (const auto& s : sources) flux += source_flux(sensor, s);
  return kCpsPerMicroCurie * sensor.efficiency * flux + sensor.background;
}

namespace {

// Transformed rejection with squeeze (Hoermann's PTRS), exact for large
// rates without per-draw table building.
long poisson_ptrs(double rate, RandomStream& rng) {
  const double slam = std::sqrt(rate);
  const double loglam = std::log(rate);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);

  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + rate + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<long>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        k * loglam - rate - std::lgamma(k + 1.0)) {
      return static_cast<long>(k);
    }
  }
}

}  // namespace

long sample_count(double rate, RandomStream& rng) {
  if (rate < 0.0)
    throw std::invalid_argument("sample_count: rate must be >= 0");
  if (rate == 0.0) return 0;
  if (rate < 30.0) {
    // Knuth multiplication.
    const double limit = std::exp(-rate);
    long k = 0;
    double prod = rng.uniform();
    while (prod > limit) {
      ++k;
      prod *= rng.uniform();
    }
    return k;
  }
  return poisson_ptrs(rate, rng);
}

double poisson_log_pmf(long x, double y) {
  if (x < 0) return -std::numeric_limits<double>::infinity();
  return static_cast<double>(x) * std::log(y) - y -
         std::lgamma(static_cast<double>(x) + 1.0);
}

double poisson_log_likelihood_normalized(long x, double y) {
  if (y <= 0.0)
    throw std::invalid_argument(
        "poisson_likelihood_normalized: rate must be > 0");
  const long mode = static_cast<long>(std::floor(y));
  if (x == mode) return 0.0;
  return poisson_log_pmf(x, y) - poisson_log_pmf(mode, y);
}

double poisson_likelihood_normalized(long x, double y) {
  return std::exp(poisson_log_likelihood_normalized(x, y));
}

}  // namespace radloc
