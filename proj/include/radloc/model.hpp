#pragma once

#include <span>

#include "radloc/random.hpp"
#include "radloc/types.hpp"

namespace radloc {

/// uCi -> CPS (Becquerel) conversion constant.
inline constexpr double kCpsPerMicroCurie = 3.7e4;

/// Monopole flux at a sensor: strength / (h^2 + |x - pos|^2).
/// Strictly decreasing in distance; requires height > 0.
double flux_contribution(const SensorPose& sensor, const SourceParams& source);

/// Monopole term plus dipole falloff (P . d_hat) / (h^2 + |d|^2)^{3/2},
/// clamped at zero. Requires source.dipole to be present.
double dipole_flux_contribution(const SensorPose& sensor,
                                const SourceParams& source);

/// Flux of a single source, dispatching on the presence of a dipole moment.
double source_flux(const SensorPose& sensor, const SourceParams& source);

/// Expected count rate (CPS): kCpsPerMicroCurie * E * sum(flux) + B.
double expected_intensity(const SensorPose& sensor,
                          std::span<const SourceParams> sources);

/// One Poisson(rate) draw from the stream. Knuth multiplication below
/// rate 30, transformed rejection (PTRS) above.
long sample_count(double rate, RandomStream& rng);

/// log of the Poisson pmf p(x | y), via lgamma.
double poisson_log_pmf(long x, double y);

/// Normalized likelihood p(x|y) / p(floor(y)|y) in (0, 1]; equals 1 at
/// x = floor(y). Requires y > 0.
double poisson_likelihood_normalized(long x, double y);

/// Log of the above; safe for counts whose raw mass underflows.
double poisson_log_likelihood_normalized(long x, double y);

}  // namespace radloc
