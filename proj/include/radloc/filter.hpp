#pragma once

#include <array>
#include <span>

#include "radloc/model.hpp"
#include "radloc/random.hpp"
#include "radloc/types.hpp"

namespace radloc {

/// One weighted hypothesis in source-parameter space. The id is a
/// lineage tag: resampled children keep the parent id, replacement
/// particles get fresh ids.
struct Particle {
  SourceParams params;
  std::uint64_t id = 0;
  double log_weight = 0.0;
};

struct ParticleSet {
  std::vector<Particle> particles;
  std::uint64_t next_id = 0;

  std::size_t size() const { return particles.size(); }
  double weight_sum() const;
  double effective_sample_size() const;
  double weight_entropy() const;
  /// Weighted mean of particle parameters.
  SourceParams weighted_mean() const;
};

struct JitterSigmas {
  Eigen::VectorXd position;   // cm, per axis
  double strength = 0.0;      // uCi
  double dipole = 0.0;        // uCi*cm, per component
};

struct FilterConfig {
  int n_particles = 1000;
  double fusion_range_cm = 400.0;
  JitterSigmas jitter;
  double replace_fraction = 0.05;            // applied once per time step
  std::array<double, 2> strength_window{0.0, 200.0};
  int steps_per_estimate = 3;                // s
  bool estimate_dipole = false;
  double dipole_window = 10000.0;            // uCi*cm, init range is +/- this
  double log_likelihood_floor = -50.0;       // per-measurement punishment cap
  double prior_jitter_cm = 0.0;              // 0 => default 2% of max extent
  double polish_range_cm = 0.0;              // 0 => fusion_range_cm
  bool batch_per_sweep = false;              // reweight whole sweep, then one resample

  void validate() const;
};

/// A candidate accepted by the labeling stage; its expected contribution
/// is folded into every subsequent likelihood evaluation.
struct ResolvedSource {
  SourceParams params;
  double confidence = 0.0;
  int iteration_found = 0;
};

struct InnerLoopDiagnostics {
  std::vector<double> ess_per_step;
  std::vector<double> entropy_per_step;
};

/// Fill defaults that depend on the problem scale: jitter sigmas at 2%
/// of each axis extent / strength window, fusion range at 1.25x the
/// trajectory pitch.
FilterConfig default_filter_config(const Environment& env,
                                   double trajectory_pitch_cm);

/// Uniform (or prior-guided) initialization with equal weights and
/// ids 0..n-1.
ParticleSet init_particles(const Environment& env, const FilterConfig& cfg,
                           const PriorPointSet* prior, RandomStream& rng);

/// Indices of particles within planar distance d of the pose.
std::vector<std::size_t> fusion_set(const ParticleSet& particles,
                                    const SensorPose& pose, double d);

/// Bayesian log-weight update over the measurement's fusion set only;
/// no normalization. Returns the affected indices.
std::vector<std::size_t> reweight(ParticleSet& particles, const Measurement& m,
                                  std::span<const ResolvedSource> resolved,
                                  const FilterConfig& cfg);

/// Systematic resampling within `subset`, children reset to the uniform
/// weight, with per-parameter Gaussian jitter, followed by optional
/// random replacement of a fraction of the full set, then a global
/// renormalization.
void resample(ParticleSet& particles, std::span<const std::size_t> subset,
              const FilterConfig& cfg, const Environment& env,
              RandomStream& rng, bool apply_replacement = true);

/// Rescale log weights so the set sums to 1.
void normalize(ParticleSet& particles);

/// Residual count mass unexplained by the resolved sources:
/// sum_i [ m_i - expected_intensity(S_i, resolved) ].
double checksum(std::span<const Measurement> measurements,
                std::span<const ResolvedSource> resolved);

/// Runs reweight + resample over each sweep in order; `sweeps` holds one
/// measurement list per time step. Random replacement fires once per
/// sweep, at its final measurement.
void run_inner_loop(ParticleSet& state,
                    std::span<const std::vector<Measurement>> sweeps,
                    std::span<const ResolvedSource> resolved,
                    const Environment& env, const FilterConfig& cfg,
                    RandomStream& rng,
                    InnerLoopDiagnostics* diagnostics = nullptr);

}  // namespace radloc
