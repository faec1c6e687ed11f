#include "radloc/filter.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

namespace radloc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Worker cap from RADLOC_THREADS (default: single-threaded). The only
// parallel stage is the reweight map, whose per-particle updates are
// independent, so results are bit-identical for any worker count.
unsigned worker_count() {
  if (const char* env = std::getenv("RADLOC_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return 1;
}

double log_sum_exp(std::span<const double> xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double sum = 0.0;
  for (double x : xs) sum += std::exp(x - mx);
  return mx + std::log(sum);
}

Eigen::VectorXd uniform_in_bounds(const Environment& env, RandomStream& rng) {
  Eigen::VectorXd p(env.dimension());
  for (int i = 0; i < env.dimension(); ++i)
    p[i] = rng.uniform(env.bounds(i, 0), env.bounds(i, 1));
  return p;
}

SourceParams fresh_params(const Environment& env, const FilterConfig& cfg,
                          RandomStream& rng) {
  SourceParams s;
  s.position = uniform_in_bounds(env, rng);
  s.strength = rng.uniform(cfg.strength_window[0], cfg.strength_window[1]);
  if (cfg.estimate_dipole) {
    Eigen::VectorXd d(env.dimension());
    for (int i = 0; i < env.dimension(); ++i)
      d[i] = rng.uniform(-cfg.dipole_window, cfg.dipole_window);
    s.dipole = std::move(d);
  }
  return s;
}

// Replace a fraction of the full set with fresh uniform particles on
// new lineages, then renormalize. Keeps dormant regions discoverable.
void random_replacement(ParticleSet& set, const FilterConfig& cfg,
                        const Environment& env, RandomStream& rng) {
  const std::size_t n = set.size();
  const std::size_t k = static_cast<std::size_t>(
      std::lround(cfg.replace_fraction * static_cast<double>(n)));
  if (k == 0) return;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i)
    std::swap(idx[i], idx[i + rng.index(n - i)]);
  const double lw = -std::log(static_cast<double>(n));
  for (std::size_t i = 0; i < k; ++i) {
    Particle& p = set.particles[idx[i]];
    p.params = fresh_params(env, cfg, rng);
    p.id = set.next_id++;
    p.log_weight = lw;
  }
  normalize(set);
}

}  // namespace

double ParticleSet::weight_sum() const {
  double s = 0.0;
  for (const auto& p : particles) s += std::exp(p.log_weight);
  return s;
}

double ParticleSet::effective_sample_size() const {
  double s2 = 0.0;
  for (const auto& p : particles) {
    const double w = std::exp(p.log_weight);
    s2 += w * w;
  }
  return s2 > 0.0 ? 1.0 / s2 : 0.0;
}

double ParticleSet::weight_entropy() const {
  double h = 0.0;
  for (const auto& p : particles) {
    const double w = std::exp(p.log_weight);
    if (w > 0.0) h -= w * std::log(w);
  }
  return h;
}

SourceParams ParticleSet::weighted_mean() const {
  SourceParams mean;
  if (particles.empty()) return mean;
  const int dim = particles.front().params.dimension();
  mean.position = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd dip = Eigen::VectorXd::Zero(dim);
  double wsum = 0.0, dipw = 0.0;
  for (const auto& p : particles) {
    const double w = std::exp(p.log_weight);
    mean.position += w * p.params.position;
    mean.strength += w * p.params.strength;
    wsum += w;
    if (p.params.dipole) {
      dip += w * *p.params.dipole;
      dipw += w;
    }
  }
  if (wsum > 0.0) {
    mean.position /= wsum;
    mean.strength /= wsum;
  }
  if (dipw > 0.0) mean.dipole = dip / dipw;
  return mean;
}

void FilterConfig::validate() const {
  if (n_particles < 100)
    throw std::invalid_argument("FilterConfig: n_particles must be >= 100");
  if (fusion_range_cm <= 0.0)
    throw std::invalid_argument("FilterConfig: fusion_range_cm must be > 0");
  if (replace_fraction < 0.0 || replace_fraction > 0.2)
    throw std::invalid_argument(
        "FilterConfig: replace_fraction must be in [0, 0.2]");
  if (!(strength_window[0] < strength_window[1]) || strength_window[0] < 0.0)
    throw std::invalid_argument("FilterConfig: bad strength window");
  if (steps_per_estimate < 0)
    throw std::invalid_argument("FilterConfig: steps_per_estimate must be >= 0");
}

FilterConfig default_filter_config(const Environment& env,
                                   double trajectory_pitch_cm) {
  FilterConfig cfg;
  // 1.25x the coverage pitch keeps each particle under the influence of
  // the handful of nearest poses. Wider ranges were measured to let a
  // sensor parked over one source veto well-placed particles at a
  // neighboring source a few hundred cm away, merging distinct sources.
  cfg.fusion_range_cm = 1.25 * trajectory_pitch_cm;
  cfg.jitter.position = 0.02 * env.extent();
  cfg.jitter.strength = 0.02 * (cfg.strength_window[1] - cfg.strength_window[0]);
  cfg.jitter.dipole = 0.02 * cfg.dipole_window;
  cfg.prior_jitter_cm = 0.02 * env.extent().maxCoeff();
  return cfg;
}

ParticleSet init_particles(const Environment& env, const FilterConfig& cfg,
                           const PriorPointSet* prior, RandomStream& rng) {
  cfg.validate();
  env.validate();

  std::vector<double> cum;
  if (prior) {
    if (prior->empty())
      throw std::invalid_argument("init_particles: prior point set is empty");
    for (const auto& p : prior->points)
      if (p.size() != env.dimension())
        throw std::invalid_argument(
            "init_particles: prior point dimension mismatch");
    if (!prior->weights.empty()) {
      cum.reserve(prior->size());
      double acc = 0.0;
      for (double w : prior->weights) cum.push_back(acc += w);
      if (acc <= 0.0)
        throw std::invalid_argument("init_particles: prior weights sum to 0");
    }
  }
  const double prior_sigma =
      cfg.prior_jitter_cm > 0.0 ? cfg.prior_jitter_cm
                                : 0.02 * env.extent().maxCoeff();

  ParticleSet set;
  set.particles.reserve(static_cast<std::size_t>(cfg.n_particles));
  const double lw = -std::log(static_cast<double>(cfg.n_particles));
  for (int i = 0; i < cfg.n_particles; ++i) {
    Particle p;
    p.params = fresh_params(env, cfg, rng);
    if (prior) {
      std::size_t j;
      if (cum.empty()) {
        j = rng.index(prior->size());
      } else {
        const double u = rng.uniform() * cum.back();
        j = static_cast<std::size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        j = std::min(j, prior->size() - 1);
      }
      Eigen::VectorXd pos = prior->points[j];
      for (Eigen::Index a = 0; a < pos.size(); ++a)
        pos[a] += prior_sigma * rng.normal();
      p.params.position = env.clamp(std::move(pos));
    }
    p.id = set.next_id++;
    p.log_weight = lw;
    set.particles.push_back(std::move(p));
  }
  return set;
}

std::vector<std::size_t> fusion_set(const ParticleSet& particles,
                                    const SensorPose& pose, double d) {
  if (d <= 0.0)
    throw std::invalid_argument("fusion_set: range must be > 0");
  const double d2 = d * d;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < particles.size(); ++i) {
    // Planar (xy) distance: the sensor flies in a plane above the
    // scene, so its vertical offset must not shrink its fusion disc.
    if ((pose.position.head(2) -
         particles.particles[i].params.position.head(2))
            .squaredNorm() <= d2)
      out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> reweight(ParticleSet& particles, const Measurement& m,
                                  std::span<const ResolvedSource> resolved,
                                  const FilterConfig& cfg) {
  std::vector<std::size_t> subset =
      fusion_set(particles, m.pose, cfg.fusion_range_cm);
  if (subset.empty()) return subset;

  // Resolved contribution and background are shared by every particle
  // hypothesis at this pose.
  double resolved_flux = 0.0;
  for (const auto& r : resolved) resolved_flux += source_flux(m.pose, r.params);
  const double base_rate =
      kCpsPerMicroCurie * m.pose.efficiency * resolved_flux + m.pose.background;

  const auto update = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t j = lo; j < hi; ++j) {
      Particle& p = particles.particles[subset[j]];
      const double rate = base_rate + kCpsPerMicroCurie * m.pose.efficiency *
                                          source_flux(m.pose, p.params);
      double log_factor;
      if (rate <= 0.0) {
        log_factor = (m.count == 0) ? 0.0 : cfg.log_likelihood_floor;
      } else {
        log_factor = std::max(poisson_log_likelihood_normalized(m.count, rate),
                              cfg.log_likelihood_floor);
      }
      p.log_weight += log_factor;
    }
  };

  const unsigned workers =
      std::min<unsigned>(worker_count(),
                         static_cast<unsigned>((subset.size() + 255) / 256));
  if (workers <= 1) {
    update(0, subset.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (subset.size() + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(subset.size(), lo + chunk);
      if (lo < hi) pool.emplace_back(update, lo, hi);
    }
    for (auto& t : pool) t.join();
  }
  return subset;
}

void normalize(ParticleSet& particles) {
  std::vector<double> lws;
  lws.reserve(particles.size());
  for (const auto& p : particles.particles) lws.push_back(p.log_weight);
  const double lse = log_sum_exp(lws);
  if (!std::isfinite(lse)) {
    const double lw = -std::log(static_cast<double>(particles.size()));
    for (auto& p : particles.particles) p.log_weight = lw;
    return;
  }
  for (auto& p : particles.particles) p.log_weight -= lse;
}

void resample(ParticleSet& particles, std::span<const std::size_t> subset,
              const FilterConfig& cfg, const Environment& env,
              RandomStream& rng, bool apply_replacement) {
  if (subset.empty())
    throw std::invalid_argument("resample: subset must be nonempty");
  const std::size_t n = subset.size();

  std::vector<double> lws;
  lws.reserve(n);
  for (std::size_t i : subset)
    lws.push_back(particles.particles[i].log_weight);
  const double lmass = log_sum_exp(lws);

  if (!std::isfinite(lmass)) {
    // Degeneracy recovery: every weight in the subset vanished.
    const double lw = -std::log(static_cast<double>(particles.size()));
    for (std::size_t i : subset) {
      Particle& p = particles.particles[i];
      p.params = fresh_params(env, cfg, rng);
      p.id = particles.next_id++;
      p.log_weight = lw;
    }
  } else {
    std::vector<double> cum(n);
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      cum[j] = acc += std::exp(lws[j] - lmass);

    // Systematic (low-variance) resampling within the subset. Children
    // restart at the uniform weight: the likelihood information is
    // consumed by selection. Carrying the subset mass forward instead
    // lets rarely-visited regions accumulate all relative weight, since
    // every normalized-likelihood factor is <= 1.
    std::vector<Particle> children;
    children.reserve(n);
    const double child_lw =
        -std::log(static_cast<double>(particles.size()));
    const double u0 = rng.uniform() / static_cast<double>(n);
    std::size_t j = 0;
    for (std::size_t c = 0; c < n; ++c) {
      const double u = u0 + static_cast<double>(c) / static_cast<double>(n);
      while (j + 1 < n && cum[j] < u * acc) ++j;
      Particle child = particles.particles[subset[j]];
      for (Eigen::Index a = 0; a < child.params.position.size(); ++a)
        child.params.position[a] += cfg.jitter.position[a] * rng.normal();
      child.params.position = env.clamp(std::move(child.params.position));
      child.params.strength =
          std::max(child.params.strength + cfg.jitter.strength * rng.normal(),
                   0.0);
      if (child.params.dipole) {
        for (Eigen::Index a = 0; a < child.params.dipole->size(); ++a)
          (*child.params.dipole)[a] += cfg.jitter.dipole * rng.normal();
      }
      child.log_weight = child_lw;
      children.push_back(std::move(child));
    }
    for (std::size_t c = 0; c < n; ++c)
      particles.particles[subset[c]] = std::move(children[c]);
  }

  normalize(particles);
  if (apply_replacement) random_replacement(particles, cfg, env, rng);
}

double checksum(std::span<const Measurement> measurements,
                std::span<const ResolvedSource> resolved) {
  std::vector<SourceParams> params;
  params.reserve(resolved.size());
  for (const auto& r : resolved) params.push_back(r.params);
  double sum = 0.0;
  for (const auto& m : measurements)
    sum += static_cast<double>(m.count) - expected_intensity(m.pose, params);
  return sum;
}

void run_inner_loop(ParticleSet& state,
                    std::span<const std::vector<Measurement>> sweeps,
                    std::span<const ResolvedSource> resolved,
                    const Environment& env, const FilterConfig& cfg,
                    RandomStream& rng, InnerLoopDiagnostics* diagnostics) {
  cfg.validate();
  std::vector<std::size_t> all(state.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  for (const auto& sweep : sweeps) {
    if (cfg.batch_per_sweep) {
      for (const auto& m : sweep) reweight(state, m, resolved, cfg);
      resample(state, all, cfg, env, rng, /*apply_replacement=*/true);
    } else {
      for (std::size_t mi = 0; mi < sweep.size(); ++mi) {
        const auto subset = reweight(state, sweep[mi], resolved, cfg);
        if (!subset.empty())
          resample(state, subset, cfg, env, rng, /*apply_replacement=*/false);
      }
      normalize(state);
      random_replacement(state, cfg, env, rng);
    }
    if (diagnostics) {
      diagnostics->ess_per_step.push_back(state.effective_sample_size());
      diagnostics->entropy_per_step.push_back(state.weight_entropy());
    }
  }
}

}  // namespace radloc
