#include "radloc/labeler.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

namespace radloc {

using nlohmann::json;

void LabelConfig::validate(std::size_t n_measurements) const {
  if (k < 1) throw std::invalid_argument("LabelConfig: k must be >= 1");
  if (static_cast<std::size_t>(k) > n_measurements)
    throw std::invalid_argument("LabelConfig: k exceeds measurement count");
  if (!omegas.empty()) {
    if (omegas.size() != static_cast<std::size_t>(k))
      throw std::invalid_argument("LabelConfig: omegas size must equal k");
    const double sum = std::accumulate(omegas.begin(), omegas.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("LabelConfig: omegas must sum to 1");
  }
  if (confidence_thresh <= 0.0 || confidence_thresh >= 1.0)
    throw std::invalid_argument(
        "LabelConfig: confidence_thresh must be in (0, 1)");
  if (max_iterations < 1)
    throw std::invalid_argument("LabelConfig: max_iterations must be >= 1");
}

double effective_bg_thresh(const LabelConfig& cfg,
                           std::span<const Measurement> sweep) {
  if (cfg.bg_thresh >= 0.0) return cfg.bg_thresh;
  double bg = 0.0;
  for (const auto& m : sweep) bg += m.pose.background;
  return 4.0 * std::sqrt(std::max(bg, 1.0));
}

double confidence(const CandidateSource& candidate,
                  std::span<const Measurement> measurements,
                  std::span<const ResolvedSource> resolved,
                  const LabelConfig& cfg) {
  cfg.validate(measurements.size());

  std::vector<std::size_t> order(measurements.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> dist(measurements.size());
  for (std::size_t i = 0; i < measurements.size(); ++i)
    dist[i] = (measurements[i].pose.position.head(2) -
               candidate.params.position.head(2))
                  .norm();
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dist[a] < dist[b];
                   });

  std::vector<SourceParams> hypothesis;
  hypothesis.reserve(resolved.size() + 1);
  hypothesis.push_back(candidate.params);
  for (const auto& r : resolved) hypothesis.push_back(r.params);

  double c = 0.0;
  for (int i = 0; i < cfg.k; ++i) {
    const Measurement& m = measurements[order[static_cast<std::size_t>(i)]];
    const double rate = expected_intensity(m.pose, hypothesis);
    double term;
    if (rate <= 0.0) {
      term = (m.count == 0) ? 1.0 : 1e-300;
    } else {
      term = std::max(poisson_likelihood_normalized(m.count, rate), 1e-300);
    }
    const double omega = cfg.omegas.empty()
                             ? 1.0 / static_cast<double>(cfg.k)
                             : cfg.omegas[static_cast<std::size_t>(i)];
    c += omega * term;
  }
  return c;
}

std::pair<std::vector<ResolvedSource>, bool> label_sources(
    std::span<const CandidateSource> candidates,
    std::span<const Measurement> measurements,
    std::vector<ResolvedSource>& resolved, const LabelConfig& cfg,
    int iteration) {
  std::vector<ResolvedSource> accepted;
  for (const auto& cand : candidates) {
    if (cand.params.strength < cfg.source_thresh) continue;
    const double c = confidence(cand, measurements, resolved, cfg);
    if (c >= cfg.confidence_thresh) {
      ResolvedSource r;
      r.params = cand.params;
      r.confidence = c;
      r.iteration_found = iteration;
      resolved.push_back(r);
      accepted.push_back(std::move(r));
    }
  }
  const bool rerun =
      checksum(measurements, resolved) >= effective_bg_thresh(cfg, measurements);
  return {std::move(accepted), rerun};
}

namespace {

void dump_particles(std::ostream& os, const ParticleSet& set, int time_step,
                    std::size_t measurement_index, bool header) {
  const int dim = set.particles.empty()
                      ? 2
                      : set.particles.front().params.dimension();
  if (header) {
    os << "time_step,measurement_index,id,x_cm,y_cm";
    if (dim == 3) os << ",z_cm";
    os << ",strength_uCi,weight\n";
  }
  for (const auto& p : set.particles) {
    os << time_step << "," << measurement_index << "," << p.id;
    for (int a = 0; a < dim; ++a) os << "," << p.params.position[a];
    os << "," << p.params.strength << "," << std::exp(p.log_weight) << "\n";
  }
}

// Poisson log-likelihood of a source hypothesis over a fixed subset of
// measurements.
double local_log_likelihood(std::span<const SourceParams> hyp,
                            std::span<const Measurement> measurements,
                            std::span<const std::size_t> subset) {
  double ll = 0.0;
  for (const std::size_t i : subset) {
    const Measurement& m = measurements[i];
    const double rate = std::max(expected_intensity(m.pose, hyp), 1e-12);
    ll += static_cast<double>(m.count) * std::log(rate) - rate;
  }
  return ll;
}

// Local likelihood ascent on a candidate's parameters, jointly with any
// already-resolved source close enough to share sensors with it. The
// particle cloud puts its mass in the right place, but the
// normalized-likelihood screening is sensitive at the centimeter /
// percent level near strong sources, finer than the cloud's spacing can
// resolve. Resolved neighbors take part because a source accepted while
// this one was still unexplained has typically absorbed part of its
// flux; freezing that misfit would keep poisoning the residual. The
// measurement subset is frozen at the starting positions so the
// objective stays continuous, and moves are capped (half the fusion
// range for the candidate, a quarter for resolved neighbors) to keep
// the fit local.
void refine_candidate(CandidateSource& cand,
                      std::span<const Measurement> measurements,
                      std::vector<ResolvedSource>& resolved,
                      const Environment& env, const FilterConfig& fcfg) {
  // The refinement neighborhood defaults to the fusion range but can be
  // narrowed independently of it.
  const double range = fcfg.polish_range_cm > 0.0 ? fcfg.polish_range_cm
                                                  : fcfg.fusion_range_cm;
  // Free parameter blocks: index 0 is the candidate, the rest are the
  // resolved sources within twice the refinement range.
  std::vector<std::size_t> resolved_slot;  // free hyp block -> resolved index
  for (std::size_t r = 0; r < resolved.size(); ++r) {
    if ((resolved[r].params.position - cand.params.position).norm() <=
        2.0 * range)
      resolved_slot.push_back(r);
  }
  std::vector<SourceParams> hyp;
  hyp.push_back(cand.params);
  for (const std::size_t r : resolved_slot) hyp.push_back(resolved[r].params);
  for (std::size_t r = 0; r < resolved.size(); ++r) {
    if (std::find(resolved_slot.begin(), resolved_slot.end(), r) ==
        resolved_slot.end())
      hyp.push_back(resolved[r].params);
  }
  const std::size_t n_free = 1 + resolved_slot.size();

  std::vector<std::size_t> subset;
  for (std::size_t i = 0; i < measurements.size(); ++i) {
    for (std::size_t b = 0; b < n_free; ++b) {
      if ((measurements[i].pose.position.head(2) -
           hyp[b].position.head(2))
              .norm() <= range) {
        subset.push_back(i);
        break;
      }
    }
  }
  if (subset.empty()) return;

  std::vector<Eigen::VectorXd> starts;
  for (std::size_t b = 0; b < n_free; ++b) starts.push_back(hyp[b].position);
  const int dim = hyp[0].position.size();
  double ll = local_log_likelihood(hyp, measurements, subset);

  double pos_step = 0.05 * range;
  double str_step =
      0.05 * (fcfg.strength_window[1] - fcfg.strength_window[0]);
  double dip_step = 0.05 * fcfg.dipole_window;

  const bool any_dipole = std::any_of(
      hyp.begin(), hyp.begin() + static_cast<std::ptrdiff_t>(n_free),
      [](const SourceParams& p) { return p.dipole.has_value(); });
  const int max_rounds = any_dipole ? 200 : 60;
  const double pos_step0 = pos_step, str_step0 = str_step,
               dip_step0 = dip_step;

  const auto run_ascent = [&] {
    pos_step = pos_step0;
    str_step = str_step0;
    dip_step = dip_step0;
    for (int round = 0;
         round < max_rounds &&
         (pos_step > 0.25 || (any_dipole && dip_step > 1.0));
         ++round) {
      bool improved = false;
      auto try_block = [&](std::size_t b, const SourceParams& p) {
        const SourceParams saved = hyp[b];
        hyp[b] = p;
        const double cand_ll = local_log_likelihood(hyp, measurements, subset);
        if (cand_ll > ll) {
          ll = cand_ll;
          improved = true;
        } else {
          hyp[b] = saved;
        }
      };
      for (std::size_t b = 0; b < n_free; ++b) {
        const double cap = (b == 0 ? 0.5 : 0.25) * range;
        for (int a = 0; a < dim; ++a) {
          for (const double dir : {1.0, -1.0}) {
            SourceParams p = hyp[b];
            p.position[a] += dir * pos_step;
            p.position[a] = std::clamp(p.position[a], env.bounds(a, 0),
                                       env.bounds(a, 1));
            p.position[a] = std::clamp(p.position[a], starts[b][a] - cap,
                                       starts[b][a] + cap);
            try_block(b, p);
          }
        }
        for (const double dir : {1.0, -1.0}) {
          SourceParams p = hyp[b];
          p.strength = std::clamp(p.strength + dir * str_step,
                                  fcfg.strength_window[0],
                                  fcfg.strength_window[1]);
          try_block(b, p);
        }
        if (hyp[b].dipole) {
          for (int a = 0; a < dim; ++a) {
            for (const double dir : {1.0, -1.0}) {
              SourceParams p = hyp[b];
              (*p.dipole)[a] += dir * dip_step;
              try_block(b, p);
            }
          }
        }
      }
      if (!improved) {
        pos_step *= 0.5;
        str_step *= 0.5;
        dip_step *= 0.5;
      }
    }
  };

  run_ascent();

  // The joint (position, moment) surface is multimodal: a moment error
  // can be traded against a position shift, and the ascent inherits
  // whichever ridge the particle cloud happened to sit on. Re-seed the
  // candidate's moment over a coarse direction/magnitude grid (position
  // and strength held), keep the best, and ascend once more.
  if (cand.params.dipole && hyp[0].dipole) {
    const SourceParams after_first = hyp[0];
    SourceParams best = hyp[0];
    double best_ll = ll;
    const int n_dirs = dim == 2 ? 16 : 26;
    for (int di = 0; di < n_dirs; ++di) {
      Eigen::VectorXd u(dim);
      if (dim == 2) {
        const double a = 2.0 * M_PI * di / n_dirs;
        u << std::cos(a), std::sin(a);
      } else {
        // all nonzero sign/axis combinations of {-1, 0, 1}^3
        const int code = di + (di >= 13 ? 1 : 0);  // skip (0,0,0) at 13
        u << code / 9 - 1, (code / 3) % 3 - 1, code % 3 - 1;
        u.normalize();
      }
      for (const double mag :
           {0.25 * fcfg.dipole_window, 0.5 * fcfg.dipole_window,
            0.9 * fcfg.dipole_window}) {
        // A moment m*u mimics a monopole shifted by ~(m/s)*u, so the
        // equivalent hypothesis on the other ridge also moves the
        // position back by that displacement.
        const double shift =
            hyp[0].strength > 0.0 ? mag / hyp[0].strength : 0.0;
        for (const double alpha : {0.0, 0.5, 1.0}) {
          hyp[0] = after_first;
          hyp[0].dipole = mag * u;
          Eigen::VectorXd pos = starts[0] - alpha * shift * u;
          for (int a = 0; a < dim; ++a)
            pos[a] = std::clamp(pos[a], env.bounds(a, 0), env.bounds(a, 1));
          hyp[0].position = pos;
          const double cand_ll =
              local_log_likelihood(hyp, measurements, subset);
          if (cand_ll > best_ll) {
            best_ll = cand_ll;
            best = hyp[0];
          }
        }
      }
    }
    hyp[0] = best;
    if (best_ll > ll) {
      ll = best_ll;
      run_ascent();
    }
  }

  cand.params = hyp[0];
  for (std::size_t j = 0; j < resolved_slot.size(); ++j)
    resolved[resolved_slot[j]].params = hyp[1 + j];
}

class StageTimer {
 public:
  explicit StageTimer(std::map<std::string, double>& sink) : sink_(sink) {}
  template <typename F>
  auto time(const std::string& stage, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      sink_[stage] += std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
    } else {
      auto r = f();
      sink_[stage] += std::chrono::duration<double>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      return r;
    }
  }

 private:
  std::map<std::string, double>& sink_;
};

}  // namespace

LocalizationResult run_outer_loop(const Scenario& scn, const FilterConfig& fcfg,
                                  const LabelConfig& lcfg,
                                  const ClusterConfig& ccfg,
                                  std::uint64_t seed,
                                  const PriorPointSet* prior,
                                  std::ostream* particle_dump) {
  scn.validate();
  fcfg.validate();
  lcfg.validate(scn.trajectory.size());

  LocalizationResult result;
  StageTimer timer(result.stage_seconds);
  const FeatureScales scales = feature_scales(scn.env, fcfg);

  RandomStream filter_rng = RandomStream::derive(seed, 1);
  RandomStream init_rng = RandomStream::derive(seed, 2);

  ParticleSet particles;
  int global_step = 0;
  bool dumped_header = false;

  for (int iter = 1; iter <= lcfg.max_iterations; ++iter) {
    if (iter == 1 || !lcfg.warm_start) {
      particles = timer.time("init", [&] {
        return init_particles(scn.env, fcfg, prior, init_rng);
      });
    }

    // One physical sweep per iteration: the robot's readings are processed
    // once per time step, so all s steps of an iteration replay the same
    // realized counts (and the labeling stage scores those same counts).
    // A fresh sweep is flown for each outer iteration.
    std::vector<Measurement> latest_sweep;
    IterationTrace trace;
    trace.iteration = iter;
    const int steps = std::max(fcfg.steps_per_estimate, 0);
    for (int s = 0; s < steps; ++s) {
      latest_sweep =
          generate_measurements(scn, iter - 1, lcfg.freeze_noise);
      timer.time("filter", [&] {
        const std::vector<Measurement>* sweep = &latest_sweep;
        run_inner_loop(particles, std::span(sweep, 1), result.resolved,
                       scn.env, fcfg, filter_rng, &trace.diagnostics);
      });
      if (particle_dump) {
        dump_particles(*particle_dump, particles, global_step,
                       latest_sweep.size() - 1, !dumped_header);
        dumped_header = true;
      }
      ++global_step;
    }
    if (latest_sweep.empty())
      latest_sweep = generate_measurements(scn, iter - 1, lcfg.freeze_noise);

    // One extra weighting pass over the sweep (no resampling) to score
    // each surviving particle's whole-sweep likelihood. The resulting
    // weights are *not* used for clustering -- after resampling the
    // cloud population itself encodes posterior mass, and sensors near
    // strong sources are so much more discriminating than background
    // ones that raw likelihood mass would starve exactly the clusters
    // that matter. They are kept aside to sharpen cluster centroids.
    std::vector<int> touches(particles.size(), 0);
    std::vector<double> refresh_lw(particles.size(), 0.0);
    timer.time("filter", [&] {
      for (auto& p : particles.particles) p.log_weight = 0.0;
      for (const auto& m : latest_sweep) {
        const auto subset = reweight(particles, m, result.resolved, fcfg);
        for (const std::size_t i : subset) ++touches[i];
      }
      const double uniform_lw =
          -std::log(static_cast<double>(particles.size()));
      for (std::size_t i = 0; i < particles.size(); ++i) {
        Particle& p = particles.particles[i];
        refresh_lw[i] = touches[i] > 0 ? p.log_weight
                                       : fcfg.log_likelihood_floor;
        p.log_weight = uniform_lw;
      }
    });

    auto clusters = timer.time("cluster", [&] {
      return cluster_particles(particles, scales, ccfg);
    });
    // Replace each population centroid with the likelihood-weighted one:
    // within a cluster the sensors in play are shared, so the raw
    // whole-sweep likelihoods are comparable and pick out the members
    // that actually explain the nearby counts.
    for (auto& c : clusters) {
      double mx = -std::numeric_limits<double>::infinity();
      std::vector<double> plw(c.members.size());
      for (std::size_t j = 0; j < c.members.size(); ++j) {
        const std::size_t i = c.members[j];
        plw[j] = refresh_lw[i];
        mx = std::max(mx, plw[j]);
      }
      if (!std::isfinite(mx)) continue;
      const int dim = c.centroid.position.size();
      Eigen::VectorXd pos = Eigen::VectorXd::Zero(dim);
      Eigen::VectorXd dip = Eigen::VectorXd::Zero(dim);
      double strength = 0.0, wsum = 0.0;
      for (std::size_t j = 0; j < c.members.size(); ++j) {
        const auto& p = particles.particles[c.members[j]].params;
        const double w = std::exp(plw[j] - mx);
        wsum += w;
        pos += w * p.position;
        strength += w * p.strength;
        if (p.dipole) dip += w * *p.dipole;
      }
      if (wsum <= 0.0) continue;
      c.centroid.position = pos / wsum;
      c.centroid.strength = strength / wsum;
      if (c.centroid.dipole) c.centroid.dipole = dip / wsum;
    }
    trace.candidates = extract_candidates(clusters, ccfg.min_support);

    bool rerun = false;
    timer.time("label", [&] {
      // Candidates are screened one at a time (still in support order):
      // each is polished against the latest sweep together with a copy
      // of its resolved neighbors, and the neighbor adjustments are
      // committed only if the candidate itself is accepted.
      std::size_t n_accepted = 0;
      for (auto& cand : trace.candidates) {
        std::vector<ResolvedSource> adjusted = result.resolved;
        refine_candidate(cand, latest_sweep, adjusted, scn.env, fcfg);
        auto [accepted, again] =
            label_sources(std::span(&cand, 1), latest_sweep, adjusted, lcfg,
                          iter);
        if (!accepted.empty()) {
          result.resolved = std::move(adjusted);
          ++n_accepted;
        }
      }
      trace.accepted = n_accepted;
      rerun = checksum(latest_sweep, result.resolved) >=
              effective_bg_thresh(lcfg, latest_sweep);
    });
    trace.checksum_value = checksum(latest_sweep, result.resolved);
    result.checksum_history.push_back(trace.checksum_value);
    result.trace.push_back(std::move(trace));
    result.iterations_used = iter;
    result.time_steps_used = global_step;

    if (!rerun) {
      result.terminated_by = Termination::kChecksum;
      return result;
    }
  }
  result.terminated_by = Termination::kMaxIterations;
  return result;
}

std::string result_to_json_text(const LocalizationResult& result) {
  json j;
  json sources = json::array();
  for (const auto& r : result.resolved) {
    json s;
    s["position_cm"] = std::vector<double>(
        r.params.position.data(),
        r.params.position.data() + r.params.position.size());
    s["strength_uCi"] = r.params.strength;
    if (r.params.dipole)
      s["dipole"] = std::vector<double>(
          r.params.dipole->data(),
          r.params.dipole->data() + r.params.dipole->size());
    s["confidence"] = r.confidence;
    s["iteration"] = r.iteration_found;
    sources.push_back(std::move(s));
  }
  j["resolved"] = std::move(sources);
  j["iterations_used"] = result.iterations_used;
  j["time_steps_used"] = result.time_steps_used;
  j["checksum_history"] = result.checksum_history;
  j["terminated_by"] = result.terminated_by == Termination::kChecksum
                           ? "checksum"
                           : "max_iterations";
  json stages;
  for (const auto& [name, secs] : result.stage_seconds) stages[name] = secs;
  j["stage_seconds"] = std::move(stages);

  json trace = json::array();
  for (const auto& t : result.trace) {
    json ti;
    ti["iteration"] = t.iteration;
    ti["n_candidates"] = t.candidates.size();
    ti["accepted"] = t.accepted;
    ti["checksum"] = t.checksum_value;
    json cands = json::array();
    for (const auto& c : t.candidates) {
      json cj;
      cj["position_cm"] = std::vector<double>(
          c.params.position.data(),
          c.params.position.data() + c.params.position.size());
      cj["strength_uCi"] = c.params.strength;
      cj["support"] = c.support;
      cands.push_back(std::move(cj));
    }
    ti["candidates"] = std::move(cands);
    trace.push_back(std::move(ti));
  }
  j["iterations"] = std::move(trace);
  return j.dump(2);
}

}  // namespace radloc
