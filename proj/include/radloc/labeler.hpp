#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "radloc/estimate.hpp"
#include "radloc/filter.hpp"
#include "radloc/scenario.hpp"

namespace radloc {

struct LabelConfig {
  int k = 3;                        // nearest-sensor count for c_k
  std::vector<double> omegas;       // empty => uniform 1/k
  double confidence_thresh = 0.80;
  double source_thresh = 10.0;      // uCi floor for candidates
  double bg_thresh = -1.0;          // < 0 => auto from the sweep background
  int max_iterations = 5;
  bool warm_start = false;          // reuse the surviving cloud across iterations
  bool freeze_noise = false;        // repeat identical counts every sweep

  void validate(std::size_t n_measurements) const;
};

enum class Termination { kChecksum, kMaxIterations };

struct IterationTrace {
  int iteration = 0;
  std::vector<CandidateSource> candidates;
  std::size_t accepted = 0;
  double checksum_value = 0.0;
  InnerLoopDiagnostics diagnostics;
};

struct LocalizationResult {
  std::vector<ResolvedSource> resolved;
  int iterations_used = 0;
  int time_steps_used = 0;
  std::vector<double> checksum_history;
  std::vector<IterationTrace> trace;
  Termination terminated_by = Termination::kChecksum;
  std::map<std::string, double> stage_seconds;
};

/// Threshold below which the residual checksum counts as "explained":
/// explicit config value, or 4 sigma of the total expected background.
double effective_bg_thresh(const LabelConfig& cfg,
                           std::span<const Measurement> sweep);

/// Confidence metric c_k: convex combination of normalized Poisson
/// likelihoods at the k sensors nearest to the candidate (planar
/// distance, ties by trajectory order), with the resolved sources folded
/// into each expected intensity.
double confidence(const CandidateSource& candidate,
                  std::span<const Measurement> measurements,
                  std::span<const ResolvedSource> resolved,
                  const LabelConfig& cfg);

/// Accept/reject pass over the candidates (support-descending order,
/// confidences recomputed as the resolved set grows); appends accepted
/// candidates to `resolved`. Returns the newly accepted entries and
/// whether the checksum still demands another iteration.
std::pair<std::vector<ResolvedSource>, bool> label_sources(
    std::span<const CandidateSource> candidates,
    std::span<const Measurement> measurements,
    std::vector<ResolvedSource>& resolved, const LabelConfig& cfg,
    int iteration);

/// Full two-loop pipeline on a scenario. `particle_dump`, when set,
/// receives one CSV block per time step. Deterministic given the
/// scenario seed and `seed`.
LocalizationResult run_outer_loop(const Scenario& scn, const FilterConfig& fcfg,
                                  const LabelConfig& lcfg,
                                  const ClusterConfig& ccfg,
                                  std::uint64_t seed,
                                  const PriorPointSet* prior = nullptr,
                                  std::ostream* particle_dump = nullptr);

std::string result_to_json_text(const LocalizationResult& result);

}  // namespace radloc
