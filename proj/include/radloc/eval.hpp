#pragma once

#include <optional>
#include <span>

#include "radloc/types.hpp"

namespace radloc {

/// One-to-one estimate/truth pairing within a match radius.
struct MatchReport {
  struct Pair {
    std::size_t estimate;
    std::size_t truth;
    double distance;
  };
  std::vector<Pair> pairs;
  std::vector<std::size_t> unmatched_estimates;
  std::vector<std::size_t> unmatched_truths;
  double match_radius = 0.0;
};

struct RunSummary {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::optional<double> eps_l;       // raw units: cm, uCi
  std::optional<double> eps_l_norm;  // scale-normalized
  double iterations = 0.0;
  double time_steps = 0.0;
  double wall_seconds = 0.0;
};

struct AggregateRow {
  RunSummary mean;
  RunSummary stddev;
  std::size_t runs = 0;
  std::size_t runs_with_error = 0;  // runs contributing to eps_l
};

/// Globally optimal one-to-one assignment minimizing total distance;
/// pairs farther than `match_radius` are infeasible and excluded.
MatchReport match_sources(std::span<const SourceParams> estimates,
                          std::span<const SourceParams> truth,
                          double match_radius);

/// Precision = pairs/estimates, recall = pairs/truths, F1 = 2PR/(P+R).
/// An empty side counts as perfect on its own ratio.
void prf1(const MatchReport& report, std::size_t n_estimates,
          std::size_t n_truths, double& precision, double& recall, double& f1);

/// Mean over matched pairs of sqrt(|dpos|^2 + dstr^2); absent with no
/// pairs. Scales of 1 give the raw cm/uCi mix.
std::optional<double> localization_error(const MatchReport& report,
                                         std::span<const SourceParams> estimates,
                                         std::span<const SourceParams> truth,
                                         double position_scale = 1.0,
                                         double strength_scale = 1.0);

/// Arithmetic mean and (population) standard deviation per field;
/// error fields aggregate over the runs where they exist.
AggregateRow aggregate_runs(std::span<const RunSummary> summaries);

}  // namespace radloc
