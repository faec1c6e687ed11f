#pragma once

#include <functional>
#include <string>

#include "radloc/eval.hpp"
#include "radloc/labeler.hpp"

namespace radloc {

/// Worker cap: explicit argument, else RADLOC_THREADS, else 1.
unsigned resolve_thread_count(unsigned requested = 0);

/// Runs fn(0..n-1) across up to `threads` workers. Each job must own its
/// random streams; results must be written by index so the outcome is
/// identical for any worker count.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t)>& fn);

/// Random Table-I-style layout: square grid, lawnmower coverage,
/// n_sources placed in the central region with a minimum separation,
/// strengths uniform in [50, 150] uCi.
Scenario random_grid_scenario(int n_sources, double grid_cm, int rows,
                              int cols, std::uint64_t seed);

/// Match radius convention: 5% of the longest environment axis.
double default_match_radius(const Environment& env);

/// Localize + score against the scenario's truth in one step.
RunSummary localize_and_score(const Scenario& scn, const FilterConfig& fcfg,
                              const LabelConfig& lcfg,
                              const ClusterConfig& ccfg, std::uint64_t seed,
                              const PriorPointSet* prior = nullptr);

struct SweepConfig {
  std::vector<int> source_counts{1, 2, 3, 4};
  std::vector<bool> outer_loop{true, false};  // on => max_iterations below, off => 1
  int time_steps = 3;
  int repeats = 100;
  std::uint64_t base_seed = 1;
  double grid_cm = 2000.0;
  int rows = 10;
  int cols = 10;
  int n_particles = 1000;
  int max_iterations = 4;
  unsigned threads = 0;
};

struct SweepCellResult {
  int n_sources = 0;
  bool outer_loop = true;
  int time_steps = 0;
  AggregateRow aggregate;
};

/// Seeded repeats per (source count x outer on/off) cell; repeat r uses
/// seed base_seed + r. A repeat whose run throws is recorded as a
/// zero-score summary rather than aborting the sweep.
std::vector<SweepCellResult> run_sweep(const SweepConfig& cfg);

std::string sweep_to_csv(std::span<const SweepCellResult> cells);

}  // namespace radloc
