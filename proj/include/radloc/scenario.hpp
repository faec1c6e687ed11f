#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "radloc/model.hpp"
#include "radloc/types.hpp"

namespace radloc {

struct LawnmowerSpec {
  int rows = 1;
  int cols = 1;
  double height_cm = 100.0;
};

/// A full synthetic experiment definition: environment, ground truth,
/// trajectory, and the seed that drives measurement noise.
struct Scenario {
  Environment env;
  std::vector<SourceParams> truth_sources;
  std::vector<SensorPose> trajectory;
  std::uint64_t seed = 0;
  // Retained when the trajectory came from a lawnmower spec, so saves
  // round-trip and fusion-range defaults can use the cell pitch.
  std::optional<LawnmowerSpec> lawnmower;

  void validate() const;
};

/// Serpentine coverage grid, cell-centered, constant height. For a 3-D
/// environment the third coordinate is set to the flight height.
std::vector<SensorPose> lawnmower_trajectory(const Environment& env, int rows,
                                             int cols, double height_cm);

/// One Poisson draw per trajectory pose. Each time step owns a stream
/// derived from (scenario seed, time_step); freeze_noise reuses the
/// time-step-0 stream so re-sweeps repeat the same counts.
std::vector<Measurement> generate_measurements(const Scenario& scn,
                                               int time_step = 0,
                                               bool freeze_noise = false);

/// Grid pitch of the trajectory (largest cell edge for a lawnmower,
/// mean consecutive step otherwise). Basis for the fusion-range default.
double trajectory_pitch(const Scenario& scn);

Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const Scenario& scn, const std::filesystem::path& path);

Scenario scenario_from_json_text(const std::string& text);
std::string scenario_to_json_text(const Scenario& scn);

/// Prior point CSV: x_cm, y_cm[, z_cm][, weight]. Column count must be
/// consistent with `dimension`; an empty file is an error.
PriorPointSet load_prior_points(const std::filesystem::path& path,
                                int dimension);

/// Seeded uniform under-sampling to at most `target` points.
PriorPointSet undersample(const PriorPointSet& points, std::size_t target,
                          std::uint64_t seed);

void save_measurements_csv(const std::vector<Measurement>& ms,
                           const std::filesystem::path& path);
std::vector<Measurement> load_measurements_csv(
    const std::filesystem::path& path);

}  // namespace radloc
