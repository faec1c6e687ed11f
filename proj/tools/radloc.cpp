#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>

#include "radloc/sweep.hpp"

namespace fs = std::filesystem;
using namespace radloc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitMaxIterations = 2;

struct CommonOpts {
  std::string scenario_path;
  std::uint64_t seed = 1;
  int particles = 1000;
  double fusion_range = -1.0;  // < 0: default from trajectory pitch
  int time_steps = 3;
  int max_iterations = 4;
  std::string clusterer = "meanshift";
  double bandwidth = 0.05;
  double confidence_thresh = 0.80;
  bool dipole = false;
  std::string prior_path;
  bool dump_particles = false;
  std::string out_dir = ".";
};

ClusterBackend parse_backend(const std::string& name) {
  if (name == "meanshift") return ClusterBackend::kMeanShift;
  if (name == "ahc") return ClusterBackend::kAhc;
  if (name == "id") return ClusterBackend::kId;
  throw CLI::ValidationError("--clusterer", "must be meanshift, ahc or id");
}

void add_common(CLI::App* cmd, CommonOpts& o, bool need_scenario) {
  auto* s = cmd->add_option("--scenario", o.scenario_path,
                            "Scenario JSON file");
  if (need_scenario) s->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "Base random seed");
  cmd->add_option("--particles", o.particles, "Particle count")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--fusion-range", o.fusion_range,
                  "Fusion range in cm (default: 2x trajectory pitch)");
  cmd->add_option("--time-steps", o.time_steps,
                  "Inner-loop time steps per estimation (s)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--max-iterations", o.max_iterations,
                  "Outer-loop iteration cap")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--clusterer", o.clusterer,
                  "Cluster backend: meanshift|ahc|id")
      ->check(CLI::IsMember({"meanshift", "ahc", "id"}));
  cmd->add_option("--bandwidth", o.bandwidth,
                  "Mean-shift bandwidth (scaled units)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--confidence-thresh", o.confidence_thresh,
                  "Acceptance threshold on c_k");
  cmd->add_flag("--dipole", o.dipole, "Estimate dipole moments");
  cmd->add_option("--prior", o.prior_path,
                  "Prior point CSV for guided initialization")
      ->check(CLI::ExistingFile);
  cmd->add_flag("--dump-particles", o.dump_particles,
                "Write per-step particle CSV");
  cmd->add_option("--out", o.out_dir, "Output directory");
}

void build_configs(const Scenario& scn, const CommonOpts& o, FilterConfig& fcfg,
                   LabelConfig& lcfg, ClusterConfig& ccfg) {
  fcfg = default_filter_config(scn.env, trajectory_pitch(scn));
  fcfg.n_particles = o.particles;
  if (o.fusion_range > 0.0) fcfg.fusion_range_cm = o.fusion_range;
  fcfg.steps_per_estimate = o.time_steps;
  fcfg.estimate_dipole = o.dipole;
  lcfg.max_iterations = o.max_iterations;
  lcfg.confidence_thresh = o.confidence_thresh;
  ccfg.backend = parse_backend(o.clusterer);
  ccfg.bandwidth = o.bandwidth;
}

int cmd_simulate(const CommonOpts& o) {
  Scenario scn = load_scenario(o.scenario_path);
  if (o.seed != 1) scn.seed = o.seed;
  const auto ms = generate_measurements(scn);
  fs::create_directories(o.out_dir);
  const fs::path out = fs::path(o.out_dir) / "measurements.csv";
  save_measurements_csv(ms, out);
  long total = 0;
  for (const auto& m : ms) total += m.count;
  std::cout << "wrote " << out.string() << ": " << ms.size()
            << " poses, total counts " << total << "\n";
  return kExitOk;
}

int cmd_localize(const CommonOpts& o) {
  Scenario scn = load_scenario(o.scenario_path);
  FilterConfig fcfg;
  LabelConfig lcfg;
  ClusterConfig ccfg;
  build_configs(scn, o, fcfg, lcfg, ccfg);

  std::optional<PriorPointSet> prior;
  if (!o.prior_path.empty())
    prior = load_prior_points(o.prior_path, scn.env.dimension());

  fs::create_directories(o.out_dir);
  std::ofstream dump;
  if (o.dump_particles) {
    dump.open(fs::path(o.out_dir) / "particles.csv");
    if (!dump) throw std::runtime_error("cannot open particle dump file");
  }

  const LocalizationResult result =
      run_outer_loop(scn, fcfg, lcfg, ccfg, o.seed,
                     prior ? &*prior : nullptr, dump.is_open() ? &dump : nullptr);

  const fs::path out = fs::path(o.out_dir) / "result.json";
  std::ofstream(out) << result_to_json_text(result) << "\n";
  std::cout << "resolved " << result.resolved.size() << " source(s) in "
            << result.iterations_used << " iteration(s), terminated by "
            << (result.terminated_by == Termination::kChecksum
                    ? "checksum"
                    : "max_iterations")
            << "; wrote " << out.string() << "\n";
  return result.terminated_by == Termination::kChecksum ? kExitOk
                                                        : kExitMaxIterations;
}

int cmd_sweep(const CommonOpts& o, int repeats,
              const std::vector<int>& source_counts, double grid_m) {
  SweepConfig cfg;
  cfg.repeats = repeats;
  cfg.base_seed = o.seed;
  cfg.n_particles = o.particles;
  cfg.time_steps = o.time_steps;
  cfg.max_iterations = o.max_iterations;
  cfg.grid_cm = grid_m * 100.0;
  if (!source_counts.empty()) cfg.source_counts = source_counts;

  const auto cells = run_sweep(cfg);
  fs::create_directories(o.out_dir);
  const fs::path out = fs::path(o.out_dir) / "sweep.csv";
  std::ofstream(out) << sweep_to_csv(cells);
  std::cout << sweep_to_csv(cells);
  std::cout << "wrote " << out.string() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Radiation-source localization: simulate, localize, sweep"};
  app.require_subcommand(1);

  CommonOpts sim_o, loc_o, swp_o;
  int repeats = 100;
  std::vector<int> source_counts;
  double grid_m = 20.0;

  auto* sim = app.add_subcommand("simulate",
                                 "Generate a measurement CSV for a scenario");
  add_common(sim, sim_o, /*need_scenario=*/true);

  auto* loc = app.add_subcommand("localize",
                                 "Run the two-loop localization pipeline");
  add_common(loc, loc_o, /*need_scenario=*/true);

  auto* swp = app.add_subcommand("sweep",
                                 "Seeded multi-cell replica sweep (CSV table)");
  add_common(swp, swp_o, /*need_scenario=*/false);
  swp->add_option("--repeats", repeats, "Seeded repeats per cell")
      ->check(CLI::PositiveNumber);
  swp->add_option("--sources", source_counts,
                  "Source counts per cell (default 1 2 3 4)");
  swp->add_option("--grid-m", grid_m, "Square grid edge in meters")
      ->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (sim->parsed()) return cmd_simulate(sim_o);
    if (loc->parsed()) return cmd_localize(loc_o);
    return cmd_sweep(swp_o, repeats, source_counts, grid_m);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
