#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "radloc/scenario.hpp"

using namespace radloc;
namespace fs = std::filesystem;

namespace {

Environment square_env(double edge_cm, double bg = 2.0) {
  Environment env;
  env.bounds = Eigen::MatrixX2d(2, 2);
  env.bounds << 0.0, edge_cm, 0.0, edge_cm;
  env.background = bg;
  return env;
}

Scenario simple_scenario(double edge_cm, std::vector<SourceParams> sources,
                         std::uint64_t seed, int rows = 10, int cols = 10) {
  Scenario scn;
  scn.env = square_env(edge_cm);
  scn.truth_sources = std::move(sources);
  scn.lawnmower = LawnmowerSpec{rows, cols, 100.0};
  scn.trajectory = lawnmower_trajectory(scn.env, rows, cols, 100.0);
  scn.seed = seed;
  return scn;
}

fs::path tmp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("lawnmower 10x10 over a 10 m square yields 100 in-bounds poses") {
  const auto env = square_env(1000.0);
  const auto poses = lawnmower_trajectory(env, 10, 10, 100.0);
  REQUIRE(poses.size() == 100);
  for (const auto& p : poses) {
    CHECK(env.contains(p.position));
    CHECK(p.height == 100.0);
  }
}

TEST_CASE("degenerate 1x1 lawnmower sits at the environment center") {
  const auto env = square_env(1000.0);
  const auto poses = lawnmower_trajectory(env, 1, 1, 100.0);
  REQUIRE(poses.size() == 1);
  CHECK(poses[0].position.isApprox(env.center()));
}

TEST_CASE("lawnmower rejects zero rows or cols") {
  const auto env = square_env(1000.0);
  CHECK_THROWS_AS(lawnmower_trajectory(env, 0, 5, 100.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(lawnmower_trajectory(env, 5, 0, 100.0),
                  std::invalid_argument);
}

TEST_CASE("serpentine order: consecutive poses step one cell in one axis") {
  const auto env = square_env(1200.0);
  const int rows = 6, cols = 8;
  const auto poses = lawnmower_trajectory(env, rows, cols, 100.0);
  const double px = env.extent()[0] / cols, py = env.extent()[1] / rows;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const Eigen::VectorXd d = poses[i].position - poses[i - 1].position;
    const bool x_step = std::abs(std::abs(d[0]) - px) < 1e-9 &&
                        std::abs(d[1]) < 1e-9;
    const bool y_step = std::abs(d[0]) < 1e-9 &&
                        std::abs(std::abs(d[1]) - py) < 1e-9;
    CHECK((x_step || y_step));
  }
}

TEST_CASE("no sources and zero background give all-zero counts") {
  auto scn = simple_scenario(1000.0, {}, 3);
  scn.env.background = 0.0;
  for (auto& p : scn.trajectory) p.background = 0.0;
  for (const auto& m : generate_measurements(scn)) CHECK(m.count == 0);
}

TEST_CASE("measurement generation is deterministic in scenario seed") {
  SourceParams s;
  s.position = Eigen::Vector2d(400, 600);
  s.strength = 100.0;
  const auto scn = simple_scenario(1000.0, {s}, 77);
  const auto a = generate_measurements(scn);
  const auto b = generate_measurements(scn);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].count == b[i].count);
}

TEST_CASE("re-sweeps redraw noise unless frozen") {
  SourceParams s;
  s.position = Eigen::Vector2d(400, 600);
  s.strength = 100.0;
  const auto scn = simple_scenario(1000.0, {s}, 77);
  const auto t0 = generate_measurements(scn, 0);
  const auto t1 = generate_measurements(scn, 1);
  bool any_diff = false;
  for (std::size_t i = 0; i < t0.size(); ++i)
    if (t0[i].count != t1[i].count) any_diff = true;
  CHECK(any_diff);

  const auto f0 = generate_measurements(scn, 0, true);
  const auto f1 = generate_measurements(scn, 1, true);
  for (std::size_t i = 0; i < f0.size(); ++i) CHECK(f0[i].count == f1[i].count);
}

TEST_CASE("mean count near the source beats the far corner over 100 seeds") {
  SourceParams s;
  s.position = Eigen::Vector2d(150, 150);
  s.strength = 100.0;
  double near_sum = 0.0, far_sum = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto scn = simple_scenario(1000.0, {s}, seed);
    const auto ms = generate_measurements(scn);
    // pose 11 is cell (1,1) at (150,150); pose 99 ends at the far edge.
    near_sum += static_cast<double>(ms[11].count);
    far_sum += static_cast<double>(ms[99].count);
  }
  CHECK(near_sum > far_sum);
}

TEST_CASE("per-pose sample mean tracks the expected intensity over 200 seeds") {
  SourceParams s;
  s.position = Eigen::Vector2d(500, 500);
  s.strength = 120.0;
  auto scn = simple_scenario(1000.0, {s}, 0, 4, 4);
  const int n_seeds = 200;
  std::vector<double> sums(scn.trajectory.size(), 0.0);
  for (int seed = 0; seed < n_seeds; ++seed) {
    scn.seed = static_cast<std::uint64_t>(seed);
    const auto ms = generate_measurements(scn);
    for (std::size_t i = 0; i < ms.size(); ++i)
      sums[i] += static_cast<double>(ms[i].count);
  }
  for (std::size_t i = 0; i < scn.trajectory.size(); ++i) {
    const double lambda =
        expected_intensity(scn.trajectory[i], scn.truth_sources);
    const double tol = 4.0 * std::sqrt(lambda) / std::sqrt((double)n_seeds);
    CHECK(std::abs(sums[i] / n_seeds - lambda) < std::max(tol, 1e-6));
  }
}

TEST_CASE("scenario JSON round trip is lossless") {
  SourceParams s;
  s.position = Eigen::Vector2d(123.456789012345, 678.901234567891);
  s.strength = 99.87654321012345;
  s.dipole = Eigen::Vector2d(1234.5678901234, -87.65432109876);
  auto scn = simple_scenario(1000.0, {s}, 123456789ULL);
  const auto path = tmp_file("radloc_roundtrip.json");
  save_scenario(scn, path);
  const auto loaded = load_scenario(path);
  CHECK(loaded.env.bounds == scn.env.bounds);
  CHECK(loaded.seed == scn.seed);
  REQUIRE(loaded.truth_sources.size() == 1);
  CHECK(loaded.truth_sources[0].position == s.position);
  CHECK(loaded.truth_sources[0].strength == s.strength);
  REQUIRE(loaded.truth_sources[0].dipole.has_value());
  CHECK(*loaded.truth_sources[0].dipole == *s.dipole);
  REQUIRE(loaded.trajectory.size() == scn.trajectory.size());
  for (std::size_t i = 0; i < scn.trajectory.size(); ++i)
    CHECK(loaded.trajectory[i].position == scn.trajectory[i].position);
  fs::remove(path);
}

TEST_CASE("missing bounds is reported by field name") {
  const std::string text =
      R"({"dimension": 2, "sources": [], "trajectory": {"type": "lawnmower",
          "rows": 2, "cols": 2, "height_cm": 100}, "seed": 1})";
  CHECK_THROWS_WITH_AS(scenario_from_json_text(text),
                       doctest::Contains("bounds"), std::runtime_error);
}

TEST_CASE("meter units are converted to cm on load") {
  const std::string text =
      R"({"dimension": 2, "units": "m", "bounds": [[0, 10], [0, 10]],
          "sources": [{"position": [2.5, 2.5], "strength_uCi": 100}],
          "trajectory": {"type": "lawnmower", "rows": 10, "cols": 10,
                         "height_cm": 1}, "seed": 1})";
  const auto scn = scenario_from_json_text(text);
  CHECK(scn.env.bounds(0, 1) == 1000.0);
  CHECK(scn.truth_sources[0].position[0] == 250.0);
  CHECK(scn.trajectory[0].height == 100.0);
}

TEST_CASE("bundled fig5 scenario has 3 sources and 100 poses") {
  const auto scn =
      load_scenario(fs::path(RADLOC_SCENARIO_DIR) / "fig5_3src.json");
  CHECK(scn.truth_sources.size() == 3);
  CHECK(scn.trajectory.size() == 100);
}

TEST_CASE("prior point CSV parses 3-D rows") {
  const auto path = tmp_file("radloc_prior.csv");
  {
    std::ofstream out(path);
    out << "x_cm,y_cm,z_cm\n";
    for (int i = 0; i < 40; ++i)
      out << i * 10 << "," << i * 5 << "," << i % 7 << "\n";
  }
  const auto set = load_prior_points(path, 3);
  CHECK(set.size() == 40);
  CHECK(set.weights.empty());
  CHECK(set.points[3][0] == 30.0);
  fs::remove(path);
}

TEST_CASE("prior point dimension mismatch is an error") {
  const auto path = tmp_file("radloc_prior_bad.csv");
  {
    std::ofstream out(path);
    out << "1,2\n3,4\n";
  }
  CHECK_THROWS_AS(load_prior_points(path, 3), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("empty prior file is an error, not an empty set") {
  const auto path = tmp_file("radloc_prior_empty.csv");
  { std::ofstream out(path); }
  CHECK_THROWS_AS(load_prior_points(path, 2), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("undersampling is a deterministic subset of the requested size") {
  PriorPointSet set;
  for (int i = 0; i < 100000; ++i)
    set.points.push_back(Eigen::Vector2d(i, -i));
  const auto a = undersample(set, 2000, 9);
  const auto b = undersample(set, 2000, 9);
  REQUIRE(a.size() == 2000);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(a.points[i] == b.points[i]);
  const auto c = undersample(set, 2000, 10);
  bool differs = false;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.points[i] != a.points[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("measurement CSV round trip") {
  SourceParams s;
  s.position = Eigen::Vector2d(400, 600);
  s.strength = 100.0;
  const auto scn = simple_scenario(1000.0, {s}, 21);
  const auto ms = generate_measurements(scn);
  const auto path = tmp_file("radloc_meas.csv");
  save_measurements_csv(ms, path);
  const auto loaded = load_measurements_csv(path);
  REQUIRE(loaded.size() == ms.size());
  for (std::size_t i = 0; i < ms.size(); ++i) {
    CHECK(loaded[i].count == ms[i].count);
    CHECK(loaded[i].pose.position == ms[i].pose.position);
    CHECK(loaded[i].pose.background == ms[i].pose.background);
  }
  fs::remove(path);
}
