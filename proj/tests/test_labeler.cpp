#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "radloc/labeler.hpp"
#include "radloc/sweep.hpp"

using namespace radloc;

namespace {

const std::filesystem::path kScenarioDir = RADLOC_SCENARIO_DIR;

Measurement measure_at(double x, double y, long count, double h = 100.0,
                       double bg = 0.0) {
  Measurement m;
  m.pose.position = Eigen::Vector2d(x, y);
  m.pose.height = h;
  m.pose.efficiency = 1.0;
  m.pose.background = bg;
  m.count = count;
  return m;
}

CandidateSource candidate_at(double x, double y, double s) {
  CandidateSource c;
  c.params.position = Eigen::Vector2d(x, y);
  c.params.strength = s;
  c.support = 1.0;
  return c;
}

/// A small sensor ring around a candidate with every count frozen at the
/// floor of its expected rate, which maximizes each normalized term.
std::vector<Measurement> frozen_ring(const CandidateSource& cand, double bg) {
  std::vector<Measurement> ms;
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * i / 8.0;
    Measurement m = measure_at(cand.params.position[0] + 120.0 * std::cos(a),
                               cand.params.position[1] + 120.0 * std::sin(a),
                               0, 100.0, bg);
    const double rate = expected_intensity(m.pose, {&cand.params, 1});
    m.count = static_cast<long>(std::floor(rate));
    ms.push_back(m);
  }
  return ms;
}

}  // namespace

TEST_CASE("confidence is exactly one on floor-of-rate counts") {
  const CandidateSource cand = candidate_at(500, 500, 100);
  const auto ms = frozen_ring(cand, 2.0);
  LabelConfig cfg;
  cfg.k = 5;
  CHECK(confidence(cand, ms, {}, cfg) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("confidence stays in (0, 1] and collapses for a fictitious source") {
  LabelConfig cfg;
  cfg.k = 5;
  const CandidateSource real = candidate_at(500, 500, 100);
  const auto ms = frozen_ring(real, 2.0);

  // A strong hypothesis far from the measured activity predicts large
  // counts at its own nearest sensors and is contradicted.
  const CandidateSource ghost = candidate_at(520, 480, 180);
  const double c_ghost = confidence(ghost, ms, {}, cfg);
  CHECK(c_ghost > 0.0);
  CHECK(c_ghost <= 1.0);
  CHECK(c_ghost < 0.1);

  // Folding the real source into the resolved list explains the counts,
  // leaving the ghost to over-predict even harder.
  ResolvedSource resolved;
  resolved.params = real.params;
  CHECK(confidence(ghost, ms, {&resolved, 1}, cfg) <= c_ghost + 1e-12);
}

TEST_CASE("label config validation") {
  const std::size_t n = 20;
  LabelConfig cfg;
  CHECK_NOTHROW(cfg.validate(n));

  LabelConfig big_k = cfg;
  big_k.k = 21;
  CHECK_THROWS_AS(big_k.validate(n), std::invalid_argument);

  LabelConfig bad_omega = cfg;
  bad_omega.omegas = {0.5, 0.2, 0.2};  // sums to 0.9, length matches k
  CHECK_THROWS_AS(bad_omega.validate(n), std::invalid_argument);

  LabelConfig wrong_len = cfg;
  wrong_len.omegas = {0.5, 0.5};  // k is 3
  CHECK_THROWS_AS(wrong_len.validate(n), std::invalid_argument);

  LabelConfig bad_thresh = cfg;
  bad_thresh.confidence_thresh = 1.5;
  CHECK_THROWS_AS(bad_thresh.validate(n), std::invalid_argument);

  LabelConfig bad_it = cfg;
  bad_it.max_iterations = 0;
  CHECK_THROWS_AS(bad_it.validate(n), std::invalid_argument);
}

TEST_CASE("effective_bg_thresh: explicit value wins, else 4-sigma of bg") {
  std::vector<Measurement> ms;
  for (int i = 0; i < 25; ++i) ms.push_back(measure_at(i * 10.0, 0, 3, 100, 4.0));
  LabelConfig cfg;
  cfg.bg_thresh = 123.0;
  CHECK(effective_bg_thresh(cfg, ms) == doctest::Approx(123.0));
  cfg.bg_thresh = -1.0;
  CHECK(effective_bg_thresh(cfg, ms) ==
        doctest::Approx(4.0 * std::sqrt(25.0 * 4.0)).epsilon(1e-12));
}

TEST_CASE("label_sources screens weak and low-confidence candidates") {
  const CandidateSource good = candidate_at(500, 500, 100);
  const auto ms = frozen_ring(good, 2.0);
  LabelConfig cfg;
  cfg.k = 5;
  cfg.source_thresh = 40.0;

  SUBCASE("accepted candidate is appended with its confidence") {
    std::vector<ResolvedSource> resolved;
    auto [fresh, rerun] = label_sources({&good, 1}, ms, resolved, cfg, 2);
    REQUIRE(fresh.size() == 1);
    REQUIRE(resolved.size() == 1);
    CHECK(resolved[0].confidence == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(resolved[0].iteration_found == 2);
    CHECK(!rerun);  // the frozen ring is fully explained
  }

  SUBCASE("below the strength floor the candidate is dropped") {
    CandidateSource weak = good;
    weak.params.strength = 10.0;
    std::vector<ResolvedSource> resolved;
    auto [fresh, rerun] = label_sources({&weak, 1}, ms, resolved, cfg, 1);
    CHECK(fresh.empty());
    CHECK(resolved.empty());
    CHECK(rerun);  // the ring's activity stays unexplained
  }

  SUBCASE("low confidence rejects and prior resolved sources persist") {
    std::vector<ResolvedSource> resolved;
    ResolvedSource keeper;
    keeper.params = candidate_at(100, 100, 60).params;
    resolved.push_back(keeper);
    const CandidateSource ghost = candidate_at(520, 480, 180);
    auto [fresh, rerun] = label_sources({&ghost, 1}, ms, resolved, cfg, 1);
    CHECK(fresh.empty());
    REQUIRE(resolved.size() == 1);
    CHECK(resolved[0].params.strength == doctest::Approx(60.0));
    CHECK(rerun);
  }
}

TEST_CASE("outer loop on an empty scene terminates immediately by checksum") {
  Scenario scn;
  scn.env.bounds = Eigen::MatrixX2d(2, 2);
  scn.env.bounds << 0.0, 1000.0, 0.0, 1000.0;
  scn.env.background = 2.0;
  scn.lawnmower = LawnmowerSpec{8, 8, 100.0};
  scn.trajectory = lawnmower_trajectory(scn.env, 8, 8, 100.0);
  scn.seed = 3;

  FilterConfig fcfg = default_filter_config(scn.env, trajectory_pitch(scn));
  fcfg.n_particles = 300;
  LabelConfig lcfg;
  lcfg.source_thresh = 40.0;
  ClusterConfig ccfg;
  const auto res = run_outer_loop(scn, fcfg, lcfg, ccfg, 3);
  CHECK(res.resolved.empty());
  CHECK(res.iterations_used == 1);
  CHECK(res.terminated_by == Termination::kChecksum);
  REQUIRE(res.checksum_history.size() == 1);
  CHECK(std::abs(res.checksum_history[0]) <
        4.0 * std::sqrt(64.0 * scn.env.background) + 1e-9);
}

TEST_CASE("outer loop resolves the bundled three-source scenario") {
  const Scenario scn = load_scenario(kScenarioDir / "fig5_3src.json");
  FilterConfig fcfg = default_filter_config(scn.env, trajectory_pitch(scn));
  LabelConfig lcfg;
  lcfg.source_thresh = 40.0;
  lcfg.max_iterations = 4;
  ClusterConfig ccfg;
  const auto res = run_outer_loop(scn, fcfg, lcfg, ccfg, 7);

  CHECK(res.resolved.size() == 3);
  CHECK(res.terminated_by == Termination::kChecksum);
  std::vector<SourceParams> est;
  for (const auto& r : res.resolved) {
    CHECK(r.confidence >= lcfg.confidence_thresh);
    est.push_back(r.params);
  }
  const auto mr =
      match_sources(est, scn.truth_sources, default_match_radius(scn.env));
  CHECK(mr.pairs.size() == 3);
  CHECK(res.trace.size() == static_cast<std::size_t>(res.iterations_used));
  CHECK(res.checksum_history.size() ==
        static_cast<std::size_t>(res.iterations_used));
}

TEST_CASE("outer loop output is byte-identical across repeat runs") {
  const Scenario scn = load_scenario(kScenarioDir / "fig5_3src.json");
  FilterConfig fcfg = default_filter_config(scn.env, trajectory_pitch(scn));
  fcfg.n_particles = 500;
  LabelConfig lcfg;
  lcfg.source_thresh = 40.0;
  ClusterConfig ccfg;
  const std::string a =
      result_to_json_text(run_outer_loop(scn, fcfg, lcfg, ccfg, 11));
  const std::string b =
      result_to_json_text(run_outer_loop(scn, fcfg, lcfg, ccfg, 11));
  CHECK(a == b);
}
