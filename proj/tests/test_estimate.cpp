#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>
#include <vector>

#include "radloc/estimate.hpp"
#include "radloc/random.hpp"

using namespace radloc;

namespace {

Environment square_env(double side = 1000.0) {
  Environment env;
  env.bounds = Eigen::MatrixX2d(2, 2);
  env.bounds << 0.0, side, 0.0, side;
  return env;
}

ParticleSet make_set(const std::vector<SourceParams>& params) {
  ParticleSet set;
  const double lw = -std::log(static_cast<double>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Particle p;
    p.params = params[i];
    p.id = i;
    p.log_weight = lw;
    set.particles.push_back(p);
  }
  set.next_id = params.size();
  return set;
}

SourceParams src(double x, double y, double s) {
  SourceParams p;
  p.position = Eigen::Vector2d(x, y);
  p.strength = s;
  return p;
}

/// Two well-separated blobs of jittered particles.
ParticleSet two_blob_set(RandomStream& rng, int per_blob = 200) {
  std::vector<SourceParams> params;
  const SourceParams centers[2] = {src(200, 200, 60), src(800, 700, 120)};
  for (const auto& c : centers)
    for (int i = 0; i < per_blob; ++i) {
      SourceParams p = c;
      p.position[0] += rng.normal(0.0, 8.0);
      p.position[1] += rng.normal(0.0, 8.0);
      p.strength += rng.normal(0.0, 2.0);
      params.push_back(p);
    }
  return make_set(params);
}

bool is_partition(const std::vector<Cluster>& clusters, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& c : clusters)
    for (std::size_t m : c.members) {
      if (m >= n || seen[m]) return false;
      seen[m] = 1;
    }
  return std::accumulate(seen.begin(), seen.end(), std::size_t{0}) == n;
}

}  // namespace

TEST_CASE("mean shift: a single atom yields one cluster at itself") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  ParticleSet set = make_set({src(300, 400, 75)});
  ClusterConfig ccfg;
  const auto clusters = mean_shift(set, feature_scales(env, fcfg), ccfg);
  REQUIRE(clusters.size() == 1);
  CHECK(clusters[0].members == std::vector<std::size_t>{0});
  CHECK(clusters[0].centroid.position[0] == doctest::Approx(300.0));
  CHECK(clusters[0].centroid.strength == doctest::Approx(75.0));
  CHECK(clusters[0].total_weight == doctest::Approx(1.0));
}

TEST_CASE("mean shift recovers two well-separated modes within bandwidth/2") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  RandomStream rng(21);
  ParticleSet set = two_blob_set(rng);
  ClusterConfig ccfg;  // bandwidth 0.05 scaled = 50 cm here
  const FeatureScales scales = feature_scales(env, fcfg);
  const auto clusters = mean_shift(set, scales, ccfg);
  REQUIRE(clusters.size() == 2);
  CHECK(is_partition(clusters, set.size()));

  const double half_bw_cm = 0.5 * ccfg.bandwidth * 1000.0;
  std::vector<Eigen::Vector2d> truth{{200, 200}, {800, 700}};
  for (const auto& t : truth) {
    double best = 1e18;
    for (const auto& c : clusters)
      best = std::min(best, (c.centroid.position.head(2) - t).norm());
    CHECK(best < half_bw_cm);
  }
}

TEST_CASE("mean shift is invariant to particle order") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  RandomStream rng(22);
  ParticleSet fwd = two_blob_set(rng, 60);
  ParticleSet rev = fwd;
  std::reverse(rev.particles.begin(), rev.particles.end());

  ClusterConfig ccfg;
  const FeatureScales scales = feature_scales(env, fcfg);
  auto a = mean_shift(fwd, scales, ccfg);
  auto b = mean_shift(rev, scales, ccfg);
  REQUIRE(a.size() == b.size());
  auto key = [](const Cluster& c) { return c.centroid.position[0]; };
  std::sort(a.begin(), a.end(),
            [&](const Cluster& l, const Cluster& r) { return key(l) < key(r); });
  std::sort(b.begin(), b.end(),
            [&](const Cluster& l, const Cluster& r) { return key(l) < key(r); });
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].members.size() == b[i].members.size());
    CHECK(a[i].centroid.position[0] ==
          doctest::Approx(b[i].centroid.position[0]).epsilon(1e-9));
    CHECK(a[i].centroid.strength ==
          doctest::Approx(b[i].centroid.strength).epsilon(1e-9));
  }
}

TEST_CASE("ahc matches the connected-components oracle") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  const FeatureScales scales = feature_scales(env, fcfg);
  RandomStream rng(23);

  for (int trial = 0; trial < 20; ++trial) {
    const int n = 20 + static_cast<int>(rng.index(180));
    std::vector<SourceParams> params;
    for (int i = 0; i < n; ++i)
      params.push_back(src(rng.uniform(0, 1000), rng.uniform(0, 1000),
                           rng.uniform(0, 200)));
    ParticleSet set = make_set(params);
    ClusterConfig ccfg;
    ccfg.backend = ClusterBackend::kAhc;
    ccfg.merge_distance = 0.08;
    const auto clusters = ahc_cluster(set, scales, ccfg);
    CHECK(is_partition(clusters, set.size()));

    // Oracle: union-find over the <= merge_distance adjacency graph in
    // scaled feature space.
    auto feat = [&](const SourceParams& p) {
      Eigen::Vector3d f;
      f << p.position[0] / scales.position[0],
          p.position[1] / scales.position[1], p.strength / scales.strength;
      return f;
    };
    std::vector<int> root(n);
    std::iota(root.begin(), root.end(), 0);
    std::function<int(int)> find = [&](int i) {
      return root[i] == i ? i : root[i] = find(root[i]);
    };
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if ((feat(params[i]) - feat(params[j])).norm() <= ccfg.merge_distance)
          root[find(i)] = find(j);
    std::set<int> comps;
    for (int i = 0; i < n; ++i) comps.insert(find(i));
    CHECK(clusters.size() == comps.size());

    // Same partition, not just the same count.
    std::vector<int> label(n, -1);
    for (std::size_t c = 0; c < clusters.size(); ++c)
      for (std::size_t m : clusters[c].members) label[m] = static_cast<int>(c);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        CHECK((label[i] == label[j]) == (find(i) == find(j)));
  }
}

TEST_CASE("ahc extremes: all singletons and one merged cluster") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  const FeatureScales scales = feature_scales(env, fcfg);
  std::vector<SourceParams> params;
  for (int i = 0; i < 10; ++i) params.push_back(src(100.0 * i, 0, 100));
  ParticleSet set = make_set(params);

  ClusterConfig tight;
  tight.backend = ClusterBackend::kAhc;
  tight.merge_distance = 1e-6;
  CHECK(ahc_cluster(set, scales, tight).size() == 10);

  ClusterConfig loose;
  loose.backend = ClusterBackend::kAhc;
  loose.merge_distance = 10.0;
  CHECK(ahc_cluster(set, scales, loose).size() == 1);
}

TEST_CASE("id clustering groups by lineage") {
  std::vector<SourceParams> params;
  for (int i = 0; i < 12; ++i) params.push_back(src(10.0 * i, 5.0 * i, 50));
  ParticleSet fresh = make_set(params);
  CHECK(id_cluster(fresh).size() == 12);  // all distinct ids

  ParticleSet collapsed = fresh;
  for (std::size_t i = 0; i < collapsed.size(); ++i)
    collapsed.particles[i].id = i % 3;
  const auto clusters = id_cluster(collapsed);
  CHECK(clusters.size() == 3);
  CHECK(is_partition(clusters, collapsed.size()));
  for (const auto& c : clusters) CHECK(c.members.size() == 4);
}

TEST_CASE("extract_candidates screens dust and sorts by support") {
  std::vector<Cluster> clusters(3);
  clusters[0].total_weight = 0.15;
  clusters[0].centroid = src(1, 1, 1);
  clusters[1].total_weight = 0.84;
  clusters[1].centroid = src(2, 2, 2);
  clusters[2].total_weight = 0.01;
  clusters[2].centroid = src(3, 3, 3);

  const auto cands = extract_candidates(clusters, 0.02);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].support == doctest::Approx(0.84));
  CHECK(cands[1].support == doctest::Approx(0.15));
  CHECK(!cands[0].confidence.has_value());

  // min_support 0 keeps everything; a lone full-weight cluster survives
  // any admissible threshold.
  CHECK(extract_candidates(clusters, 0.0).size() == 3);
  std::vector<Cluster> lone(1);
  lone[0].total_weight = 1.0;
  lone[0].centroid = src(0, 0, 0);
  CHECK(extract_candidates(lone, 0.9).size() == 1);
}

TEST_CASE("every backend returns a partition with centroids in the hull") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  const FeatureScales scales = feature_scales(env, fcfg);
  RandomStream rng(24);
  ParticleSet set = two_blob_set(rng, 100);

  for (ClusterBackend backend : {ClusterBackend::kMeanShift,
                                 ClusterBackend::kAhc, ClusterBackend::kId}) {
    ClusterConfig ccfg;
    ccfg.backend = backend;
    const auto clusters = cluster_particles(set, scales, ccfg);
    CHECK(is_partition(clusters, set.size()));
    double total = 0.0;
    for (const auto& c : clusters) {
      total += c.total_weight;
      // Per-coordinate hull of the members contains the weighted centroid.
      Eigen::Vector2d lo(1e18, 1e18), hi(-1e18, -1e18);
      double slo = 1e18, shi = -1e18;
      for (std::size_t m : c.members) {
        const SourceParams& p = set.particles[m].params;
        lo = lo.cwiseMin(Eigen::Vector2d(p.position.head(2)));
        hi = hi.cwiseMax(Eigen::Vector2d(p.position.head(2)));
        slo = std::min(slo, p.strength);
        shi = std::max(shi, p.strength);
      }
      for (int d = 0; d < 2; ++d) {
        CHECK(c.centroid.position[d] >= lo[d] - 1e-9);
        CHECK(c.centroid.position[d] <= hi[d] + 1e-9);
      }
      CHECK(c.centroid.strength >= slo - 1e-9);
      CHECK(c.centroid.strength <= shi + 1e-9);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("doubling every weight leaves the clustering unchanged") {
  const Environment env = square_env();
  const FilterConfig fcfg = default_filter_config(env, 100.0);
  const FeatureScales scales = feature_scales(env, fcfg);
  RandomStream rng(25);
  ParticleSet base = two_blob_set(rng, 80);
  ParticleSet scaled = base;
  for (auto& p : scaled.particles) p.log_weight += std::log(2.0);

  ClusterConfig ccfg;
  const auto a = mean_shift(base, scales, ccfg);
  const auto b = mean_shift(scaled, scales, ccfg);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].members == b[i].members);
    CHECK((a[i].centroid.position - b[i].centroid.position).norm() < 1e-9);
    CHECK(a[i].centroid.strength ==
          doctest::Approx(b[i].centroid.strength).epsilon(1e-9));
  }
}
