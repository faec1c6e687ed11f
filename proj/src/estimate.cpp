#include "radloc/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace radloc {

namespace {

// Scaled feature matrix: [position | strength | dipole?] per particle.
Eigen::MatrixXd feature_matrix(const ParticleSet& particles,
                               const FeatureScales& scales) {
  const std::size_t n = particles.size();
  const int dim = particles.particles.front().params.dimension();
  const bool with_dipole =
      particles.particles.front().params.dipole.has_value();
  const int f = dim + 1 + (with_dipole ? dim : 0);

  Eigen::MatrixXd x(n, f);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = particles.particles[i].params;
    for (int a = 0; a < dim; ++a) x(i, a) = p.position[a] / scales.position[a];
    x(i, dim) = p.strength / scales.strength;
    if (with_dipole)
      for (int a = 0; a < dim; ++a)
        x(i, dim + 1 + a) = (*p.dipole)[a] / scales.dipole;
  }
  return x;
}

bool row_less(const Eigen::MatrixXd& x, std::size_t a, std::size_t b) {
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    if (x(a, c) < x(b, c)) return true;
    if (x(a, c) > x(b, c)) return false;
  }
  return false;
}

// Weighted centroid with a canonical accumulation order (by lineage id,
// then feature row), so the result is independent of particle ordering.
Cluster build_cluster(const ParticleSet& particles, const Eigen::MatrixXd& x,
                      std::vector<std::size_t> members) {
  std::vector<std::size_t> order = members;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ia = particles.particles[a].id, ib = particles.particles[b].id;
    if (ia != ib) return ia < ib;
    return row_less(x, a, b);
  });

  Cluster c;
  std::sort(members.begin(), members.end());
  c.members = std::move(members);

  const int dim = particles.particles.front().params.dimension();
  const bool with_dipole =
      particles.particles.front().params.dipole.has_value();
  c.centroid.position = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd dip = Eigen::VectorXd::Zero(dim);
  for (std::size_t i : order) {
    const auto& p = particles.particles[i];
    const double w = std::exp(p.log_weight);
    c.total_weight += w;
    c.centroid.position += w * p.params.position;
    c.centroid.strength += w * p.params.strength;
    if (with_dipole) dip += w * *p.params.dipole;
  }
  if (c.total_weight > 0.0) {
    c.centroid.position /= c.total_weight;
    c.centroid.strength /= c.total_weight;
    if (with_dipole) c.centroid.dipole = dip / c.total_weight;
  } else {
    // Zero-mass cluster: fall back to the unweighted mean.
    for (std::size_t i : order) {
      c.centroid.position += particles.particles[i].params.position;
      c.centroid.strength += particles.particles[i].params.strength;
      if (with_dipole) dip += *particles.particles[i].params.dipole;
    }
    const double n = static_cast<double>(order.size());
    c.centroid.position /= n;
    c.centroid.strength /= n;
    if (with_dipole) c.centroid.dipole = dip / n;
  }
  return c;
}

std::vector<Cluster> clusters_from_labels(const ParticleSet& particles,
                                          const Eigen::MatrixXd& x,
                                          const std::vector<int>& labels,
                                          int n_labels) {
  std::vector<std::vector<std::size_t>> groups(n_labels);
  for (std::size_t i = 0; i < labels.size(); ++i)
    groups[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<Cluster> out;
  for (auto& g : groups)
    if (!g.empty()) out.push_back(build_cluster(particles, x, std::move(g)));
  return out;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    std::iota(parent.begin(), parent.end(), std::size_t{0});
  }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

FeatureScales feature_scales(const Environment& env, const FilterConfig& fcfg) {
  FeatureScales s;
  s.position = env.extent();
  s.strength = fcfg.strength_window[1] - fcfg.strength_window[0];
  s.dipole = 2.0 * fcfg.dipole_window;
  return s;
}

std::vector<Cluster> mean_shift(const ParticleSet& particles,
                                const FeatureScales& scales,
                                const Eigen::VectorXd& bandwidths, int max_iter,
                                double tol) {
  if (particles.particles.empty()) return {};
  if ((bandwidths.array() <= 0.0).any())
    throw std::invalid_argument("mean_shift: bandwidths must be > 0");

  const Eigen::MatrixXd x = feature_matrix(particles, scales);
  const std::size_t n = particles.size();
  if (bandwidths.size() != x.cols())
    throw std::invalid_argument("mean_shift: bandwidth dimension mismatch");

  // Work in bandwidth-normalized space: unit Gaussian kernel, unit merge
  // radius. Convergence is still measured in scaled (pre-bandwidth) units.
  Eigen::MatrixXd z = x;
  for (Eigen::Index c = 0; c < z.cols(); ++c) z.col(c) /= bandwidths[c];

  Eigen::VectorXd w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[static_cast<Eigen::Index>(i)] =
        std::exp(particles.particles[i].log_weight);
  if (w.sum() <= 0.0) w.setOnes();

  const double tol2_scaled = tol * tol;
  Eigen::MatrixXd modes(n, z.cols());
  Eigen::VectorXd y(z.cols()), num(z.cols());
  for (std::size_t i = 0; i < n; ++i) {
    y = z.row(static_cast<Eigen::Index>(i));
    for (int it = 0; it < max_iter; ++it) {
      num.setZero();
      double den = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const Eigen::Index jj = static_cast<Eigen::Index>(j);
        const double k =
            w[jj] * std::exp(-0.5 * (z.row(jj).transpose() - y).squaredNorm());
        num += k * z.row(jj).transpose();
        den += k;
      }
      if (den <= 0.0) break;
      const Eigen::VectorXd next = num / den;
      // Shift measured in scaled units.
      double shift2 = 0.0;
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        const double d = (next[c] - y[c]) * bandwidths[c];
        shift2 += d * d;
      }
      y = next;
      if (shift2 < tol2_scaled) break;
    }
    modes.row(static_cast<Eigen::Index>(i)) = y;
  }

  // Merge modes within one bandwidth, visiting them in a canonical
  // (sorted) order so the outcome is particle-order invariant.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return row_less(modes, a, b);
  });

  std::vector<Eigen::VectorXd> reps;
  std::vector<int> labels(n, -1);
  for (std::size_t i : order) {
    const Eigen::VectorXd m = modes.row(static_cast<Eigen::Index>(i));
    int found = -1;
    for (std::size_t r = 0; r < reps.size(); ++r) {
      if ((reps[r] - m).squaredNorm() <= 1.0) {
        found = static_cast<int>(r);
        break;
      }
    }
    if (found < 0) {
      found = static_cast<int>(reps.size());
      reps.push_back(m);
    }
    labels[i] = found;
  }
  return clusters_from_labels(particles, x, labels,
                              static_cast<int>(reps.size()));
}

std::vector<Cluster> mean_shift(const ParticleSet& particles,
                                const FeatureScales& scales,
                                const ClusterConfig& cfg) {
  if (particles.particles.empty()) return {};
  const Eigen::Index f = feature_matrix(particles, scales).cols();
  return mean_shift(particles, scales,
                    Eigen::VectorXd::Constant(f, cfg.bandwidth), cfg.max_iter,
                    cfg.tol);
}

std::vector<Cluster> ahc_cluster(const ParticleSet& particles,
                                 const FeatureScales& scales,
                                 const ClusterConfig& cfg) {
  if (particles.particles.empty()) return {};
  if (cfg.merge_distance <= 0.0)
    throw std::invalid_argument("ahc_cluster: merge_distance must be > 0");

  const Eigen::MatrixXd x = feature_matrix(particles, scales);
  const std::size_t n = particles.size();
  const double t2 = cfg.merge_distance * cfg.merge_distance;

  std::vector<int> labels(n, -1);
  int n_labels = 0;

  if (!cfg.average_linkage) {
    // Single linkage with a stop threshold is exactly the connected
    // components of the <=-threshold graph.
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if ((x.row(static_cast<Eigen::Index>(i)) -
             x.row(static_cast<Eigen::Index>(j)))
                .squaredNorm() <= t2)
          uf.unite(i, j);
    std::map<std::size_t, int> roots;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t r = uf.find(i);
      auto [it, inserted] = roots.try_emplace(r, n_labels);
      if (inserted) ++n_labels;
      labels[i] = it->second;
    }
  } else {
    // Naive Lance-Williams average linkage; intended for modest n.
    std::vector<std::vector<std::size_t>> groups(n);
    std::vector<bool> alive(n, true);
    Eigen::MatrixXd d(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      groups[i] = {i};
      for (std::size_t j = 0; j < n; ++j)
        d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            (x.row(static_cast<Eigen::Index>(i)) -
             x.row(static_cast<Eigen::Index>(j)))
                .norm();
    }
    for (;;) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t bi = 0, bj = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!alive[i]) continue;
        for (std::size_t j = i + 1; j < n; ++j) {
          if (!alive[j]) continue;
          const double dij =
              d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          if (dij < best) { best = dij; bi = i; bj = j; }
        }
      }
      if (!std::isfinite(best) || best > cfg.merge_distance) break;
      const double ni = static_cast<double>(groups[bi].size());
      const double nj = static_cast<double>(groups[bj].size());
      for (std::size_t k = 0; k < n; ++k) {
        if (!alive[k] || k == bi || k == bj) continue;
        const double dk =
            (ni * d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(bi)) +
             nj * d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(bj))) /
            (ni + nj);
        d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(bi)) = dk;
        d(static_cast<Eigen::Index>(bi), static_cast<Eigen::Index>(k)) = dk;
      }
      groups[bi].insert(groups[bi].end(), groups[bj].begin(), groups[bj].end());
      groups[bj].clear();
      alive[bj] = false;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!alive[i]) continue;
      for (std::size_t m : groups[i]) labels[m] = n_labels;
      ++n_labels;
    }
  }
  return clusters_from_labels(particles, x, labels, n_labels);
}

std::vector<Cluster> id_cluster(const ParticleSet& particles) {
  if (particles.particles.empty()) return {};
  FeatureScales unit;
  unit.position =
      Eigen::VectorXd::Ones(particles.particles.front().params.dimension());
  const Eigen::MatrixXd x = feature_matrix(particles, unit);

  std::map<std::uint64_t, std::vector<std::size_t>> by_id;
  for (std::size_t i = 0; i < particles.size(); ++i)
    by_id[particles.particles[i].id].push_back(i);
  std::vector<Cluster> out;
  out.reserve(by_id.size());
  for (auto& [id, members] : by_id)
    out.push_back(build_cluster(particles, x, std::move(members)));
  return out;
}

std::vector<Cluster> cluster_particles(const ParticleSet& particles,
                                       const FeatureScales& scales,
                                       const ClusterConfig& cfg) {
  switch (cfg.backend) {
    case ClusterBackend::kMeanShift:
      return mean_shift(particles, scales, cfg);
    case ClusterBackend::kAhc:
      return ahc_cluster(particles, scales, cfg);
    case ClusterBackend::kId:
      return id_cluster(particles);
  }
  throw std::logic_error("cluster_particles: unknown backend");
}

std::vector<CandidateSource> extract_candidates(
    const std::vector<Cluster>& clusters, double min_support) {
  std::vector<CandidateSource> out;
  for (const auto& c : clusters) {
    if (c.total_weight < min_support) continue;
    CandidateSource cand;
    cand.params = c.centroid;
    cand.support = c.total_weight;
    out.push_back(std::move(cand));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const CandidateSource& a, const CandidateSource& b) {
                     return a.support > b.support;
                   });
  return out;
}

}  // namespace radloc
