#pragma once

#include "radloc/filter.hpp"
#include "radloc/types.hpp"

namespace radloc {

/// A group of particles with its weighted centroid in parameter space.
struct Cluster {
  std::vector<std::size_t> members;
  SourceParams centroid;
  double total_weight = 0.0;
};

/// A screened cluster centroid awaiting confidence evaluation.
struct CandidateSource {
  SourceParams params;
  double support = 0.0;
  std::optional<double> confidence;
};

enum class ClusterBackend { kMeanShift, kAhc, kId };

struct ClusterConfig {
  ClusterBackend backend = ClusterBackend::kMeanShift;
  double bandwidth = 0.05;       // scaled units, each feature dimension
  double merge_distance = 0.08;  // AHC threshold, scaled units
  int max_iter = 300;
  double tol = 1e-4;             // scaled-space convergence threshold
  double min_support = 0.02;
  bool average_linkage = false;
};

/// Per-feature normalization: positions by axis extent, strength by the
/// window width, dipole components by the init window. Distances are
/// meaningless across raw units without this.
struct FeatureScales {
  Eigen::VectorXd position;
  double strength = 1.0;
  double dipole = 1.0;
};

FeatureScales feature_scales(const Environment& env, const FilterConfig& fcfg);

/// Weighted Gaussian-kernel mean shift on scaled features; converged
/// modes within one bandwidth are merged, each particle joins its mode's
/// cluster. Deterministic and particle-order invariant.
std::vector<Cluster> mean_shift(const ParticleSet& particles,
                                const FeatureScales& scales,
                                const Eigen::VectorXd& bandwidths, int max_iter,
                                double tol);
std::vector<Cluster> mean_shift(const ParticleSet& particles,
                                const FeatureScales& scales,
                                const ClusterConfig& cfg);

/// Single-linkage agglomeration until no pair of clusters is within
/// merge_distance; equivalent to connected components of the
/// <=-threshold adjacency graph. An average-linkage variant is kept
/// behind cfg.average_linkage.
std::vector<Cluster> ahc_cluster(const ParticleSet& particles,
                                 const FeatureScales& scales,
                                 const ClusterConfig& cfg);

/// One cluster per surviving lineage id.
std::vector<Cluster> id_cluster(const ParticleSet& particles);

std::vector<Cluster> cluster_particles(const ParticleSet& particles,
                                       const FeatureScales& scales,
                                       const ClusterConfig& cfg);

/// Screens dust clusters and orders candidates by support, descending.
std::vector<CandidateSource> extract_candidates(
    const std::vector<Cluster>& clusters, double min_support);

}  // namespace radloc
