#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

namespace radloc {

/// A point source hypothesis or ground truth: position (cm), strength
/// (uCi), and an optional dipole moment (uCi*cm, effective units) for
/// bulk sources. Dimension D is 2 or 3 and must match across fields.
struct SourceParams {
  Eigen::VectorXd position;
  double strength = 0.0;
  std::optional<Eigen::VectorXd> dipole;

  int dimension() const { return static_cast<int>(position.size()); }

  void validate() const {
    if (strength < 0.0)
      throw std::invalid_argument("SourceParams: strength must be >= 0");
    if (dipole && dipole->size() != position.size())
      throw std::invalid_argument(
          "SourceParams: dipole dimension must match position");
  }
};

/// One sensor placement in the ground frame.
struct SensorPose {
  Eigen::VectorXd position;  // cm
  double height = 100.0;     // cm, sensor standoff; must stay > 0
  double efficiency = 1.0;
  double background = 2.0;   // CPS

  void validate() const {
    if (height <= 0.0)
      throw std::invalid_argument("SensorPose: height must be > 0");
    if (efficiency <= 0.0)
      throw std::invalid_argument("SensorPose: efficiency must be > 0");
    if (background < 0.0)
      throw std::invalid_argument("SensorPose: background must be >= 0");
  }
};

/// One Poisson count observation at a pose.
struct Measurement {
  SensorPose pose;
  long count = 0;      // CPS, integral
  int time_step = 0;
};

/// Axis-aligned survey region with per-scenario sensor defaults.
struct Environment {
  Eigen::MatrixX2d bounds;   // one row per axis: [min, max] in cm
  double background = 2.0;   // CPS
  double efficiency = 1.0;

  int dimension() const { return static_cast<int>(bounds.rows()); }

  Eigen::VectorXd extent() const { return bounds.col(1) - bounds.col(0); }

  Eigen::VectorXd center() const {
    return 0.5 * (bounds.col(0) + bounds.col(1));
  }

  bool contains(const Eigen::VectorXd& p) const {
    if (p.size() != bounds.rows()) return false;
    for (Eigen::Index i = 0; i < p.size(); ++i)
      if (p[i] < bounds(i, 0) || p[i] > bounds(i, 1)) return false;
    return true;
  }

  Eigen::VectorXd clamp(Eigen::VectorXd p) const {
    for (Eigen::Index i = 0; i < p.size(); ++i)
      p[i] = std::min(std::max(p[i], bounds(i, 0)), bounds(i, 1));
    return p;
  }

  void validate() const {
    const int d = dimension();
    if (d != 2 && d != 3)
      throw std::invalid_argument("Environment: dimension must be 2 or 3");
    for (int i = 0; i < d; ++i)
      if (!(bounds(i, 0) < bounds(i, 1)))
        throw std::invalid_argument("Environment: min must be < max per axis");
  }
};

/// Optional per-point-weighted point set used for guided particle
/// initialization (e.g. an under-sampled scene point cloud).
struct PriorPointSet {
  std::vector<Eigen::VectorXd> points;
  std::vector<double> weights;  // empty => uniform

  bool empty() const { return points.empty(); }
  std::size_t size() const { return points.size(); }
};

}  // namespace radloc
