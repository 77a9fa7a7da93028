#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "cdkf/errors.hpp"

namespace cdkf {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Ordered time nodes spanning a planning horizon [t0, tf].
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> nodes);

  /// Uniform grid with `n` nodes (n >= 2) on [t0, tf].
  static TimeGrid uniform(double t0, double tf, int n);

  double t0() const { return nodes_.front(); }
  double tf() const { return nodes_.back(); }
  const std::vector<double>& nodes() const { return nodes_; }
  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_intervals() const { return num_nodes() - 1; }
  double dt(int k) const { return nodes_[k + 1] - nodes_[k]; }

  /// Index of the interval containing t; t == tf maps to the last interval.
  int interval_of(double t) const;

  bool contains(double t) const { return t >= t0() && t <= tf(); }

 private:
  std::vector<double> nodes_;
};

/// Linear continuous-time process dx = A(xi,t) x dt + sigma(xi,t) dW.
struct ProcessModel {
  int n = 0;  // state dimension
  int m = 0;  // Wiener process dimension
  std::function<MatrixXd(const VectorXd& xi, double t)> drift;      // n x n
  std::function<MatrixXd(const VectorXd& xi, double t)> diffusion;  // n x m
};

/// One sensor: output map, noise covariance and its jump effect on the
/// perturbed auxiliary state.
struct Sensor {
  int id = 0;  // 1-based
  int q = 0;   // output dimension
  std::function<MatrixXd(const VectorXd& xi, double t)> output;     // q x n
  std::function<MatrixXd(const VectorXd& xi, double t)> noise_cov;  // q x q
  // Jump added to xi_p when this sensor fires. Size n_p.
  std::function<VectorXd(const VectorXd& xi, const VectorXd& u, double t)> jump;
};

enum class ConvexityTag { Affine, Concave, Convex, None };

/// Auxiliary dynamics, split into a perturbed part xi_p (affected by
/// measurement events) and an unperturbed part xi_u. Convention: the full
/// auxiliary vector is stored as [xi_p; xi_u], xi_p first.
struct AuxModel {
  int n_xi = 0;  // total auxiliary dimension
  int n_p = 0;   // perturbed dimension, n_p <= n_xi
  // d xi_p/dt between events. Receives the full xi.
  std::function<VectorXd(const VectorXd& xi, const VectorXd& u, double t)> f_p;
  // d xi_u/dt. Receives only xi_u, so it cannot read xi_p.
  std::function<VectorXd(const VectorXd& xi_u, const VectorXd& u, double t)>
      f_u;
  ConvexityTag convexity_tag = ConvexityTag::Affine;

  int n_u() const { return n_xi - n_p; }
  static VectorXd perturbed_part(const VectorXd& xi, int n_p) {
    return xi.head(n_p);
  }
  static VectorXd unperturbed_part(const VectorXd& xi, int n_p) {
    return xi.tail(xi.size() - n_p);
  }
};

/// Symmetrizes and clamps tiny negative eigenvalues (>= -1e-10) of a
/// covariance to zero; anything below the floor throws. Matrices that are
/// already symmetric PSD pass through bit-exactly.
MatrixXd floored_spd(const MatrixXd& cov);

/// Gaussian state belief. The covariance is symmetrized on construction;
/// eigenvalues in [-1e-10, 0) are clamped to zero, anything below the floor
/// is an error.
class GaussianBelief {
 public:
  static constexpr double kEigFloor = 1e-10;

  GaussianBelief() = default;
  GaussianBelief(VectorXd mean, MatrixXd cov);

  const VectorXd& mean() const { return mean_; }
  const MatrixXd& cov() const { return cov_; }
  int dim() const { return static_cast<int>(mean_.size()); }

 private:
  VectorXd mean_;
  MatrixXd cov_;
};

/// Piecewise-constant per-sensor measurement intensities on a grid.
/// rates is S x (num_nodes - 1); entry (s, k) is the rate of sensor s+1 on
/// [node_k, node_{k+1}).
class RatePlan {
 public:
  RatePlan(TimeGrid grid, MatrixXd rates);

  const TimeGrid& grid() const { return grid_; }
  const MatrixXd& rates() const { return rates_; }
  int num_sensors() const { return static_cast<int>(rates_.rows()); }

  /// Rate of sensor s (0-based row) at time t; t == tf evaluates the last
  /// interval.
  double rate_at(int s, double t) const;
  VectorXd rates_at(double t) const;

 private:
  TimeGrid grid_;
  MatrixXd rates_;
};

/// Piecewise-constant input trajectory on a grid (m_u x intervals).
class InputPlan {
 public:
  InputPlan(TimeGrid grid, MatrixXd values);

  /// Constant-zero plan of the given input dimension.
  static InputPlan zero(const TimeGrid& grid, int m_u);

  const TimeGrid& grid() const { return grid_; }
  const MatrixXd& values() const { return values_; }
  int dim() const { return static_cast<int>(values_.rows()); }
  VectorXd value_at(double t) const;
  VectorXd value_of_interval(int k) const { return values_.col(k); }

 private:
  TimeGrid grid_;
  MatrixXd values_;
};

/// Per-sensor ordered measurement times inside the horizon.
struct Schedule {
  std::vector<std::vector<double>> times;  // indexed by sensor (0-based)

  int num_sensors() const { return static_cast<int>(times.size()); }
  int total_events() const;
  /// Throws ScheduleOutOfRangeError if any time lies outside [t0, tf] or a
  /// per-sensor list is not strictly increasing.
  void validate(const TimeGrid& grid) const;
};

/// One structural problem found while validating a model bundle.
struct ValidationIssue {
  std::string where;  // "process.drift", "sensor 2.noise_cov", ...
  std::string what;
};

/// Probes all model callbacks on the grid nodes along a nominal auxiliary
/// trajectory and returns the list of violations (empty = valid). Callback
/// failures are reported as violations, never rethrown.
std::vector<ValidationIssue> validate_model(
    const ProcessModel& process, const AuxModel& aux,
    const std::vector<Sensor>& sensors, const TimeGrid& grid,
    const std::function<VectorXd(double)>& nominal_aux,
    const VectorXd& nominal_input);

}  // namespace cdkf
