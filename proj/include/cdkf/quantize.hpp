#pragma once

#include <vector>

#include "cdkf/model.hpp"

namespace cdkf {

/// One sensor's piecewise-constant intensity with its piecewise-linear
/// cumulative integral (exact, no quadrature).
class IntensityProfile {
 public:
  IntensityProfile(const RatePlan& plan, int sensor_index);

  const TimeGrid& grid() const { return grid_; }
  double rate_of_interval(int k) const { return rates_[k]; }
  /// Cumulative intensity at a grid node.
  double cumulative_at_node(int k) const { return cumulative_[k]; }
  double total() const { return cumulative_.back(); }

  /// Exact cumulative intensity at any t inside the horizon.
  double cumulative(double t) const;

  /// Smallest t with cumulative(t) == target; on flat stretches the left
  /// edge is returned. target must lie in [0, total()].
  double invert(double target) const;

  /// Integral of t * rate(t) over [a, b] (closed form per segment).
  double first_moment(double a, double b) const;
  /// Integral of t^2 * rate(t) over [a, b].
  double second_moment(double a, double b) const;
  /// Integral of rate(t) over [a, b].
  double mass(double a, double b) const;

 private:
  TimeGrid grid_;
  std::vector<double> rates_;       // per interval
  std::vector<double> cumulative_;  // per node, cumulative_[0] == 0
};

/// Exact cumulative intensity Lambda(t). Range-checked.
double cumulative_intensity(const IntensityProfile& profile, double t);

/// Number of deterministic measurement times matching the expected event
/// count: floor(Lambda_T + 0.5).
int select_count(double lambda_total);

/// Conditional centroids of the normalized intensity on n equal-mass cells.
/// Returns the strictly increasing measurement times; n == 0 yields an empty
/// list. Throws DegenerateIntensityError when n >= 1 but the total intensity
/// is zero.
std::vector<double> quantize_times(const IntensityProfile& profile, int n);

/// Squared Wasserstein-2 distance between the normalized intensity measure
/// and the empirical measure on `times`, via composite midpoint quadrature
/// over the quantile domain.
double wasserstein2_sq(const IntensityProfile& profile,
                       const std::vector<double>& times,
                       int quadrature_points = 4000);

/// Applies select_count + quantize_times per sensor.
Schedule schedule_from_rates(const RatePlan& plan);

}  // namespace cdkf
