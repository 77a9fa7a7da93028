#include "cdkf/quantize.hpp"

#include <algorithm>
#include <cmath>

namespace cdkf {

IntensityProfile::IntensityProfile(const RatePlan& plan, int sensor_index)
    : grid_(plan.grid()) {
  if (sensor_index < 0 || sensor_index >= plan.num_sensors()) {
    throw ParameterError("IntensityProfile: sensor index out of range");
  }
  const int n_int = grid_.num_intervals();
  rates_.resize(n_int);
  cumulative_.assign(n_int + 1, 0.0);
  for (int k = 0; k < n_int; ++k) {
    rates_[k] = plan.rates()(sensor_index, k);
    cumulative_[k + 1] = cumulative_[k] + rates_[k] * grid_.dt(k);
  }
}

double IntensityProfile::cumulative(double t) const {
  const int k = grid_.interval_of(t);
  return cumulative_[k] + rates_[k] * (t - grid_.nodes()[k]);
}

double IntensityProfile::invert(double target) const {
  if (target < 0.0 || target > total() * (1.0 + 1e-12)) {
    throw ParameterError("invert: target outside [0, Lambda(T)]");
  }
  target = std::min(target, total());
  // First interval whose right-node cumulative reaches the target; flat
  // stretches resolve to their left edge.
  for (int k = 0; k < grid_.num_intervals(); ++k) {
    if (cumulative_[k + 1] < target) continue;
    if (rates_[k] == 0.0) return grid_.nodes()[k];
    return grid_.nodes()[k] + (target - cumulative_[k]) / rates_[k];
  }
  return grid_.tf();
}

double IntensityProfile::mass(double a, double b) const {
  return cumulative(b) - cumulative(a);
}

double IntensityProfile::first_moment(double a, double b) const {
  double acc = 0.0;
  const auto& nodes = grid_.nodes();
  for (int k = 0; k < grid_.num_intervals(); ++k) {
    const double lo = std::max(a, nodes[k]);
    const double hi = std::min(b, nodes[k + 1]);
    if (hi <= lo) continue;
    acc += rates_[k] * 0.5 * (hi * hi - lo * lo);
  }
  return acc;
}

double IntensityProfile::second_moment(double a, double b) const {
  double acc = 0.0;
  const auto& nodes = grid_.nodes();
  for (int k = 0; k < grid_.num_intervals(); ++k) {
    const double lo = std::max(a, nodes[k]);
    const double hi = std::min(b, nodes[k + 1]);
    if (hi <= lo) continue;
    acc += rates_[k] * (hi * hi * hi - lo * lo * lo) / 3.0;
  }
  return acc;
}

double cumulative_intensity(const IntensityProfile& profile, double t) {
  if (!profile.grid().contains(t)) {
    throw ScheduleOutOfRangeError("cumulative_intensity: t outside horizon");
  }
  return profile.cumulative(t);
}

int select_count(double lambda_total) {
  if (lambda_total < 0.0) {
    throw ParameterError("select_count: total intensity must be >= 0");
  }
  return static_cast<int>(std::floor(lambda_total + 0.5));
}

std::vector<double> quantize_times(const IntensityProfile& profile, int n) {
  if (n < 0) throw ParameterError("quantize_times: n must be >= 0");
  if (n == 0) return {};
  const double total = profile.total();
  if (total <= 0.0) {
    throw DegenerateIntensityError(
        "quantize_times: zero total intensity with n >= 1");
  }
  std::vector<double> boundaries(n + 1);
  boundaries[0] = profile.grid().t0();
  boundaries[n] = profile.grid().tf();
  for (int i = 1; i < n; ++i) {
    boundaries[i] = profile.invert(total * static_cast<double>(i) / n);
  }
  std::vector<double> centroids(n);
  for (int i = 0; i < n; ++i) {
    const double a = boundaries[i];
    const double b = boundaries[i + 1];
    const double m = profile.mass(a, b);
    centroids[i] = (m > 0.0) ? profile.first_moment(a, b) / m : 0.5 * (a + b);
  }
  return centroids;
}

double wasserstein2_sq(const IntensityProfile& profile,
                       const std::vector<double>& times,
                       int quadrature_points) {
  const double total = profile.total();
  if (times.empty()) {
    if (total > 0.0) {
      throw DegenerateIntensityError(
          "wasserstein2_sq: empty atom set for a nonzero intensity");
    }
    return 0.0;
  }
  if (!std::is_sorted(times.begin(), times.end())) {
    throw ParameterError("wasserstein2_sq: times must be sorted");
  }
  for (double t : times) {
    if (!profile.grid().contains(t)) {
      throw ScheduleOutOfRangeError("wasserstein2_sq: atom outside horizon");
    }
  }
  const int n = static_cast<int>(times.size());
  const int m = std::max(quadrature_points, 1000);
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    const double p = (j + 0.5) / m;
    const double f_inv = profile.invert(p * total);
    const double g_inv = times[std::min(n - 1, static_cast<int>(p * n))];
    const double d = f_inv - g_inv;
    acc += d * d;
  }
  return acc / m;
}

Schedule schedule_from_rates(const RatePlan& plan) {
  Schedule schedule;
  schedule.times.resize(plan.num_sensors());
  for (int s = 0; s < plan.num_sensors(); ++s) {
    IntensityProfile profile(plan, s);
    const int n = select_count(profile.total());
    if (n >= 1) schedule.times[s] = quantize_times(profile, n);
  }
  return schedule;
}

}  // namespace cdkf
