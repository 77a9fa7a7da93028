#pragma once

#include <functional>
#include <vector>

#include "cdkf/model.hpp"

namespace cdkf {

/// Callback giving the auxiliary state at a time (drives A, sigma, C, R).
using AuxTrajectory = std::function<VectorXd(double)>;

enum class EventTag { Predicted, Updated };

struct FilterEntry {
  double t = 0.0;
  GaussianBelief belief;
  EventTag tag = EventTag::Predicted;
  int sensor_id = 0;  // valid when tag == Updated
};

/// Chronological record of a filtering sweep. Updated entries at time t are
/// always preceded by a predicted entry at the same t holding the pre-update
/// belief.
using FilterTrajectory = std::vector<FilterEntry>;

struct SmoothedEntry {
  double t = 0.0;
  GaussianBelief belief;
};
using SmoothedTrajectory = std::vector<SmoothedEntry>;

/// Lyapunov right-hand side A*S + S*A^T + D, symmetrized. Shared by the
/// prediction ODE and the rate-weighted covariance bound so that the
/// zero-rate limits agree exactly.
MatrixXd lyapunov_rhs(const MatrixXd& A, const MatrixXd& S, const MatrixXd& D);

/// Integrates the prediction ODEs d(mu)/dt = A mu, d(Sigma)/dt =
/// A Sigma + Sigma A^T + sigma sigma^T over [t_start, t_end] with fixed-step
/// RK4 (step is an upper bound on the actual step). The covariance is
/// symmetrized every step.
GaussianBelief predict(const GaussianBelief& belief, const ProcessModel& process,
                       const AuxTrajectory& aux_traj, double t_start,
                       double t_end, double step);

/// Kalman gain Sigma C^T (C Sigma C^T + R)^{-1} via an LDLT solve. Throws
/// IllConditionedInnovationError when the innovation covariance has condition
/// number beyond 1e12.
MatrixXd kalman_gain(const MatrixXd& cov, const MatrixXd& C, const MatrixXd& R);

/// Measurement update at time t with observation y.
GaussianBelief update(const GaussianBelief& belief, const Sensor& sensor,
                      const VectorXd& xi, double t, const VectorXd& y);

/// Full predict/update sweep over the horizon. Events from all sensors are
/// merged chronologically, ties broken by ascending sensor id; beliefs are
/// recorded at every grid node and every event time. step <= 0 selects
/// (smallest grid interval)/10.
FilterTrajectory filter_pass(const ProcessModel& process,
                             const std::vector<Sensor>& sensors,
                             const AuxTrajectory& aux_traj,
                             const Schedule& schedule,
                             const std::vector<std::vector<VectorXd>>& measurements,
                             const GaussianBelief& prior, const TimeGrid& grid,
                             double step = 0.0);

/// Backward Rauch-Tung-Striebel sweep over the filtered trajectory. Returns
/// one smoothed belief per distinct trajectory time (post-update beliefs are
/// used where events occurred). step <= 0 selects (smallest gap)/10.
SmoothedTrajectory rts_smooth(const FilterTrajectory& traj,
                              const ProcessModel& process,
                              const AuxTrajectory& aux_traj, double step = 0.0);

enum class KernelKind { Exponential, Matern32 };

/// State-space realization of a stationary 1-d Gaussian process kernel.
struct KernelSsm {
  ProcessModel process;
  MatrixXd stationary_cov;
  RowVectorXd output_row;
};

/// Builds the exact SSM realization of the exponential or Matern-3/2 kernel
/// with the given lengthscale and variance.
KernelSsm build_kernel_ssm(KernelKind kind, double lengthscale,
                           double variance);

}  // namespace cdkf
