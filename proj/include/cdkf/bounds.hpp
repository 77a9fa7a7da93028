#pragma once

#include <vector>

#include "cdkf/kalman.hpp"
#include "cdkf/model.hpp"

namespace cdkf {

/// Deterministic bound trajectory: per-node covariance bound and auxiliary
/// state (perturbed bound stacked with the exact unperturbed part).
struct BoundTrajectory {
  TimeGrid grid;
  std::vector<MatrixXd> sigma_hat;  // one n x n PSD matrix per node
  std::vector<VectorXd> xi_hat;     // one n_xi vector per node
  // Set when the auxiliary model carries convexity_tag == None; the bound is
  // then only a heuristic approximation.
  bool heuristic = false;
};

/// Right-hand side of the rate-weighted covariance bound ODE:
/// A S + S A^T + sigma sigma^T - sum_s rate_s K_s C_s S, symmetrized. With
/// all rates zero this returns exactly the prediction right-hand side.
MatrixXd sigma_bound_rhs(const MatrixXd& sigma_hat, const VectorXd& xi,
                         const VectorXd& rates,
                         const std::vector<Sensor>& sensors,
                         const ProcessModel& process, double t);

/// Right-hand side of the rate-weighted auxiliary bound ODE. Perturbed block
/// f_p + sum_s rate_s g_s, unperturbed block f_u.
VectorXd aux_bound_rhs(const VectorXd& xi_hat, const VectorXd& input,
                       const VectorXd& rates, const AuxModel& aux,
                       const std::vector<Sensor>& sensors, double t);

/// Integrates the coupled (sigma_hat, xi_hat) bound system over the plan grid
/// with fixed-step RK4 (`substeps` RK4 steps per grid interval). Plans are
/// piecewise constant per interval. Covariances are symmetrized and floored
/// every step.
BoundTrajectory propagate_bounds(const ProcessModel& process,
                                 const AuxModel& aux,
                                 const std::vector<Sensor>& sensors,
                                 const RatePlan& rate_plan,
                                 const InputPlan& input_plan,
                                 const TimeGrid& grid, const MatrixXd& sigma0,
                                 const VectorXd& xi0, int substeps = 1);

/// One RK4 step of the coupled (sigma, xi) system under constant rates and
/// input. Shared by the plan-level propagator and the event-driven
/// simulation so their no-event integration agrees exactly.
void rk4_coupled_step(MatrixXd& sigma, VectorXd& xi,
                      const ProcessModel& process, const AuxModel& aux,
                      const std::vector<Sensor>& sensors,
                      const VectorXd& rates, const VectorXd& input, double t,
                      double h);

}  // namespace cdkf
