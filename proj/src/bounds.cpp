#include "cdkf/bounds.hpp"

#include <cmath>

namespace cdkf {

MatrixXd sigma_bound_rhs(const MatrixXd& sigma_hat, const VectorXd& xi,
                         const VectorXd& rates,
                         const std::vector<Sensor>& sensors,
                         const ProcessModel& process, double t) {
  if (rates.size() != static_cast<Eigen::Index>(sensors.size())) {
    throw ParameterError("sigma_bound_rhs: one rate per sensor required");
  }
  if ((rates.array() < 0.0).any()) {
    throw ParameterError("sigma_bound_rhs: rates must be nonnegative");
  }
  const MatrixXd A = process.drift(xi, t);
  const MatrixXd s_mat = process.diffusion(xi, t);
  MatrixXd rhs = lyapunov_rhs(A, sigma_hat, s_mat * s_mat.transpose());
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const double rate = rates(static_cast<Eigen::Index>(s));
    if (rate == 0.0) continue;
    const MatrixXd C = sensors[s].output(xi, t);
    const MatrixXd R = sensors[s].noise_cov(xi, t);
    const MatrixXd KCS = kalman_gain(sigma_hat, C, R) * C * sigma_hat;
    rhs -= rate * 0.5 * (KCS + KCS.transpose());
  }
  return rhs;
}

VectorXd aux_bound_rhs(const VectorXd& xi_hat, const VectorXd& input,
                       const VectorXd& rates, const AuxModel& aux,
                       const std::vector<Sensor>& sensors, double t) {
  if (rates.size() != static_cast<Eigen::Index>(sensors.size())) {
    throw ParameterError("aux_bound_rhs: one rate per sensor required");
  }
  if ((rates.array() < 0.0).any()) {
    throw ParameterError("aux_bound_rhs: rates must be nonnegative");
  }
  VectorXd rhs(aux.n_xi);
  VectorXd dp = aux.f_p(xi_hat, input, t);
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    const double rate = rates(static_cast<Eigen::Index>(s));
    if (rate == 0.0) continue;
    dp += rate * sensors[s].jump(xi_hat, input, t);
  }
  rhs.head(aux.n_p) = dp;
  if (aux.n_u() > 0) {
    rhs.tail(aux.n_u()) =
        aux.f_u(AuxModel::unperturbed_part(xi_hat, aux.n_p), input, t);
  }
  return rhs;
}

void rk4_coupled_step(MatrixXd& sigma, VectorXd& xi,
                      const ProcessModel& process, const AuxModel& aux,
                      const std::vector<Sensor>& sensors,
                      const VectorXd& rates, const VectorXd& input, double t,
                      double h) {
  auto dsigma = [&](const MatrixXd& s, const VectorXd& x, double tau) {
    return sigma_bound_rhs(s, x, rates, sensors, process, tau);
  };
  auto dxi = [&](const MatrixXd&, const VectorXd& x, double tau) {
    return aux_bound_rhs(x, input, rates, aux, sensors, tau);
  };
  const MatrixXd k1s = dsigma(sigma, xi, t);
  const VectorXd k1x = dxi(sigma, xi, t);
  const MatrixXd k2s = dsigma(sigma + 0.5 * h * k1s, xi + 0.5 * h * k1x,
                              t + 0.5 * h);
  const VectorXd k2x = dxi(sigma + 0.5 * h * k1s, xi + 0.5 * h * k1x,
                           t + 0.5 * h);
  const MatrixXd k3s = dsigma(sigma + 0.5 * h * k2s, xi + 0.5 * h * k2x,
                              t + 0.5 * h);
  const VectorXd k3x = dxi(sigma + 0.5 * h * k2s, xi + 0.5 * h * k2x,
                           t + 0.5 * h);
  const MatrixXd k4s = dsigma(sigma + h * k3s, xi + h * k3x, t + h);
  const VectorXd k4x = dxi(sigma + h * k3s, xi + h * k3x, t + h);
  MatrixXd next = sigma + (h / 6.0) * (k1s + 2.0 * k2s + 2.0 * k3s + k4s);
  sigma = 0.5 * (next + next.transpose());
  xi += (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
}

BoundTrajectory propagate_bounds(const ProcessModel& process,
                                 const AuxModel& aux,
                                 const std::vector<Sensor>& sensors,
                                 const RatePlan& rate_plan,
                                 const InputPlan& input_plan,
                                 const TimeGrid& grid, const MatrixXd& sigma0,
                                 const VectorXd& xi0, int substeps) {
  if (substeps < 1) throw ParameterError("propagate_bounds: substeps >= 1");
  if (rate_plan.grid().num_nodes() != grid.num_nodes() ||
      input_plan.grid().num_nodes() != grid.num_nodes()) {
    throw ParameterError("propagate_bounds: plans must share the grid");
  }

  BoundTrajectory traj{grid, {}, {}, aux.convexity_tag == ConvexityTag::None};
  traj.sigma_hat.reserve(grid.num_nodes());
  traj.xi_hat.reserve(grid.num_nodes());

  MatrixXd sigma = floored_spd(sigma0);
  VectorXd xi = xi0;
  traj.sigma_hat.push_back(sigma);
  traj.xi_hat.push_back(xi);

  for (int k = 0; k < grid.num_intervals(); ++k) {
    const VectorXd rates = rate_plan.rates().col(k);
    const VectorXd input = input_plan.value_of_interval(k);
    const double h = grid.dt(k) / substeps;
    for (int i = 0; i < substeps; ++i) {
      rk4_coupled_step(sigma, xi, process, aux, sensors, rates, input,
                       grid.nodes()[k] + i * h, h);
      if (!sigma.allFinite() || !xi.allFinite()) {
        throw IntegrationDivergedError(grid.nodes()[k + 1]);
      }
      sigma = floored_spd(sigma);
    }
    traj.sigma_hat.push_back(sigma);
    traj.xi_hat.push_back(xi);
  }
  return traj;
}

}  // namespace cdkf
