#include "cdkf/kalman.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace cdkf {

MatrixXd lyapunov_rhs(const MatrixXd& A, const MatrixXd& S, const MatrixXd& D) {
  MatrixXd rhs = A * S + S * A.transpose() + D;
  return 0.5 * (rhs + rhs.transpose());
}

namespace {

double default_step(const TimeGrid& grid) {
  double h = std::numeric_limits<double>::infinity();
  for (int k = 0; k < grid.num_intervals(); ++k) h = std::min(h, grid.dt(k));
  return h / 10.0;
}

struct MeanCov {
  VectorXd mu;
  MatrixXd sigma;
};

MeanCov rk4_predict_step(const MeanCov& s, const ProcessModel& process,
                         const AuxTrajectory& aux_traj, double t, double h) {
  auto deriv = [&](const MeanCov& y, double tau) -> MeanCov {
    const VectorXd xi = aux_traj(tau);
    const MatrixXd A = process.drift(xi, tau);
    const MatrixXd s_mat = process.diffusion(xi, tau);
    return {A * y.mu, lyapunov_rhs(A, y.sigma, s_mat * s_mat.transpose())};
  };
  const MeanCov k1 = deriv(s, t);
  const MeanCov k2 = deriv({s.mu + 0.5 * h * k1.mu,
                            s.sigma + 0.5 * h * k1.sigma}, t + 0.5 * h);
  const MeanCov k3 = deriv({s.mu + 0.5 * h * k2.mu,
                            s.sigma + 0.5 * h * k2.sigma}, t + 0.5 * h);
  const MeanCov k4 = deriv({s.mu + h * k3.mu, s.sigma + h * k3.sigma}, t + h);
  MeanCov out;
  out.mu = s.mu + (h / 6.0) * (k1.mu + 2.0 * k2.mu + 2.0 * k3.mu + k4.mu);
  MatrixXd sig = s.sigma + (h / 6.0) * (k1.sigma + 2.0 * k2.sigma +
                                        2.0 * k3.sigma + k4.sigma);
  out.sigma = 0.5 * (sig + sig.transpose());
  return out;
}

MeanCov integrate_predict(MeanCov state, const ProcessModel& process,
                          const AuxTrajectory& aux_traj, double t_start,
                          double t_end, double step) {
  const double span = t_end - t_start;
  if (span <= 0.0) return state;
  const int n_steps = std::max(1, static_cast<int>(std::ceil(span / step)));
  const double h = span / n_steps;
  double t = t_start;
  for (int i = 0; i < n_steps; ++i) {
    state = rk4_predict_step(state, process, aux_traj, t, h);
    t = t_start + (i + 1) * h;
    if (!state.mu.allFinite() || !state.sigma.allFinite()) {
      throw IntegrationDivergedError(t);
    }
  }
  return state;
}

}  // namespace

GaussianBelief predict(const GaussianBelief& belief, const ProcessModel& process,
                       const AuxTrajectory& aux_traj, double t_start,
                       double t_end, double step) {
  if (t_end < t_start) throw ParameterError("predict: t_end < t_start");
  if (step <= 0.0) throw ParameterError("predict: step must be positive");
  MeanCov state{belief.mean(), belief.cov()};
  state = integrate_predict(std::move(state), process, aux_traj, t_start,
                            t_end, step);
  return GaussianBelief(std::move(state.mu), std::move(state.sigma));
}

MatrixXd kalman_gain(const MatrixXd& cov, const MatrixXd& C,
                     const MatrixXd& R) {
  MatrixXd innovation = C * cov * C.transpose() + R;
  innovation = 0.5 * (innovation + innovation.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(innovation);
  const double max_eig = es.eigenvalues().cwiseAbs().maxCoeff();
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig <= 0.0 || max_eig / min_eig > 1e12) {
    throw IllConditionedInnovationError(
        "innovation covariance is numerically singular (min eigenvalue " +
        std::to_string(min_eig) + ")");
  }
  // K = cov C^T S^{-1}; solve on the transposed system to avoid the inverse.
  return innovation.ldlt().solve(C * cov).transpose();
}

GaussianBelief update(const GaussianBelief& belief, const Sensor& sensor,
                      const VectorXd& xi, double t, const VectorXd& y) {
  const MatrixXd C = sensor.output(xi, t);
  const MatrixXd R = sensor.noise_cov(xi, t);
  const MatrixXd K = kalman_gain(belief.cov(), C, R);
  VectorXd mean = belief.mean() + K * (y - C * belief.mean());
  const int n = belief.dim();
  MatrixXd cov = (MatrixXd::Identity(n, n) - K * C) * belief.cov();
  return GaussianBelief(std::move(mean), std::move(cov));
}

FilterTrajectory filter_pass(
    const ProcessModel& process, const std::vector<Sensor>& sensors,
    const AuxTrajectory& aux_traj, const Schedule& schedule,
    const std::vector<std::vector<VectorXd>>& measurements,
    const GaussianBelief& prior, const TimeGrid& grid, double step) {
  schedule.validate(grid);
  if (schedule.times.size() != sensors.size() ||
      measurements.size() != sensors.size()) {
    throw ParameterError("filter_pass: schedule/measurements must have one "
                         "list per sensor");
  }
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    if (measurements[s].size() != schedule.times[s].size()) {
      throw ParameterError("filter_pass: measurements must align one-to-one "
                           "with schedule events");
    }
  }
  if (step <= 0.0) step = default_step(grid);

  // (sensor index, event index) lists per stop time, ties by sensor id.
  std::map<double, std::vector<std::pair<int, int>>> stops;
  for (double t : grid.nodes()) stops[t];
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    for (std::size_t i = 0; i < schedule.times[s].size(); ++i) {
      stops[schedule.times[s][i]].push_back(
          {static_cast<int>(s), static_cast<int>(i)});
    }
  }
  for (auto& [t, events] : stops) {
    std::sort(events.begin(), events.end(),
              [&](const auto& a, const auto& b) {
                return sensors[a.first].id < sensors[b.first].id;
              });
  }

  FilterTrajectory traj;
  GaussianBelief belief = prior;
  double t_cur = grid.t0();
  for (const auto& [t, events] : stops) {
    if (t > t_cur) {
      belief = predict(belief, process, aux_traj, t_cur, t, step);
      t_cur = t;
    }
    traj.push_back({t, belief, EventTag::Predicted, 0});
    for (const auto& [s, i] : events) {
      belief = update(belief, sensors[s], aux_traj(t), t, measurements[s][i]);
      traj.push_back({t, belief, EventTag::Updated, sensors[s].id});
    }
  }
  return traj;
}

SmoothedTrajectory rts_smooth(const FilterTrajectory& traj,
                              const ProcessModel& process,
                              const AuxTrajectory& aux_traj, double step) {
  if (traj.empty()) return {};
  // Last belief per distinct time = the post-update filtering density.
  std::vector<double> times;
  std::vector<GaussianBelief> filtered;
  for (const auto& entry : traj) {
    if (!times.empty() && entry.t == times.back()) {
      filtered.back() = entry.belief;
    } else {
      times.push_back(entry.t);
      filtered.push_back(entry.belief);
    }
  }
  const int n_pts = static_cast<int>(times.size());
  const int n = process.n;
  if (step <= 0.0) {
    double gap = std::numeric_limits<double>::infinity();
    for (int k = 0; k + 1 < n_pts; ++k) {
      gap = std::min(gap, times[k + 1] - times[k]);
    }
    step = std::isfinite(gap) ? gap / 10.0 : 1.0;
  }

  SmoothedTrajectory out(n_pts);
  out[n_pts - 1] = {times[n_pts - 1], filtered[n_pts - 1]};
  for (int k = n_pts - 2; k >= 0; --k) {
    const double ta = times[k];
    const double tb = times[k + 1];
    // Transition Phi and accumulated process noise Q over [ta, tb].
    MatrixXd phi = MatrixXd::Identity(n, n);
    MatrixXd q = MatrixXd::Zero(n, n);
    const int n_steps =
        std::max(1, static_cast<int>(std::ceil((tb - ta) / step)));
    const double h = (tb - ta) / n_steps;
    auto deriv = [&](const MatrixXd& p, const MatrixXd& qq, double tau,
                     MatrixXd& dp, MatrixXd& dq) {
      const VectorXd xi = aux_traj(tau);
      const MatrixXd A = process.drift(xi, tau);
      const MatrixXd s_mat = process.diffusion(xi, tau);
      dp = A * p;
      dq = lyapunov_rhs(A, qq, s_mat * s_mat.transpose());
    };
    for (int i = 0; i < n_steps; ++i) {
      const double t = ta + i * h;
      MatrixXd k1p, k1q, k2p, k2q, k3p, k3q, k4p, k4q;
      deriv(phi, q, t, k1p, k1q);
      deriv(phi + 0.5 * h * k1p, q + 0.5 * h * k1q, t + 0.5 * h, k2p, k2q);
      deriv(phi + 0.5 * h * k2p, q + 0.5 * h * k2q, t + 0.5 * h, k3p, k3q);
      deriv(phi + h * k3p, q + h * k3q, t + h, k4p, k4q);
      phi += (h / 6.0) * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      q += (h / 6.0) * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
    }
    q = 0.5 * (q + q.transpose());

    const MatrixXd& p_f = filtered[k].cov();
    MatrixXd p_pred = phi * p_f * phi.transpose() + q;
    p_pred = 0.5 * (p_pred + p_pred.transpose());
    const VectorXd m_pred = phi * filtered[k].mean();
    // Smoother gain G = P_f Phi^T P_pred^{-1}.
    const MatrixXd gain = p_pred.ldlt().solve(phi * p_f).transpose();
    VectorXd mean =
        filtered[k].mean() + gain * (out[k + 1].belief.mean() - m_pred);
    MatrixXd cov =
        p_f + gain * (out[k + 1].belief.cov() - p_pred) * gain.transpose();
    out[k] = {ta, GaussianBelief(std::move(mean), std::move(cov))};
  }
  return out;
}

KernelSsm build_kernel_ssm(KernelKind kind, double lengthscale,
                           double variance) {
  if (lengthscale <= 0.0 || variance <= 0.0) {
    throw ParameterError("kernel hyperparameters must be positive");
  }
  KernelSsm ssm;
  switch (kind) {
    case KernelKind::Exponential: {
      const double a = -1.0 / lengthscale;
      const double q = 2.0 * variance / lengthscale;
      MatrixXd A(1, 1), S(1, 1), P(1, 1);
      A << a;
      S << std::sqrt(q);
      P << variance;
      ssm.process.n = 1;
      ssm.process.m = 1;
      ssm.process.drift = [A](const VectorXd&, double) { return A; };
      ssm.process.diffusion = [S](const VectorXd&, double) { return S; };
      ssm.stationary_cov = P;
      ssm.output_row = RowVectorXd::Ones(1);
      break;
    }
    case KernelKind::Matern32: {
      const double lam = std::sqrt(3.0) / lengthscale;
      const double q = 4.0 * variance * lam * lam * lam;
      MatrixXd A(2, 2), S(2, 1), P(2, 2);
      A << 0.0, 1.0, -lam * lam, -2.0 * lam;
      S << 0.0, std::sqrt(q);
      P << variance, 0.0, 0.0, variance * lam * lam;
      ssm.process.n = 2;
      ssm.process.m = 1;
      ssm.process.drift = [A](const VectorXd&, double) { return A; };
      ssm.process.diffusion = [S](const VectorXd&, double) { return S; };
      ssm.stationary_cov = P;
      ssm.output_row = RowVectorXd::Zero(2);
      ssm.output_row(0) = 1.0;
      break;
    }
  }
  return ssm;
}

}  // namespace cdkf
