#pragma once

#include <Eigen/Dense>

#include "cdkf/kalman.hpp"
#include "cdkf/model.hpp"
#include "cdkf/rng.hpp"

namespace cdkf::testing {

inline Eigen::VectorXd random_vector(RngStream& rng, int n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v(i) = scale * rng.normal();
  return v;
}

inline Eigen::MatrixXd random_matrix(RngStream& rng, int rows, int cols,
                                     double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  }
  return m;
}

inline Eigen::MatrixXd random_spd(RngStream& rng, int n, double jitter = 0.1) {
  const Eigen::MatrixXd a = random_matrix(rng, n, n);
  return a * a.transpose() + jitter * Eigen::MatrixXd::Identity(n, n);
}

inline double min_eigenvalue(const Eigen::MatrixXd& m) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(sym)
      .eigenvalues()
      .minCoeff();
}

/// Constant-in-time scalar process model.
inline ProcessModel scalar_process(double a, double noise) {
  ProcessModel p;
  p.n = 1;
  p.m = 1;
  Eigen::MatrixXd A(1, 1), S(1, 1);
  A << a;
  S << noise;
  p.drift = [A](const Eigen::VectorXd&, double) { return A; };
  p.diffusion = [S](const Eigen::VectorXd&, double) { return S; };
  return p;
}

/// Scalar identity sensor with constant noise variance.
inline Sensor scalar_sensor(int id, double noise_var, int n_p = 0,
                            double jump = 0.0) {
  Sensor s;
  s.id = id;
  s.q = 1;
  s.output = [](const Eigen::VectorXd&, double) {
    return Eigen::MatrixXd::Ones(1, 1);
  };
  s.noise_cov = [noise_var](const Eigen::VectorXd&, double) {
    return Eigen::MatrixXd::Constant(1, 1, noise_var);
  };
  s.jump = [n_p, jump](const Eigen::VectorXd&, const Eigen::VectorXd&,
                       double) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n_p);
    if (n_p > 0) g(0) = jump;
    return g;
  };
  return s;
}

/// Auxiliary model with no state at all.
inline AuxModel empty_aux() {
  AuxModel aux;
  aux.n_xi = 0;
  aux.n_p = 0;
  aux.f_p = [](const Eigen::VectorXd&, const Eigen::VectorXd&, double) {
    return Eigen::VectorXd();
  };
  aux.f_u = [](const Eigen::VectorXd&, const Eigen::VectorXd&, double) {
    return Eigen::VectorXd();
  };
  return aux;
}

inline AuxTrajectory zero_aux_trajectory(int n_xi = 0) {
  return [n_xi](double) { return Eigen::VectorXd::Zero(n_xi); };
}

}  // namespace cdkf::testing
