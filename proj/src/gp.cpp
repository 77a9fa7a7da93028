#include "cdkf/gp.hpp"

#include <cmath>

namespace cdkf {

double kernel_value(KernelKind kind, double lengthscale, double variance,
                    double tau) {
  const double d = std::abs(tau);
  switch (kind) {
    case KernelKind::Exponential:
      return variance * std::exp(-d / lengthscale);
    case KernelKind::Matern32: {
      const double lam = std::sqrt(3.0) / lengthscale;
      return variance * (1.0 + lam * d) * std::exp(-lam * d);
    }
  }
  return 0.0;
}

GpPosterior gp_regress(KernelKind kind, double lengthscale, double variance,
                       const std::vector<double>& obs_times, const VectorXd& y,
                       const VectorXd& noise_vars,
                       const std::vector<double>& query_times) {
  const int n = static_cast<int>(obs_times.size());
  if (y.size() != n || noise_vars.size() != n) {
    throw ParameterError("gp_regress: observation sizes must match");
  }
  MatrixXd gram(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      gram(i, j) = kernel_value(kind, lengthscale, variance,
                                obs_times[i] - obs_times[j]);
    }
  }
  gram += noise_vars.asDiagonal();
  Eigen::LLT<MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success) {
    throw ParameterError("gp_regress: Gram matrix not positive definite");
  }
  const VectorXd alpha = llt.solve(y);

  const int m = static_cast<int>(query_times.size());
  GpPosterior post;
  post.mean.resize(m);
  post.variance.resize(m);
  for (int qi = 0; qi < m; ++qi) {
    VectorXd k_star(n);
    for (int i = 0; i < n; ++i) {
      k_star(i) = kernel_value(kind, lengthscale, variance,
                               query_times[qi] - obs_times[i]);
    }
    post.mean(qi) = k_star.dot(alpha);
    post.variance(qi) =
        kernel_value(kind, lengthscale, variance, 0.0) -
        k_star.dot(llt.solve(k_star));
  }
  return post;
}

}  // namespace cdkf
