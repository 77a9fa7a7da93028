#pragma once

#include <vector>

#include "cdkf/kalman.hpp"

namespace cdkf {

/// Stationary kernel value k(|t - t'|) for the kernels with exact SSM
/// realizations.
double kernel_value(KernelKind kind, double lengthscale, double variance,
                    double tau);

struct GpPosterior {
  VectorXd mean;
  VectorXd variance;
};

/// Dense Gram-matrix Gaussian-process regression: posterior mean and
/// variance at the query times given noisy observations y(t_i) with
/// per-observation noise variances. O(N^3); intended as the exact reference
/// for the state-space filtering/smoothing route.
GpPosterior gp_regress(KernelKind kind, double lengthscale, double variance,
                       const std::vector<double>& obs_times,
                       const VectorXd& y, const VectorXd& noise_vars,
                       const std::vector<double>& query_times);

}  // namespace cdkf
