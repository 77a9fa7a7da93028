#include <doctest.h>

#include <cmath>

#include "cdkf/bounds.hpp"
#include "test_util.hpp"

using namespace cdkf;
using namespace cdkf::testing;

TEST_CASE("covariance bound rhs: scalar closed forms") {
  const std::vector<Sensor> sensors{scalar_sensor(1, 1.0)};
  const VectorXd rates = VectorXd::Ones(1);
  const MatrixXd sigma = MatrixXd::Ones(1, 1);

  const auto quiet = scalar_process(0.0, 0.0);
  CHECK(sigma_bound_rhs(sigma, VectorXd(), rates, sensors, quiet, 0.0)(0, 0) ==
        doctest::Approx(-0.5));

  // sigma^2 = 0.5 balances the measurement drain: a stationary point.
  const auto balanced = scalar_process(0.0, std::sqrt(0.5));
  CHECK(std::abs(sigma_bound_rhs(sigma, VectorXd(), rates, sensors, balanced,
                                 0.0)(0, 0)) < 1e-15);
}

TEST_CASE("zero rates reduce the bound rhs to the prediction rhs exactly") {
  RngStream rng(23);
  const int n = 3;
  ProcessModel process;
  process.n = n;
  process.m = 2;
  const MatrixXd a = random_matrix(rng, n, n);
  const MatrixXd s = random_matrix(rng, n, 2);
  process.drift = [a](const VectorXd&, double) { return a; };
  process.diffusion = [s](const VectorXd&, double) { return s; };
  const MatrixXd sigma = random_spd(rng, n);

  Sensor sensor;
  sensor.id = 1;
  sensor.q = 1;
  const MatrixXd c = random_matrix(rng, 1, n);
  sensor.output = [c](const VectorXd&, double) { return c; };
  sensor.noise_cov = [](const VectorXd&, double) {
    return MatrixXd::Ones(1, 1);
  };
  sensor.jump = [](const VectorXd&, const VectorXd&, double) {
    return VectorXd();
  };

  const MatrixXd rhs = sigma_bound_rhs(sigma, VectorXd(), VectorXd::Zero(1),
                                       {sensor}, process, 0.0);
  const MatrixXd ref = lyapunov_rhs(a, sigma, s * s.transpose());
  CHECK((rhs - ref).cwiseAbs().maxCoeff() == 0.0);
}

namespace {

AuxModel decay_aux(double decay) {
  AuxModel aux;
  aux.n_xi = 1;
  aux.n_p = 1;
  aux.convexity_tag = ConvexityTag::Affine;
  aux.f_p = [decay](const VectorXd& xi, const VectorXd&, double) {
    return VectorXd::Constant(1, -decay * xi(0));
  };
  aux.f_u = [](const VectorXd&, const VectorXd&, double) {
    return VectorXd();
  };
  return aux;
}

}  // namespace

TEST_CASE("auxiliary bound rhs: rate-weighted jumps") {
  const AuxModel aux = decay_aux(1.0);
  const std::vector<Sensor> sensors{scalar_sensor(1, 1.0, 1, -0.5)};
  const VectorXd xi = VectorXd::Ones(1);

  const VectorXd rhs = aux_bound_rhs(xi, VectorXd(), VectorXd::Constant(1, 2.0),
                                     aux, sensors, 0.0);
  CHECK(rhs(0) == doctest::Approx(-2.0));  // -1 + 2 * (-0.5)

  const VectorXd no_jumps =
      aux_bound_rhs(xi, VectorXd(), VectorXd::Zero(1), aux, sensors, 0.0);
  CHECK(no_jumps(0) == doctest::Approx(-1.0));
}

TEST_CASE("bound propagation with zero rates reduces to prediction") {
  const auto process = scalar_process(0.0, 1.0);
  const AuxModel aux = empty_aux();
  const std::vector<Sensor> sensors{scalar_sensor(1, 1.0)};
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 11);
  const RatePlan rates(grid, MatrixXd::Zero(1, 10));
  const InputPlan inputs = InputPlan::zero(grid, 0);

  const BoundTrajectory traj = propagate_bounds(
      process, aux, sensors, rates, inputs, grid, MatrixXd::Zero(1, 1),
      VectorXd(), 4);
  CHECK(std::abs(traj.sigma_hat.back()(0, 0) - 1.0) < 1e-8);
}

TEST_CASE("bound propagation matches a 100x finer reference") {
  const auto process = scalar_process(0.0, 0.0);
  const AuxModel aux = empty_aux();
  const std::vector<Sensor> sensors{scalar_sensor(1, 1.0)};
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 11);
  const RatePlan rates(grid, MatrixXd::Ones(1, 10));
  const InputPlan inputs = InputPlan::zero(grid, 0);
  const MatrixXd sigma0 = MatrixXd::Ones(1, 1);

  const BoundTrajectory coarse = propagate_bounds(
      process, aux, sensors, rates, inputs, grid, sigma0, VectorXd(), 1);
  const BoundTrajectory fine = propagate_bounds(
      process, aux, sensors, rates, inputs, grid, sigma0, VectorXd(), 100);
  CHECK(std::abs(coarse.sigma_hat.back()(0, 0) - fine.sigma_hat.back()(0, 0)) <
        1e-6);
}

TEST_CASE("affine auxiliary bound matches a 100x finer reference") {
  const auto process = scalar_process(0.0, 0.5);
  const AuxModel aux = decay_aux(0.8);
  const std::vector<Sensor> sensors{scalar_sensor(1, 1.0, 1, -0.25)};
  const TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 21);
  MatrixXd rate_values(1, 20);
  for (int k = 0; k < 20; ++k) rate_values(0, k) = (k < 10) ? 2.0 : 0.5;
  const RatePlan rates(grid, rate_values);
  const InputPlan inputs = InputPlan::zero(grid, 0);
  const VectorXd xi0 = VectorXd::Ones(1);
  const MatrixXd sigma0 = MatrixXd::Ones(1, 1);

  const BoundTrajectory coarse = propagate_bounds(
      process, aux, sensors, rates, inputs, grid, sigma0, xi0, 1);
  const BoundTrajectory fine = propagate_bounds(
      process, aux, sensors, rates, inputs, grid, sigma0, xi0, 100);
  CHECK(std::abs(coarse.xi_hat.back()(0) - fine.xi_hat.back()(0)) < 1e-6);
}

TEST_CASE("bound flow preserves the covariance order") {
  RngStream rng(29);
  for (int trial = 0; trial < 10; ++trial) {
    const int n = (trial % 2 == 0) ? 1 : 2;
    ProcessModel process;
    process.n = n;
    process.m = n;
    const MatrixXd a = random_matrix(rng, n, n, 0.5);
    const MatrixXd s = random_matrix(rng, n, n, 0.5);
    process.drift = [a](const VectorXd&, double) { return a; };
    process.diffusion = [s](const VectorXd&, double) { return s; };

    Sensor sensor;
    sensor.id = 1;
    sensor.q = 1;
    const MatrixXd c = random_matrix(rng, 1, n);
    sensor.output = [c](const VectorXd&, double) { return c; };
    sensor.noise_cov = [](const VectorXd&, double) {
      return MatrixXd::Ones(1, 1);
    };
    sensor.jump = [](const VectorXd&, const VectorXd&, double) {
      return VectorXd();
    };

    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 21);
    MatrixXd rate_values(1, 20);
    for (int k = 0; k < 20; ++k) rate_values(0, k) = 3.0 * rng.uniform();
    const RatePlan rates(grid, rate_values);
    const InputPlan inputs = InputPlan::zero(grid, 0);
    const AuxModel aux = empty_aux();

    const MatrixXd small = random_spd(rng, n);
    const MatrixXd bump = random_spd(rng, n, 0.0);
    const BoundTrajectory lo = propagate_bounds(process, aux, {sensor}, rates,
                                                inputs, grid, small, VectorXd(),
                                                4);
    const BoundTrajectory hi = propagate_bounds(process, aux, {sensor}, rates,
                                                inputs, grid, small + bump,
                                                VectorXd(), 4);
    for (int k = 0; k < grid.num_nodes(); ++k) {
      CHECK(min_eigenvalue(hi.sigma_hat[k] - lo.sigma_hat[k]) >= -1e-7);
    }
  }
}

TEST_CASE("raising any rate never increases the terminal trace") {
  RngStream rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto process =
        scalar_process(rng.normal() * 0.3, 0.3 + rng.uniform());
    const std::vector<Sensor> sensors{scalar_sensor(1, 0.5 + rng.uniform())};
    const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 11);
    MatrixXd base(1, 10);
    for (int k = 0; k < 10; ++k) base(0, k) = 2.0 * rng.uniform();
    MatrixXd raised = base;
    raised(0, static_cast<int>(rng.uniform() * 10)) += 1.0 + rng.uniform();

    const MatrixXd sigma0 = MatrixXd::Constant(1, 1, 0.5 + rng.uniform());
    const AuxModel aux = empty_aux();
    const InputPlan inputs = InputPlan::zero(grid, 0);
    const auto lo = propagate_bounds(process, aux, sensors,
                                     RatePlan(grid, raised), inputs, grid,
                                     sigma0, VectorXd(), 4);
    const auto hi = propagate_bounds(process, aux, sensors,
                                     RatePlan(grid, base), inputs, grid,
                                     sigma0, VectorXd(), 4);
    CHECK(lo.sigma_hat.back().trace() <= hi.sigma_hat.back().trace() + 1e-8);
  }
}

TEST_CASE("heuristic flag propagates from the convexity tag") {
  const auto process = scalar_process(0.0, 1.0);
  AuxModel aux = empty_aux();
  aux.convexity_tag = ConvexityTag::None;
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 3);
  const auto traj = propagate_bounds(process, aux, {scalar_sensor(1, 1.0)},
                                     RatePlan(grid, MatrixXd::Zero(1, 2)),
                                     InputPlan::zero(grid, 0), grid,
                                     MatrixXd::Ones(1, 1), VectorXd(), 1);
  CHECK(traj.heuristic);
}
