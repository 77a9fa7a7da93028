#include <doctest.h>

#include <cmath>

#include "cdkf/gp.hpp"
#include "cdkf/kalman.hpp"
#include "test_util.hpp"

using namespace cdkf;
using namespace cdkf::testing;

namespace {
const AuxTrajectory kNoAux = zero_aux_trajectory();
}

TEST_CASE("predict: pure diffusion accumulates the noise integral") {
  const auto process = scalar_process(0.0, 1.0);
  const GaussianBelief prior(VectorXd::Constant(1, 3.0), MatrixXd::Zero(1, 1));
  const GaussianBelief out = predict(prior, process, kNoAux, 0.0, 1.0, 0.01);
  CHECK(out.mean()(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(out.cov()(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("predict: stable scalar flow contracts the variance to e^-2") {
  const auto process = scalar_process(-1.0, 0.0);
  const GaussianBelief prior(VectorXd::Zero(1), MatrixXd::Ones(1, 1));
  const GaussianBelief out = predict(prior, process, kNoAux, 0.0, 1.0, 0.01);
  CHECK(std::abs(out.cov()(0, 0) - std::exp(-2.0)) < 1e-6);
}

TEST_CASE("predict: coarse step agrees with a 100x finer reference") {
  const KernelSsm ssm = build_kernel_ssm(KernelKind::Matern32, 1.0, 1.0);
  const GaussianBelief prior(VectorXd::Zero(2), MatrixXd::Zero(2, 2));
  const GaussianBelief coarse =
      predict(prior, ssm.process, kNoAux, 0.0, 1.0, 0.01);
  const GaussianBelief fine =
      predict(prior, ssm.process, kNoAux, 0.0, 1.0, 0.0001);
  CHECK((coarse.cov() - fine.cov()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("predict: divergence raises an error naming the time") {
  auto process = scalar_process(1e12, 0.0);
  const GaussianBelief prior(VectorXd::Ones(1), MatrixXd::Ones(1, 1));
  CHECK_THROWS_AS(predict(prior, process, kNoAux, 0.0, 1.0, 0.1),
                  IntegrationDivergedError);
}

TEST_CASE("kalman gain: scalar and block examples") {
  CHECK(kalman_gain(MatrixXd::Ones(1, 1), MatrixXd::Ones(1, 1),
                    MatrixXd::Ones(1, 1))(0, 0) == doctest::Approx(0.5));

  MatrixXd sigma = 2.0 * MatrixXd::Identity(2, 2);
  MatrixXd c(1, 2);
  c << 1.0, 0.0;
  const MatrixXd k = kalman_gain(sigma, c, MatrixXd::Ones(1, 1));
  CHECK(k(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(k(1, 0) == doctest::Approx(0.0));
}

TEST_CASE("kalman gain satisfies K (Sigma + I) = Sigma for C = R = I") {
  RngStream rng(7);
  const MatrixXd sigma = random_spd(rng, 3);
  const MatrixXd k =
      kalman_gain(sigma, MatrixXd::Identity(3, 3), MatrixXd::Identity(3, 3));
  CHECK((k * (sigma + MatrixXd::Identity(3, 3)) - sigma).cwiseAbs().maxCoeff() <
        1e-10);
}

TEST_CASE("kalman gain rejects a numerically singular innovation") {
  MatrixXd c(2, 1);
  c << 1.0, 1.0;
  const MatrixXd sigma = MatrixXd::Ones(1, 1);
  const MatrixXd r = 1e-13 * MatrixXd::Identity(2, 2);
  CHECK_THROWS_AS(kalman_gain(sigma, c, r), IllConditionedInnovationError);
}

TEST_CASE("update: scalar example and limits") {
  const Sensor sensor = scalar_sensor(1, 1.0);
  const GaussianBelief prior(VectorXd::Zero(1), MatrixXd::Ones(1, 1));
  const GaussianBelief post =
      update(prior, sensor, VectorXd(), 0.0, VectorXd::Ones(1));
  CHECK(post.mean()(0) == doctest::Approx(0.5));
  CHECK(post.cov()(0, 0) == doctest::Approx(0.5));

  // Infinite noise: the measurement is ignored.
  const Sensor deaf = scalar_sensor(1, 1e12);
  const GaussianBelief post2 =
      update(prior, deaf, VectorXd(), 0.0, VectorXd::Ones(1));
  CHECK(std::abs(post2.mean()(0)) < 1e-6);
  CHECK(std::abs(post2.cov()(0, 0) - 1.0) < 1e-6);
}

TEST_CASE("update: zero output row leaves the belief unchanged bit-for-bit") {
  Sensor sensor = scalar_sensor(1, 1.0);
  sensor.output = [](const VectorXd&, double) {
    return MatrixXd::Zero(1, 1);
  };
  RngStream rng(3);
  const MatrixXd cov = random_spd(rng, 1);
  const GaussianBelief prior(random_vector(rng, 1), cov);
  const GaussianBelief post =
      update(prior, sensor, VectorXd(), 0.0, VectorXd::Ones(1));
  CHECK((post.mean() - prior.mean()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((post.cov() - prior.cov()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("update contraction: the posterior never exceeds the prior") {
  RngStream rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 4);
    const int q = 1 + static_cast<int>(rng.uniform() * 3);
    const MatrixXd sigma = random_spd(rng, n);
    const MatrixXd c = random_matrix(rng, q, n);
    const MatrixXd r = random_spd(rng, q, 0.2);
    const MatrixXd k = kalman_gain(sigma, c, r);
    const MatrixXd post = (MatrixXd::Identity(n, n) - k * c) * sigma;
    CHECK(min_eigenvalue(sigma - post) >= -1e-9);
  }
}

TEST_CASE("information-gain map is convex in the covariance") {
  RngStream rng(13);
  auto gain_map = [](const MatrixXd& sigma, const MatrixXd& c,
                     const MatrixXd& r) -> MatrixXd {
    const MatrixXd innov = c * sigma * c.transpose() + r;
    return sigma * c.transpose() * innov.ldlt().solve(c * sigma);
  };
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform() * 4);
    const int q = 1 + static_cast<int>(rng.uniform() * 3);
    const MatrixXd s1 = random_spd(rng, n);
    const MatrixXd s2 = random_spd(rng, n);
    const MatrixXd c = random_matrix(rng, q, n);
    const MatrixXd r = random_spd(rng, q, 0.2);
    const double alpha = rng.uniform();
    const MatrixXd lhs =
        alpha * gain_map(s1, c, r) + (1.0 - alpha) * gain_map(s2, c, r);
    const MatrixXd rhs = gain_map(alpha * s1 + (1.0 - alpha) * s2, c, r);
    CHECK(min_eigenvalue(lhs - rhs) >= -1e-8);
  }
}

TEST_CASE("filter pass with no events matches plain prediction") {
  const auto process = scalar_process(-0.5, 0.7);
  const GaussianBelief prior(VectorXd::Ones(1), MatrixXd::Ones(1, 1));
  const TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 5);
  const Schedule empty{{{}}};
  const auto traj = filter_pass(process, {scalar_sensor(1, 1.0)}, kNoAux,
                                empty, {{}}, prior, grid, 0.01);
  REQUIRE(traj.size() == 5);
  GaussianBelief ref = prior;
  for (std::size_t k = 0; k < traj.size(); ++k) {
    if (k > 0) {
      ref = predict(ref, process, kNoAux, grid.nodes()[k - 1], grid.nodes()[k],
                    0.01);
    }
    CHECK(traj[k].tag == EventTag::Predicted);
    CHECK(traj[k].belief.cov()(0, 0) ==
          doctest::Approx(ref.cov()(0, 0)).epsilon(1e-12));
  }
}

TEST_CASE("an event at t0 updates the prior in place") {
  const auto process = scalar_process(0.0, 1.0);
  const Sensor sensor = scalar_sensor(1, 1.0);
  const GaussianBelief prior(VectorXd::Zero(1), MatrixXd::Ones(1, 1));
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 3);
  const Schedule schedule{{{0.0}}};
  const auto traj = filter_pass(process, {sensor}, kNoAux, schedule,
                                {{VectorXd::Ones(1)}}, prior, grid, 0.01);
  // Pre-update belief first, then the updated prior at the same time.
  REQUIRE(traj.size() >= 2);
  CHECK(traj[0].t == 0.0);
  CHECK(traj[0].tag == EventTag::Predicted);
  CHECK(traj[0].belief.cov()(0, 0) == doctest::Approx(1.0));
  CHECK(traj[1].t == 0.0);
  CHECK(traj[1].tag == EventTag::Updated);
  CHECK(traj[1].sensor_id == 1);
  const GaussianBelief expected =
      update(prior, sensor, VectorXd(), 0.0, VectorXd::Ones(1));
  CHECK(traj[1].belief.mean()(0) == doctest::Approx(expected.mean()(0)));
  CHECK(traj[1].belief.cov()(0, 0) == doctest::Approx(expected.cov()(0, 0)));
}

TEST_CASE("simultaneous events equal one stacked-sensor update") {
  RngStream rng(17);
  const int n = 3;
  const MatrixXd c1 = random_matrix(rng, 1, n);
  const MatrixXd c2 = random_matrix(rng, 2, n);
  const MatrixXd r1 = random_spd(rng, 1, 0.3);
  const MatrixXd r2 = random_spd(rng, 2, 0.3);
  Sensor s1, s2;
  s1.id = 1;
  s1.q = 1;
  s1.output = [c1](const VectorXd&, double) { return c1; };
  s1.noise_cov = [r1](const VectorXd&, double) { return r1; };
  s1.jump = [](const VectorXd&, const VectorXd&, double) {
    return VectorXd();
  };
  s2 = s1;
  s2.id = 2;
  s2.q = 2;
  s2.output = [c2](const VectorXd&, double) { return c2; };
  s2.noise_cov = [r2](const VectorXd&, double) { return r2; };

  const GaussianBelief prior(random_vector(rng, n), random_spd(rng, n));
  const VectorXd y1 = random_vector(rng, 1);
  const VectorXd y2 = random_vector(rng, 2);

  // Sequential scalar-block updates in sensor-id order.
  GaussianBelief seq = update(prior, s1, VectorXd(), 0.5, y1);
  seq = update(seq, s2, VectorXd(), 0.5, y2);

  // Batched update with stacked output and block-diagonal noise.
  MatrixXd c(3, n), r = MatrixXd::Zero(3, 3);
  c.topRows(1) = c1;
  c.bottomRows(2) = c2;
  r.topLeftCorner(1, 1) = r1;
  r.bottomRightCorner(2, 2) = r2;
  Sensor stacked;
  stacked.id = 9;
  stacked.q = 3;
  stacked.output = [c](const VectorXd&, double) { return c; };
  stacked.noise_cov = [r](const VectorXd&, double) { return r; };
  stacked.jump = s1.jump;
  VectorXd y(3);
  y << y1, y2;
  const GaussianBelief batch = update(prior, stacked, VectorXd(), 0.5, y);

  CHECK((seq.mean() - batch.mean()).cwiseAbs().maxCoeff() < 1e-8);
  CHECK((seq.cov() - batch.cov()).cwiseAbs().maxCoeff() < 1e-8);

  // The filter pass applies the same ordering for tied events.
  const auto process = scalar_process(0.0, 0.0);
  ProcessModel process3;
  process3.n = n;
  process3.m = 1;
  process3.drift = [n](const VectorXd&, double) {
    return MatrixXd::Zero(n, n);
  };
  process3.diffusion = [n](const VectorXd&, double) {
    return MatrixXd::Zero(n, 1);
  };
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 3);
  const Schedule schedule{{{0.5}, {0.5}}};
  const auto traj = filter_pass(process3, {s1, s2}, kNoAux, schedule,
                                {{y1}, {y2}}, prior, grid, 0.01);
  const auto& last_at_half = *std::find_if(
      traj.rbegin(), traj.rend(), [](const auto& e) { return e.t == 0.5; });
  CHECK((last_at_half.belief.cov() - batch.cov()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("filter pass rejects events outside the horizon") {
  const auto process = scalar_process(0.0, 1.0);
  const GaussianBelief prior(VectorXd::Zero(1), MatrixXd::Ones(1, 1));
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 3);
  const Schedule bad{{{2.0}}};
  CHECK_THROWS_AS(filter_pass(process, {scalar_sensor(1, 1.0)}, kNoAux, bad,
                              {{VectorXd::Ones(1)}}, prior, grid, 0.01),
                  ScheduleOutOfRangeError);
}

TEST_CASE("smoothing without measurements changes nothing") {
  const auto process = scalar_process(-0.4, 0.6);
  const GaussianBelief prior(VectorXd::Ones(1), MatrixXd::Ones(1, 1));
  const TimeGrid grid = TimeGrid::uniform(0.0, 2.0, 9);
  const auto traj = filter_pass(process, {scalar_sensor(1, 1.0)}, kNoAux,
                                Schedule{{{}}}, {{}}, prior, grid, 0.005);
  const auto smooth = rts_smooth(traj, process, kNoAux, 0.005);
  REQUIRE(smooth.size() == traj.size());
  for (std::size_t k = 0; k < smooth.size(); ++k) {
    CHECK(std::abs(smooth[k].belief.mean()(0) - traj[k].belief.mean()(0)) <
          1e-8);
    CHECK(std::abs(smooth[k].belief.cov()(0, 0) - traj[k].belief.cov()(0, 0)) <
          1e-8);
  }
  // Backward initialization: terminal smoothed equals terminal filtered.
  CHECK(smooth.back().belief.cov()(0, 0) == traj.back().belief.cov()(0, 0));
  CHECK(smooth.back().belief.mean()(0) == traj.back().belief.mean()(0));
}

namespace {

struct GpCase {
  KernelKind kind;
  double ell;
  double s2;
};

void check_gp_equivalence(const GpCase& gp_case, int num_meas,
                          double noise_var, double tol) {
  const KernelSsm ssm = build_kernel_ssm(gp_case.kind, gp_case.ell, gp_case.s2);
  RngStream rng(101 + num_meas);
  std::vector<double> meas_times;
  for (int i = 0; i < num_meas; ++i) {
    meas_times.push_back(0.2 + 4.6 * rng.uniform());
  }
  std::sort(meas_times.begin(), meas_times.end());
  VectorXd y(num_meas), noise(num_meas);
  for (int i = 0; i < num_meas; ++i) {
    y(i) = 2.0 * rng.normal();
    noise(i) = noise_var;
  }

  // State-space route: CD-KF forward, RTS backward.
  Sensor sensor;
  sensor.id = 1;
  sensor.q = 1;
  const RowVectorXd h_row = ssm.output_row;
  sensor.output = [h_row](const VectorXd&, double) -> MatrixXd {
    return h_row;
  };
  sensor.noise_cov = [noise_var](const VectorXd&, double) {
    return MatrixXd::Constant(1, 1, noise_var);
  };
  sensor.jump = [](const VectorXd&, const VectorXd&, double) {
    return VectorXd();
  };
  const GaussianBelief prior(VectorXd::Zero(ssm.process.n),
                             ssm.stationary_cov);
  const TimeGrid grid = TimeGrid::uniform(0.0, 5.0, 11);
  std::vector<std::vector<VectorXd>> meas_values(1);
  for (int i = 0; i < num_meas; ++i) {
    meas_values[0].push_back(VectorXd::Constant(1, y(i)));
  }
  const auto traj =
      filter_pass(ssm.process, {sensor}, zero_aux_trajectory(),
                  Schedule{{meas_times}}, meas_values, prior, grid, 1e-3);
  const auto smooth = rts_smooth(traj, ssm.process, zero_aux_trajectory(), 1e-3);

  // Dense Gram-matrix route.
  const GpPosterior post = gp_regress(gp_case.kind, gp_case.ell, gp_case.s2,
                                      meas_times, y, noise, meas_times);

  for (int i = 0; i < num_meas; ++i) {
    const auto it = std::find_if(
        smooth.begin(), smooth.end(),
        [&](const auto& e) { return e.t == meas_times[i]; });
    REQUIRE(it != smooth.end());
    const double mean = h_row * it->belief.mean();
    const double var = h_row * it->belief.cov() * h_row.transpose();
    CHECK(std::abs(mean - post.mean(i)) < tol);
    CHECK(std::abs(var - post.variance(i)) < tol);
  }
}

}  // namespace

TEST_CASE("KF+RTS equals dense GP regression for the exponential kernel") {
  check_gp_equivalence({KernelKind::Exponential, 1.3, 0.8}, 5, 0.2, 1e-8);
}

TEST_CASE("KF+RTS equals dense GP regression for the Matern-3/2 kernel") {
  check_gp_equivalence({KernelKind::Matern32, 0.9, 1.4}, 7, 0.3, 1e-8);
}

TEST_CASE("kernel SSMs solve their stationary Lyapunov equations") {
  for (const auto kind : {KernelKind::Exponential, KernelKind::Matern32}) {
    const KernelSsm ssm = build_kernel_ssm(kind, 1.0, 1.0);
    const MatrixXd a = ssm.process.drift(VectorXd(), 0.0);
    const MatrixXd s = ssm.process.diffusion(VectorXd(), 0.0);
    const MatrixXd residual = a * ssm.stationary_cov +
                              ssm.stationary_cov * a.transpose() +
                              s * s.transpose();
    CHECK(residual.cwiseAbs().maxCoeff() < 1e-12);
  }
  const KernelSsm m32 = build_kernel_ssm(KernelKind::Matern32, 1.0, 1.0);
  CHECK(m32.process.drift(VectorXd(), 0.0)(1, 1) ==
        doctest::Approx(-2.0 * std::sqrt(3.0)));
}

TEST_CASE("prediction from the stationary covariance is stationary") {
  for (const auto kind : {KernelKind::Exponential, KernelKind::Matern32}) {
    const KernelSsm ssm = build_kernel_ssm(kind, 0.7, 1.3);
    const GaussianBelief prior(VectorXd::Zero(ssm.process.n),
                               ssm.stationary_cov);
    const GaussianBelief out =
        predict(prior, ssm.process, kNoAux, 0.0, 2.5, 1e-3);
    CHECK((out.cov() - ssm.stationary_cov).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("kernel SSM builders reject non-positive hyperparameters") {
  CHECK_THROWS_AS(build_kernel_ssm(KernelKind::Exponential, 0.0, 1.0),
                  ParameterError);
  CHECK_THROWS_AS(build_kernel_ssm(KernelKind::Matern32, 1.0, -1.0),
                  ParameterError);
}
