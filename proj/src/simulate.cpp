#include "cdkf/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "cdkf/kalman.hpp"

namespace cdkf {

namespace {

MatrixXd spd_sqrt(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  return es.eigenvectors() *
         es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         es.eigenvectors().transpose();
}

struct Event {
  double t;
  int sensor;  // index into the sensor list
  int index;   // event index within that sensor's list
};

std::vector<Event> merged_events(const Schedule& schedule,
                                 const std::vector<Sensor>& sensors) {
  std::vector<Event> events;
  for (std::size_t s = 0; s < schedule.times.size(); ++s) {
    for (std::size_t i = 0; i < schedule.times[s].size(); ++i) {
      events.push_back({schedule.times[s][i], static_cast<int>(s),
                        static_cast<int>(i)});
    }
  }
  std::sort(events.begin(), events.end(), [&](const Event& a, const Event& b) {
    if (a.t != b.t) return a.t < b.t;
    return sensors[a.sensor].id < sensors[b.sensor].id;
  });
  return events;
}

// Covariance-only measurement update, sharing kalman_gain with the filter.
MatrixXd covariance_update(const MatrixXd& sigma, const Sensor& sensor,
                           const VectorXd& xi, double t) {
  const MatrixXd C = sensor.output(xi, t);
  const MatrixXd R = sensor.noise_cov(xi, t);
  const MatrixXd K = kalman_gain(sigma, C, R);
  const int n = static_cast<int>(sigma.rows());
  return floored_spd((MatrixXd::Identity(n, n) - K * C) * sigma);
}

}  // namespace

std::vector<double> sample_poisson_times(const IntensityProfile& profile,
                                         RngStream& rng) {
  double rate_max = 0.0;
  for (int k = 0; k < profile.grid().num_intervals(); ++k) {
    rate_max = std::max(rate_max, profile.rate_of_interval(k));
  }
  std::vector<double> times;
  if (rate_max <= 0.0) return times;
  double t = profile.grid().t0();
  const double tf = profile.grid().tf();
  while (true) {
    t += rng.exponential(rate_max);
    if (t >= tf) break;
    const double rate = profile.rate_of_interval(profile.grid().interval_of(t));
    if (rng.uniform() < rate / rate_max) times.push_back(t);
  }
  return times;
}

TruthRun simulate_truth(const ProcessModel& process, const AuxModel& aux,
                        const std::vector<Sensor>& sensors,
                        const Schedule& schedule, const InputPlan& input_plan,
                        const GaussianBelief& prior, const VectorXd& xi0,
                        const TimeGrid& grid, RngStream& rng, double step) {
  schedule.validate(grid);
  if (step <= 0.0) throw ParameterError("simulate_truth: step must be > 0");
  const auto events = merged_events(schedule, sensors);

  TruthRun run;
  run.measurements.resize(sensors.size());
  for (std::size_t s = 0; s < sensors.size(); ++s) {
    run.measurements[s].resize(schedule.times[s].size());
  }

  // Draw the initial state from the prior.
  VectorXd x = prior.mean();
  {
    const MatrixXd sqrt_cov = spd_sqrt(prior.cov());
    VectorXd z(process.n);
    for (int i = 0; i < process.n; ++i) z(i) = rng.normal();
    x += sqrt_cov * z;
  }
  VectorXd xi = xi0;
  MatrixXd sigma = floored_spd(prior.cov());

  auto record = [&](double t) {
    run.times.push_back(t);
    run.x.push_back(x);
    run.xi.push_back(xi);
    run.sigma.push_back(sigma);
  };

  std::size_t next_event = 0;
  auto apply_event = [&](const Event& ev) {
    const Sensor& sensor = sensors[ev.sensor];
    const MatrixXd C = sensor.output(xi, ev.t);
    const MatrixXd R = sensor.noise_cov(xi, ev.t);
    VectorXd z(sensor.q);
    for (int i = 0; i < sensor.q; ++i) z(i) = rng.normal();
    Eigen::LLT<MatrixXd> llt(R);
    run.measurements[ev.sensor][ev.index] = C * x + llt.matrixL() * z;
    sigma = covariance_update(sigma, sensor, xi, ev.t);
    const VectorXd u = input_plan.value_of_interval(
        std::min(grid.interval_of(ev.t), grid.num_intervals() - 1));
    xi.head(aux.n_p) += sensor.jump(xi, u, ev.t);
  };

  record(grid.t0());
  while (next_event < events.size() && events[next_event].t == grid.t0()) {
    apply_event(events[next_event++]);
    record(grid.t0());
  }

  for (int k = 0; k < grid.num_intervals(); ++k) {
    const VectorXd u = input_plan.value_of_interval(k);
    double a = grid.nodes()[k];
    const double b_end = grid.nodes()[k + 1];
    while (a < b_end) {
      double b = b_end;
      bool is_event = false;
      if (next_event < events.size() && events[next_event].t <= b_end) {
        b = events[next_event].t;
        is_event = true;
      }
      // Euler-Maruyama sweep over [a, b].
      const int n_sub =
          std::max(1, static_cast<int>(std::ceil((b - a) / step)));
      const double h = (b - a) / n_sub;
      const double sqrt_h = std::sqrt(h);
      for (int i = 0; i < n_sub; ++i) {
        const double t = a + i * h;
        const MatrixXd A = process.drift(xi, t);
        const MatrixXd s_mat = process.diffusion(xi, t);
        VectorXd z(process.m);
        for (int j = 0; j < process.m; ++j) z(j) = rng.normal();
        const VectorXd x_new = x + A * x * h + s_mat * (sqrt_h * z);
        VectorXd xi_new = xi;
        xi_new.head(aux.n_p) += aux.f_p(xi, u, t) * h;
        if (aux.n_u() > 0) {
          xi_new.tail(aux.n_u()) +=
              aux.f_u(AuxModel::unperturbed_part(xi, aux.n_p), u, t) * h;
        }
        sigma = floored_spd(
            sigma + h * lyapunov_rhs(A, sigma, s_mat * s_mat.transpose()));
        x = x_new;
        xi = xi_new;
        if (!x.allFinite() || !xi.allFinite() || !sigma.allFinite()) {
          throw IntegrationDivergedError(t + h);
        }
        record(t + h);
      }
      if (is_event) {
        // Simultaneous events are applied in ascending sensor-id order.
        while (next_event < events.size() && events[next_event].t == b) {
          apply_event(events[next_event++]);
          record(b);
        }
      }
      a = b;
    }
  }
  return run;
}

EventDrivenPath propagate_event_driven(const ProcessModel& process,
                                       const AuxModel& aux,
                                       const std::vector<Sensor>& sensors,
                                       const Schedule& schedule,
                                       const InputPlan& input_plan,
                                       const TimeGrid& grid,
                                       const MatrixXd& sigma0,
                                       const VectorXd& xi0, int substeps) {
  schedule.validate(grid);
  if (substeps < 1) throw ParameterError("substeps must be >= 1");
  const auto events = merged_events(schedule, sensors);
  const VectorXd zero_rates = VectorXd::Zero(static_cast<int>(sensors.size()));

  EventDrivenPath path;
  path.sigma_nodes.reserve(grid.num_nodes());
  path.xi_nodes.reserve(grid.num_nodes());

  MatrixXd sigma = floored_spd(sigma0);
  VectorXd xi = xi0;
  std::size_t next_event = 0;

  auto apply_event = [&](const Event& ev) {
    sigma = covariance_update(sigma, sensors[ev.sensor], xi, ev.t);
    const VectorXd u = input_plan.value_of_interval(
        std::min(grid.interval_of(ev.t), grid.num_intervals() - 1));
    xi.head(aux.n_p) += sensors[ev.sensor].jump(xi, u, ev.t);
  };

  while (next_event < events.size() && events[next_event].t == grid.t0()) {
    apply_event(events[next_event++]);
  }
  path.sigma_nodes.push_back(sigma);
  path.xi_nodes.push_back(xi);

  for (int k = 0; k < grid.num_intervals(); ++k) {
    const VectorXd u = input_plan.value_of_interval(k);
    const double base_h = grid.dt(k) / substeps;
    double a = grid.nodes()[k];
    const double b_end = grid.nodes()[k + 1];
    while (a < b_end) {
      double b = b_end;
      bool is_event = false;
      if (next_event < events.size() && events[next_event].t <= b_end) {
        b = events[next_event].t;
        is_event = true;
      }
      if (b > a) {
        // Event-free intervals step exactly like propagate_bounds so the
        // zero-rate trajectories agree bit-for-bit.
        const int n_sub =
            (a == grid.nodes()[k] && b == b_end)
                ? substeps
                : std::max(1, static_cast<int>(std::ceil((b - a) / base_h)));
        const double h = (b - a) / n_sub;
        for (int i = 0; i < n_sub; ++i) {
          rk4_coupled_step(sigma, xi, process, aux, sensors, zero_rates, u,
                           a + i * h, h);
          if (!sigma.allFinite() || !xi.allFinite()) {
            throw IntegrationDivergedError(a + (i + 1) * h);
          }
          sigma = floored_spd(sigma);
        }
      }
      if (is_event) {
        while (next_event < events.size() && events[next_event].t == b) {
          apply_event(events[next_event++]);
        }
      }
      a = b;
    }
    path.sigma_nodes.push_back(sigma);
    path.xi_nodes.push_back(xi);
  }
  return path;
}

void parallel_for(int count, const std::function<void(int)>& fn) {
  int threads = static_cast<int>(std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CDKF_SCHED_THREADS")) {
    threads = std::max(1, std::atoi(env));
  }
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      for (int i = w; i < count; i += threads) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

double pairwise_sum(const std::vector<double>& values) {
  std::function<double(std::size_t, std::size_t)> rec =
      [&](std::size_t lo, std::size_t hi) -> double {
    if (hi - lo <= 8) {
      double acc = 0.0;
      for (std::size_t i = lo; i < hi; ++i) acc += values[i];
      return acc;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return rec(lo, mid) + rec(mid, hi);
  };
  return values.empty() ? 0.0 : rec(0, values.size());
}

namespace {

// Probes whether any of A, sigma, C_s, R_s reads the perturbed auxiliary
// coordinates along the nominal trajectory.
void require_xi_p_independent(const ProcessModel& process,
                              const std::vector<Sensor>& sensors,
                              const AuxModel& aux,
                              const std::vector<VectorXd>& probe_xis,
                              const std::vector<double>& probe_times) {
  auto differs = [](const MatrixXd& a, const MatrixXd& b) {
    const double scale = 1.0 + a.cwiseAbs().maxCoeff();
    return (a - b).cwiseAbs().maxCoeff() > 1e-12 * scale;
  };
  for (std::size_t i = 0; i < probe_xis.size(); ++i) {
    const VectorXd& xi = probe_xis[i];
    const double t = probe_times[i];
    for (int j = 0; j < aux.n_p; ++j) {
      VectorXd xi_pert = xi;
      xi_pert(j) += 1.0 + 0.5 * std::abs(xi(j));
      if (differs(process.drift(xi, t), process.drift(xi_pert, t)) ||
          differs(process.diffusion(xi, t), process.diffusion(xi_pert, t))) {
        throw PreconditionError(
            "bound check requires drift/diffusion independent of the "
            "perturbed auxiliary state (coordinate " + std::to_string(j) +
            ")");
      }
      for (const Sensor& sensor : sensors) {
        if (differs(sensor.output(xi, t), sensor.output(xi_pert, t)) ||
            differs(sensor.noise_cov(xi, t), sensor.noise_cov(xi_pert, t))) {
          throw PreconditionError(
              "bound check requires sensor " + std::to_string(sensor.id) +
              " output/noise independent of the perturbed auxiliary state "
              "(coordinate " + std::to_string(j) + ")");
        }
      }
    }
  }
}

double sample_std(const std::vector<double>& values, double mean) {
  if (values.size() < 2) return 0.0;
  std::vector<double> sq(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - mean;
    sq[i] = d * d;
  }
  return std::sqrt(pairwise_sum(sq) / (static_cast<double>(values.size()) - 1.0));
}

}  // namespace

MonteCarloReport monte_carlo_bound_check(
    const ProcessModel& process, const AuxModel& aux,
    const std::vector<Sensor>& sensors, const RatePlan& rate_plan,
    const InputPlan& input_plan, int replications, std::uint64_t seed,
    const TimeGrid& grid, const MatrixXd& sigma0, const VectorXd& xi0,
    int substeps) {
  if (replications < 1) {
    throw ParameterError("monte_carlo_bound_check: replications >= 1");
  }
  const int n = process.n;
  const int n_nodes = grid.num_nodes();
  const int n_p = aux.n_p;
  const int num_sensors = static_cast<int>(sensors.size());

  const BoundTrajectory bound = propagate_bounds(
      process, aux, sensors, rate_plan, input_plan, grid, sigma0, xi0,
      substeps);
  require_xi_p_independent(process, sensors, aux, bound.xi_hat, grid.nodes());

  std::vector<IntensityProfile> profiles;
  profiles.reserve(num_sensors);
  for (int s = 0; s < num_sensors; ++s) profiles.emplace_back(rate_plan, s);

  // Per-replication samples, stored so means and standard errors can be
  // computed order-independently afterwards.
  std::vector<std::vector<MatrixXd>> sigma_samples(replications);
  std::vector<std::vector<VectorXd>> xi_samples(replications);
  parallel_for(replications, [&](int rep) {
    RngStream stream(seed, static_cast<std::uint64_t>(rep));
    Schedule schedule;
    schedule.times.resize(num_sensors);
    for (int s = 0; s < num_sensors; ++s) {
      schedule.times[s] = sample_poisson_times(profiles[s], stream);
    }
    EventDrivenPath path = propagate_event_driven(
        process, aux, sensors, schedule, input_plan, grid, sigma0, xi0,
        substeps);
    sigma_samples[rep] = std::move(path.sigma_nodes);
    xi_samples[rep] = std::move(path.xi_nodes);
  });

  MonteCarloReport report;
  report.node_times = grid.nodes();
  report.tag = aux.convexity_tag;
  report.heuristic = aux.convexity_tag == ConvexityTag::None;
  report.replications = replications;
  report.sigma_margin.resize(n_nodes);
  report.sigma_se.resize(n_nodes);
  report.xi_diff.resize(n_p, n_nodes);
  report.xi_se.resize(n_p, n_nodes);

  const double m_dbl = static_cast<double>(replications);
  std::vector<double> buffer(replications);
  report.sigma_pass = true;
  report.xi_pass = true;

  for (int k = 0; k < n_nodes; ++k) {
    MatrixXd mean_sigma = MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int rep = 0; rep < replications; ++rep) {
          buffer[rep] = sigma_samples[rep][k](i, j);
        }
        mean_sigma(i, j) = pairwise_sum(buffer) / m_dbl;
      }
    }
    MatrixXd diff = bound.sigma_hat[k] - mean_sigma;
    diff = 0.5 * (diff + diff.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(diff);
    int arg_min = 0;
    es.eigenvalues().minCoeff(&arg_min);
    const VectorXd v = es.eigenvectors().col(arg_min);
    for (int rep = 0; rep < replications; ++rep) {
      buffer[rep] = v.dot(sigma_samples[rep][k] * v);
    }
    const double proj_mean = pairwise_sum(buffer) / m_dbl;
    const double se = sample_std(buffer, proj_mean) / std::sqrt(m_dbl);
    const double scale = 1.0 + std::abs(v.dot(bound.sigma_hat[k] * v));
    const double se_eff = std::max(se, 1e-9 * scale);
    report.sigma_margin[k] = es.eigenvalues()(arg_min);
    report.sigma_se[k] = se;
    if (report.sigma_margin[k] < -3.0 * se_eff) report.sigma_pass = false;

    for (int j = 0; j < n_p; ++j) {
      for (int rep = 0; rep < replications; ++rep) {
        buffer[rep] = xi_samples[rep][k](j);
      }
      const double mean_xi = pairwise_sum(buffer) / m_dbl;
      const double se_xi = sample_std(buffer, mean_xi) / std::sqrt(m_dbl);
      const double d = bound.xi_hat[k](j) - mean_xi;
      report.xi_diff(j, k) = d;
      report.xi_se(j, k) = se_xi;
      const double guard =
          std::max(se_xi, 1e-9 * (1.0 + std::abs(bound.xi_hat[k](j))));
      bool ok = true;
      switch (aux.convexity_tag) {
        case ConvexityTag::Affine:
          ok = std::abs(d) <= 3.0 * guard;
          break;
        case ConvexityTag::Concave:
          ok = d >= -3.0 * guard;
          break;
        case ConvexityTag::Convex:
          ok = d <= 3.0 * guard;
          break;
        case ConvexityTag::None:
          ok = true;
          break;
      }
      if (!ok) report.xi_pass = false;
    }
  }
  report.pass = report.sigma_pass && report.xi_pass;
  return report;
}

Schedule random_schedule(int num_sensors, const TimeGrid& grid,
                         double ocp_node_count, RngStream& rng) {
  if (num_sensors < 1) throw ParameterError("random_schedule: no sensors");
  Schedule schedule;
  schedule.times.resize(num_sensors);
  if (ocp_node_count <= 0.0) return schedule;
  const double horizon = grid.tf() - grid.t0();
  const double rate = ocp_node_count / (num_sensors * horizon);
  for (int s = 0; s < num_sensors; ++s) {
    double t = grid.t0();
    while (true) {
      t += rng.exponential(rate);
      if (t >= grid.tf()) break;
      schedule.times[s].push_back(t);
    }
  }
  return schedule;
}

Schedule greedy_schedule(const ProcessModel& process, const AuxModel& aux,
                         const std::vector<Sensor>& sensors,
                         const TimeGrid& grid, const InputPlan& input_plan,
                         const MatrixXd& sigma0, const VectorXd& xi0,
                         const GreedyConfig& config) {
  if (config.sensor_cost.size() != static_cast<Eigen::Index>(sensors.size())) {
    throw ParameterError("greedy_schedule: one cost per sensor required");
  }
  const VectorXd zero_rates = VectorXd::Zero(static_cast<int>(sensors.size()));
  Schedule schedule;
  schedule.times.resize(sensors.size());

  MatrixXd sigma = floored_spd(sigma0);
  VectorXd xi = xi0;
  for (int k = 0; k < grid.num_nodes(); ++k) {
    const double t = grid.nodes()[k];
    const VectorXd u = input_plan.value_of_interval(
        std::min(k, grid.num_intervals() - 1));

    int best = -1;
    double best_score = 0.0;
    MatrixXd best_sigma;
    for (std::size_t s = 0; s < sensors.size(); ++s) {
      MatrixXd updated;
      try {
        updated = covariance_update(sigma, sensors[s], xi, t);
      } catch (const IllConditionedInnovationError&) {
        continue;
      }
      double score = sigma.trace() - updated.trace() -
                     config.sensor_cost(static_cast<Eigen::Index>(s));
      if (config.penalty) score -= config.penalty(static_cast<int>(s), xi, t);
      if (score > 0.0 && (best < 0 || score > best_score)) {
        best = static_cast<int>(s);
        best_score = score;
        best_sigma = updated;
      }
    }
    if (best >= 0) {
      schedule.times[best].push_back(t);
      sigma = best_sigma;
      xi.head(aux.n_p) += sensors[best].jump(xi, u, t);
    }

    if (k < grid.num_intervals()) {
      rk4_coupled_step(sigma, xi, process, aux, sensors, zero_rates, u, t,
                       grid.dt(k));
      sigma = floored_spd(sigma);
    }
  }
  return schedule;
}

Schedule m_optimized_schedule(
    const RatePlan& rate_plan, int realizations,
    const std::function<double(const Schedule&)>& evaluator, RngStream& rng) {
  if (realizations < 1) {
    throw ParameterError("m_optimized_schedule: realizations >= 1");
  }
  std::vector<IntensityProfile> profiles;
  for (int s = 0; s < rate_plan.num_sensors(); ++s) {
    profiles.emplace_back(rate_plan, s);
  }
  Schedule best;
  double best_cost = 0.0;
  for (int r = 0; r < realizations; ++r) {
    Schedule candidate;
    candidate.times.resize(rate_plan.num_sensors());
    for (int s = 0; s < rate_plan.num_sensors(); ++s) {
      candidate.times[s] = sample_poisson_times(profiles[s], rng);
    }
    const double cost = evaluator(candidate);
    if (r == 0 || cost < best_cost) {
      best = std::move(candidate);
      best_cost = cost;
    }
  }
  return best;
}

RunStats evaluate_run(
    const std::map<std::string, std::vector<double>>& signals) {
  RunStats stats;
  for (const auto& [name, values] : signals) {
    if (values.empty()) {
      throw ParameterError("evaluate_run: signal '" + name + "' is empty");
    }
    SignalStats s;
    s.mean = pairwise_sum(values) / static_cast<double>(values.size());
    std::vector<double> sq(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - s.mean;
      sq[i] = d * d;
    }
    s.std_dev =
        std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size()));
    s.max = *std::max_element(values.begin(), values.end());
    s.min = *std::min_element(values.begin(), values.end());
    stats.signals[name] = s;
  }
  return stats;
}

}  // namespace cdkf
