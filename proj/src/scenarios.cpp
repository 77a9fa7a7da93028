#include "cdkf/scenarios.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace cdkf {

using nlohmann::json;

ScenarioConfig ScenarioConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  return from_json(std::move(j));
}

ScenarioConfig ScenarioConfig::from_json(json j) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  ScenarioConfig cfg;
  cfg.json_ = std::move(j);
  return cfg;
}

bool ScenarioConfig::has(const std::string& key) const {
  return json_.contains(key);
}

double ScenarioConfig::number(const std::string& key) const {
  if (!json_.contains(key)) throw ConfigError("missing config key: " + key);
  if (!json_[key].is_number()) {
    throw ConfigError("config key is not numeric: " + key);
  }
  return json_[key].get<double>();
}

double ScenarioConfig::number_or(const std::string& key,
                                 double fallback) const {
  return json_.contains(key) ? number(key) : fallback;
}

std::vector<double> ScenarioConfig::array(const std::string& key) const {
  if (!json_.contains(key)) throw ConfigError("missing config key: " + key);
  if (!json_[key].is_array()) {
    throw ConfigError("config key is not an array: " + key);
  }
  std::vector<double> out;
  for (const auto& v : json_[key]) {
    if (!v.is_number()) throw ConfigError("non-numeric entry in " + key);
    out.push_back(v.get<double>());
  }
  return out;
}

std::string ScenarioConfig::text_or(const std::string& key,
                                    const std::string& fallback) const {
  if (!json_.contains(key)) return fallback;
  return json_[key].get<std::string>();
}

bool ScenarioConfig::flag_or(const std::string& key, bool fallback) const {
  if (!json_.contains(key)) return fallback;
  return json_[key].get<bool>();
}

namespace {

void require(std::vector<std::string>& errors, bool cond,
             const std::string& message) {
  if (!cond) errors.push_back(message);
}

void throw_if_errors(const std::vector<std::string>& errors,
                     const std::string& scenario) {
  if (errors.empty()) return;
  std::ostringstream os;
  os << scenario << " config invalid:";
  for (const auto& e : errors) os << "\n  - " << e;
  throw ConfigError(os.str());
}

SolveOptions solver_options(const ScenarioConfig& cfg) {
  SolveOptions opts;
  opts.feas_tol = cfg.number_or("feas_tol", opts.feas_tol);
  opts.opt_tol = cfg.number_or("opt_tol", opts.opt_tol);
  opts.max_outer = static_cast<int>(cfg.number_or("max_outer", opts.max_outer));
  opts.max_inner = static_cast<int>(cfg.number_or("max_inner", opts.max_inner));
  opts.penalty_init = cfg.number_or("penalty_init", opts.penalty_init);
  opts.penalty_growth = cfg.number_or("penalty_growth", opts.penalty_growth);
  return opts;
}

}  // namespace

Scenario build_robot_scenario(const ScenarioConfig& cfg, bool with_radiation) {
  std::vector<std::string> errors;
  const double c_e = cfg.number("c_e");
  const double r_e = cfg.number("r_e");
  const double c_u = cfg.number("c_u");
  const double c_1 = cfg.number("c_1");
  const double c_2 = cfg.number("c_2");
  const double r1_max = cfg.number("R_1max");
  const double r2_max = cfg.number("R_2max");
  const double r_1 = cfg.number("r_1");
  const double r_2 = cfg.number("r_2");
  require(errors, c_u >= c_1 && c_1 >= c_2 && c_2 >= 0.0,
          "need c_u >= c_1 >= c_2 >= 0");
  require(errors, r2_max > r1_max && r1_max > 0.0,
          "need R_2max > R_1max > 0");
  require(errors, r_2 > r_1 && r_1 > 0.0, "need r_2 > r_1 > 0");
  require(errors, c_e >= 0.0 && r_e >= 0.0, "need c_e, r_e >= 0");

  double gamma_1 = 0.0, gamma_2 = 0.0, r_zeta = 0.0;
  if (with_radiation) {
    gamma_1 = cfg.number("gamma_1");
    gamma_2 = cfg.number("gamma_2");
    r_zeta = cfg.number("r_zeta");
    require(errors, gamma_1 > gamma_2 && gamma_2 >= 0.0,
            "need gamma_1 > gamma_2 >= 0");
    require(errors, r_zeta > 0.0, "need r_zeta > 0");
  }

  const auto pb_vec = cfg.array("p_b");
  const auto pp_vec = cfg.array("p_p");
  require(errors, pb_vec.size() == 2 && pp_vec.size() == 2,
          "p_b and p_p must have 2 entries");
  const double horizon = cfg.number("T");
  const int grid_n = static_cast<int>(cfg.number_or("grid_n", 40));
  require(errors, horizon > 0.0 && grid_n >= 3, "need T > 0 and grid_n >= 3");
  const double ell = cfg.number_or("lengthscale", 0.5);
  const double s2 = cfg.number_or("variance", 1.0);
  require(errors, ell > 0.0 && s2 > 0.0, "need positive GP hyperparameters");
  throw_if_errors(errors, "robot");

  Eigen::Vector2d p_b(pb_vec[0], pb_vec[1]);
  Eigen::Vector2d p_p(pp_vec[0], pp_vec[1]);

  Scenario sc;
  sc.name = with_radiation ? "robot_radiation" : "robot";
  const KernelSsm kernel = build_kernel_ssm(KernelKind::Matern32, ell, s2);
  sc.process = kernel.process;
  sc.grid = TimeGrid::uniform(0.0, horizon, grid_n);
  sc.prior = GaussianBelief(VectorXd::Zero(2), kernel.stationary_cov);
  sc.state_offset = VectorXd::Zero(2);

  // Auxiliary state: [eta (, zeta_1, zeta_2); p_r (2); theta].
  const int n_p = with_radiation ? 3 : 1;
  sc.aux.n_p = n_p;
  sc.aux.n_xi = n_p + 3;
  sc.aux.convexity_tag = ConvexityTag::Affine;
  sc.aux.f_p = [c_e, r_e, c_u, p_b, n_p](const VectorXd& xi, const VectorXd& u,
                                         double) {
    VectorXd d = VectorXd::Zero(n_p);
    const Eigen::Vector2d p_r(xi(n_p), xi(n_p + 1));
    d(0) = c_e * std::exp(-r_e * (p_r - p_b).squaredNorm()) - c_u * u(0) -
           c_u * u(1);
    return d;
  };
  sc.aux.f_u = [](const VectorXd& xi_u, const VectorXd& u, double) {
    VectorXd d(3);
    d(0) = u(0) * std::cos(xi_u(2));
    d(1) = u(0) * std::sin(xi_u(2));
    d(2) = u(1);
    return d;
  };

  const RowVectorXd output_row = kernel.output_row;
  for (int s = 0; s < 2; ++s) {
    const double r_max = (s == 0) ? r1_max : r2_max;
    const double r_s = (s == 0) ? r_1 : r_2;
    const double c_s = (s == 0) ? c_1 : c_2;
    const double gamma_s = (s == 0) ? gamma_1 : gamma_2;
    Sensor sensor;
    sensor.id = s + 1;
    sensor.q = 1;
    sensor.output = [output_row](const VectorXd&, double) -> MatrixXd {
      return output_row;
    };
    sensor.noise_cov = [r_max, r_s, p_p, n_p, with_radiation, s](
                           const VectorXd& xi, double) -> MatrixXd {
      const Eigen::Vector2d p_r(xi(n_p), xi(n_p + 1));
      double value = r_max * std::exp(r_s * (p_r - p_p).squaredNorm());
      if (with_radiation) value *= std::exp(r_s * xi(1 + s));
      MatrixXd R(1, 1);
      R << value;
      return R;
    };
    sensor.jump = [c_s, gamma_s, r_zeta, p_p, n_p, with_radiation, s](
                      const VectorXd& xi, const VectorXd&, double) {
      VectorXd g = VectorXd::Zero(n_p);
      g(0) = -c_s;
      if (with_radiation) {
        const Eigen::Vector2d p_r(xi(n_p), xi(n_p + 1));
        g(1 + s) = gamma_s * std::exp(-r_zeta * (p_r - p_p).squaredNorm());
      }
      return g;
    };
    sc.sensors.push_back(std::move(sensor));
  }

  sc.xi0 = VectorXd::Zero(sc.aux.n_xi);
  sc.xi0(0) = cfg.number_or("eta0", 50.0);
  sc.xi0(n_p) = p_b(0);
  sc.xi0(n_p + 1) = p_b(1);
  sc.xi0(n_p + 2) = cfg.number_or("theta0", 0.0);

  // Planning problem.
  OcpSpec& ocp = sc.ocp;
  ocp.weights = {cfg.number_or("w_sigma", 1.0), cfg.number_or("w_lambda", 0.05),
                 cfg.number_or("w_u", 0.01), cfg.number_or("w_eps", 100.0)};
  const OcpWeights w = ocp.weights;
  ocp.running_cost = [w](const VectorXd&, const MatrixXd& sigma,
                         const VectorXd& u, const VectorXd& lambda,
                         const VectorXd& eps, double) {
    return w.w_sigma * sigma.trace() + w.w_lambda * lambda.squaredNorm() +
           w.w_u * u.squaredNorm() + w.w_eps * eps.squaredNorm();
  };
  ocp.input_lower = VectorXd(2);
  ocp.input_upper = VectorXd(2);
  ocp.input_lower << cfg.number_or("v_min", 0.0),
      cfg.number_or("omega_min", -6.0);
  ocp.input_upper << cfg.number_or("v_max", 3.0), cfg.number_or("omega_max", 6.0);
  ocp.rate_upper = cfg.number_or("rate_upper",
                                 std::numeric_limits<double>::infinity());

  const bool has_trace_cap = cfg.has("c_sigma");
  const double c_sigma = cfg.number_or("c_sigma", 0.0);
  const double window_start = cfg.number_or("trace_window_start", 0.5);
  const bool has_energy_floor = cfg.has("c_eta");
  const double c_eta = cfg.number_or("c_eta", 0.0);
  ocp.slack_dim = has_trace_cap ? 1 : 0;
  if (has_trace_cap || has_energy_floor) {
    ocp.running_constraints =
        [has_trace_cap, c_sigma, window_start, has_energy_floor, c_eta](
            const VectorXd& xi, const MatrixXd& sigma, const VectorXd&,
            const VectorXd&, const VectorXd& eps, double t) {
          std::vector<double> rows;
          if (has_energy_floor) rows.push_back(c_eta - xi(0));
          if (has_trace_cap && t >= window_start) {
            rows.push_back(sigma.trace() - c_sigma - eps(0));
          }
          return Eigen::Map<const VectorXd>(rows.data(),
                                            static_cast<Eigen::Index>(rows.size()))
              .eval();
        };
  }
  if (cfg.flag_or("return_to_base", true)) {
    const double tol = cfg.number_or("terminal_tol", 1e-3);
    ocp.terminal_constraints = [p_b, tol, n_p](const VectorXd& xi,
                                               const MatrixXd&, const VectorXd&,
                                               const VectorXd&, const VectorXd&,
                                               double) {
      VectorXd rows(4);
      rows << xi(n_p) - p_b(0) - tol, p_b(0) - xi(n_p) - tol,
          xi(n_p + 1) - p_b(1) - tol, p_b(1) - xi(n_p + 1) - tol;
      return rows;
    };
  }

  // Baseline knobs + run statistics.
  sc.greedy.sensor_cost = VectorXd(2);
  sc.greedy.sensor_cost << cfg.number_or("greedy_cost_1", 0.02 * c_1),
      cfg.number_or("greedy_cost_2", 0.02 * c_2);
  const double greedy_penalty = cfg.number_or("greedy_energy_penalty", 1e6);
  const VectorXd meas_energy = (VectorXd(2) << c_1, c_2).finished();
  if (has_energy_floor) {
    sc.greedy.penalty = [c_eta, greedy_penalty, meas_energy](
                            int s, const VectorXd& xi, double) {
      return (xi(0) - meas_energy(s) < c_eta) ? greedy_penalty : 0.0;
    };
  }
  sc.m_opt_samples = static_cast<int>(cfg.number_or("m_opt_samples", 50));
  sc.m_opt_penalty = cfg.number_or("m_opt_penalty", 1e3);
  sc.meas_cost = VectorXd::Zero(2);
  sc.meas_cost << cfg.number_or("meas_cost_1", 0.0),
      cfg.number_or("meas_cost_2", 0.0);
  sc.random_event_budget = cfg.number_or("random_n_events", grid_n);
  sc.truth_step = cfg.number_or("truth_step", sc.grid.dt(0) / 20.0);
  sc.solver = solver_options(cfg);

  sc.signals.push_back(
      {"trace", [](const VectorXd&, const VectorXd&, double tr) { return tr; }});
  sc.signals.push_back(
      {"energy",
       [](const VectorXd&, const VectorXd& xi, double) { return xi(0); }});
  if (with_radiation) {
    sc.signals.push_back({"degradation",
                          [](const VectorXd&, const VectorXd& xi, double) {
                            return xi(1) + xi(2);
                          }});
  } else {
    sc.signals.push_back({"degradation",
                          [](const VectorXd&, const VectorXd&, double) {
                            return 0.0;
                          }});
  }
  return sc;
}

Scenario build_water_scenario(const ScenarioConfig& cfg) {
  std::vector<std::string> errors;
  const double kappa = cfg.number("kappa");
  const double x_amb = cfg.number("x_amb");
  const double sigma_w = cfg.number("sigma");
  const double r10 = cfg.number("R_10");
  const double r20 = cfg.number("R_20");
  const double lam1 = cfg.number("lambda_1f");
  const double lam2 = cfg.number("lambda_2f");
  const double alpha_f = cfg.number("alpha_f");
  const double rho1 = cfg.number("rho_1f");
  const double rho2 = cfg.number("rho_2f");
  const double gamma_f = cfg.number("gamma_f");
  require(errors, kappa > 0.0, "need kappa > 0");
  require(errors, sigma_w > 0.0, "need sigma > 0");
  require(errors, r10 > r20 && r20 > 0.0, "need R_10 > R_20 > 0");
  require(errors, rho2 > rho1 && rho1 > 0.0, "need rho_2f > rho_1f > 0");
  require(errors, lam1 > 0.0 && lam2 > 0.0, "need lambda_sf > 0");
  require(errors, alpha_f > 0.0 && gamma_f >= 0.0,
          "need alpha_f > 0 and gamma_f >= 0");
  const double horizon = cfg.number_or("T", 24.0);
  const int grid_n = static_cast<int>(cfg.number_or("grid_n", 60));
  require(errors, horizon > 0.0 && grid_n >= 3, "need T > 0 and grid_n >= 3");
  throw_if_errors(errors, "water");

  Scenario sc;
  sc.name = "water";
  sc.grid = TimeGrid::uniform(0.0, horizon, grid_n);

  // The linear model runs in deviation coordinates around the ambient level;
  // the offset is added back for reporting.
  MatrixXd A(1, 1), S(1, 1);
  A << -kappa;
  S << sigma_w;
  sc.process.n = 1;
  sc.process.m = 1;
  sc.process.drift = [A](const VectorXd&, double) { return A; };
  sc.process.diffusion = [S](const VectorXd&, double) { return S; };
  sc.state_offset = VectorXd::Constant(1, x_amb);

  const double mu0 = cfg.number_or("mu0", x_amb);
  const double sigma0 = cfg.number_or("Sigma0", sigma_w * sigma_w / (2 * kappa));
  sc.prior = GaussianBelief(VectorXd::Constant(1, mu0 - x_amb),
                            MatrixXd::Constant(1, 1, sigma0));

  sc.aux.n_xi = 2;
  sc.aux.n_p = 2;
  sc.aux.convexity_tag = ConvexityTag::Affine;
  sc.aux.f_p = [alpha_f, gamma_f](const VectorXd& xi, const VectorXd& u,
                                  double) {
    VectorXd d(2);
    d(0) = -(alpha_f + gamma_f * u(0)) * xi(0);
    d(1) = -(alpha_f + gamma_f * u(1)) * xi(1);
    return d;
  };
  sc.aux.f_u = [](const VectorXd&, const VectorXd&, double) {
    return VectorXd();
  };

  for (int s = 0; s < 2; ++s) {
    const double r_s0 = (s == 0) ? r10 : r20;
    const double lam_s = (s == 0) ? lam1 : lam2;
    const double rho_s = (s == 0) ? rho1 : rho2;
    Sensor sensor;
    sensor.id = s + 1;
    sensor.q = 1;
    sensor.output = [](const VectorXd&, double) -> MatrixXd {
      return MatrixXd::Ones(1, 1);
    };
    sensor.noise_cov = [r_s0, lam_s, s](const VectorXd& xi,
                                        double) -> MatrixXd {
      MatrixXd R(1, 1);
      R << r_s0 * std::exp(lam_s * xi(s));
      return R;
    };
    sensor.jump = [rho_s, s](const VectorXd&, const VectorXd&, double) {
      VectorXd g = VectorXd::Zero(2);
      g(s) = rho_s;
      return g;
    };
    sc.sensors.push_back(std::move(sensor));
  }

  sc.xi0 = VectorXd::Zero(2);
  if (cfg.has("xi0")) {
    const auto v = cfg.array("xi0");
    if (v.size() != 2) throw ConfigError("water: xi0 must have 2 entries");
    sc.xi0 << v[0], v[1];
  }

  OcpSpec& ocp = sc.ocp;
  ocp.weights = {cfg.number_or("w_sigma", 1.0), cfg.number_or("w_lambda", 0.05),
                 cfg.number_or("w_u", 0.01), 0.0};
  const OcpWeights w = ocp.weights;
  ocp.running_cost = [w](const VectorXd&, const MatrixXd& sigma,
                         const VectorXd& u, const VectorXd& lambda,
                         const VectorXd&, double) {
    return w.w_sigma * sigma.trace() + w.w_lambda * lambda.squaredNorm() +
           w.w_u * u.squaredNorm();
  };
  const double u_max = cfg.number_or("u_max", 1.0);
  ocp.input_lower = VectorXd::Zero(2);
  ocp.input_upper = VectorXd::Constant(2, u_max);
  ocp.rate_upper = cfg.number_or("rate_upper",
                                 std::numeric_limits<double>::infinity());
  ocp.slack_dim = 0;
  if (cfg.has("c_xi")) {
    const double c_xi = cfg.number("c_xi");
    ocp.running_constraints = [c_xi](const VectorXd& xi, const MatrixXd&,
                                     const VectorXd&, const VectorXd&,
                                     const VectorXd&, double) {
      VectorXd rows(2);
      rows << xi(0) - c_xi, xi(1) - c_xi;
      return rows;
    };
  }

  sc.greedy.sensor_cost = VectorXd(2);
  sc.greedy.sensor_cost << cfg.number_or("greedy_cost_1", 0.01),
      cfg.number_or("greedy_cost_2", 0.01);
  sc.m_opt_samples = static_cast<int>(cfg.number_or("m_opt_samples", 50));
  sc.m_opt_penalty = cfg.number_or("m_opt_penalty", 1e3);
  sc.meas_cost = VectorXd::Zero(2);
  sc.random_event_budget = cfg.number_or("random_n_events", grid_n);
  sc.truth_step = cfg.number_or("truth_step", sc.grid.dt(0) / 20.0);
  sc.solver = solver_options(cfg);

  sc.signals.push_back(
      {"trace", [](const VectorXd&, const VectorXd&, double tr) { return tr; }});
  sc.signals.push_back(
      {"fouling_1",
       [](const VectorXd&, const VectorXd& xi, double) { return xi(0); }});
  sc.signals.push_back(
      {"fouling_2",
       [](const VectorXd&, const VectorXd& xi, double) { return xi(1); }});
  return sc;
}

Scenario build_scenario(const ScenarioConfig& cfg) {
  const std::string kind = cfg.text_or("scenario", "");
  if (kind == "robot") {
    return build_robot_scenario(cfg, cfg.flag_or("with_radiation", false));
  }
  if (kind == "water") return build_water_scenario(cfg);
  throw ConfigError("unknown scenario kind: '" + kind + "'");
}

std::function<double(const Schedule&)> make_schedule_evaluator(
    const Scenario& scenario, const InputPlan& input_plan) {
  // Captured by value so the evaluator outlives its caller's locals.
  const Scenario sc = scenario;
  const InputPlan plan = input_plan;
  return [sc, plan](const Schedule& schedule) {
    const EventDrivenPath path = propagate_event_driven(
        sc.process, sc.aux, sc.sensors, schedule, plan, sc.grid,
        sc.prior.cov(), sc.xi0);
    const VectorXd zero_lambda = VectorXd::Zero(
        static_cast<Eigen::Index>(sc.sensors.size()));
    const VectorXd zero_eps = VectorXd::Zero(sc.ocp.slack_dim);
    double cost = 0.0;
    for (int k = 0; k < sc.grid.num_nodes(); ++k) {
      const double t = sc.grid.nodes()[k];
      const VectorXd u = plan.value_of_interval(
          std::min(k, sc.grid.num_intervals() - 1));
      double penalty = 0.0;
      if (sc.ocp.running_constraints) {
        const VectorXd rows = sc.ocp.running_constraints(
            path.xi_nodes[k], path.sigma_nodes[k], u, zero_lambda, zero_eps, t);
        penalty += rows.cwiseMax(0.0).sum();
      }
      if (k == sc.grid.num_nodes() - 1 && sc.ocp.terminal_constraints) {
        const VectorXd rows = sc.ocp.terminal_constraints(
            path.xi_nodes[k], path.sigma_nodes[k], u, zero_lambda, zero_eps, t);
        penalty += rows.cwiseMax(0.0).sum();
      }
      double stage = 0.0;
      if (sc.ocp.running_cost && k < sc.grid.num_nodes() - 1) {
        stage = sc.grid.dt(k) *
                sc.ocp.running_cost(path.xi_nodes[k], path.sigma_nodes[k], u,
                                    zero_lambda, zero_eps, t);
      }
      const double weight =
          (k < sc.grid.num_nodes() - 1) ? sc.grid.dt(k) : sc.grid.dt(k - 1);
      cost += stage + sc.m_opt_penalty * weight * penalty;
    }
    for (std::size_t s = 0; s < schedule.times.size(); ++s) {
      cost += sc.meas_cost(static_cast<Eigen::Index>(s)) *
              static_cast<double>(schedule.times[s].size());
    }
    return cost;
  };
}

}  // namespace cdkf
