#pragma once

#include <string>
#include <vector>

// vendor single-header nlohmann/json
#include <json.hpp>

#include "cdkf/model.hpp"
#include "cdkf/ocp.hpp"
#include "cdkf/simulate.hpp"

namespace cdkf {

/// Flat key/value scenario configuration (JSON). Keys are the model symbol
/// names in snake_case; see configs/schema.md for units and defaults.
class ScenarioConfig {
 public:
  static ScenarioConfig from_file(const std::string& path);
  static ScenarioConfig from_json(nlohmann::json j);

  bool has(const std::string& key) const;
  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  std::vector<double> array(const std::string& key) const;
  std::string text_or(const std::string& key, const std::string& fallback) const;
  bool flag_or(const std::string& key, bool fallback) const;
  const nlohmann::json& raw() const { return json_; }

 private:
  nlohmann::json json_;
};

/// Named signal extracted from a truth run for run statistics.
struct SignalDef {
  std::string name;
  std::function<double(const VectorXd& x, const VectorXd& xi, double trace)>
      value;
};

/// Fully assembled experiment: model bundle, planning problem and the knobs
/// used by the baselines and the simulation pipeline.
struct Scenario {
  std::string name;
  ProcessModel process;
  AuxModel aux;
  std::vector<Sensor> sensors;
  OcpSpec ocp;
  TimeGrid grid{std::vector<double>{0.0, 1.0}};
  GaussianBelief prior;
  VectorXd xi0;
  // Added to the model state for reporting (e.g. an ambient level the
  // internal state is measured relative to).
  VectorXd state_offset;

  GreedyConfig greedy;
  int m_opt_samples = 50;
  double m_opt_penalty = 1e3;
  VectorXd meas_cost;          // per-event cost in the schedule evaluator
  double random_event_budget = 0.0;  // N_O of the random baseline
  double truth_step = 0.0;
  std::vector<SignalDef> signals;
  SolveOptions solver;
};

/// Builds the mobile-robot monitoring scenario: Matern-3/2 process, unicycle
/// auxiliary kinematics, energy (and optionally radiation-damage) states,
/// distance-dependent sensor noise.
Scenario build_robot_scenario(const ScenarioConfig& cfg, bool with_radiation);

/// Builds the water-quality scenario: scalar mean-reverting process, two
/// fouling states with active-defouling inputs, fouling-dependent noise.
Scenario build_water_scenario(const ScenarioConfig& cfg);

/// Dispatches on the config's "scenario" key ("robot" or "water"),
/// honoring "with_radiation".
Scenario build_scenario(const ScenarioConfig& cfg);

/// Deterministic penalized-cost evaluator over a fixed schedule: running
/// cost along the event-driven bound propagation plus constraint-violation
/// penalties and per-event costs.
std::function<double(const Schedule&)> make_schedule_evaluator(
    const Scenario& scenario, const InputPlan& input_plan);

}  // namespace cdkf
