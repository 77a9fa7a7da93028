#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "cdkf/bounds.hpp"
#include "cdkf/model.hpp"

namespace cdkf {

/// Named cost weights, kept for introspection; the cost callbacks are the
/// source of truth.
struct OcpWeights {
  double w_sigma = 0.0;
  double w_lambda = 0.0;
  double w_u = 0.0;
  double w_eps = 0.0;
};

/// Finite-horizon optimal control problem over the bound dynamics. Running
/// and terminal constraints use the <= 0 feasible convention; the returned
/// row count may depend on t (e.g. constraints active on a sub-window) but
/// must be a function of t only.
struct OcpSpec {
  using CostFn = std::function<double(const VectorXd& xi_hat,
                                      const MatrixXd& sigma_hat,
                                      const VectorXd& u, const VectorXd& lambda,
                                      const VectorXd& eps, double t)>;
  using ConstraintFn = std::function<VectorXd(const VectorXd& xi_hat,
                                              const MatrixXd& sigma_hat,
                                              const VectorXd& u,
                                              const VectorXd& lambda,
                                              const VectorXd& eps, double t)>;

  CostFn running_cost;            // integrated with the rectangle rule
  CostFn terminal_cost;           // may be null (zero)
  ConstraintFn running_constraints;   // may be null (none)
  ConstraintFn terminal_constraints;  // may be null (none)
  VectorXd input_lower, input_upper;  // box on u; sizes define m_u
  double rate_upper = std::numeric_limits<double>::infinity();
  int slack_dim = 0;
  OcpWeights weights;
};

/// Flat layout of the decision vector: per node k the variables are
/// [u | lambda | eps | xi_hat | chol], where chol stores the lower triangle
/// of L_k column-major and Sigma_hat_k = L_k L_k^T.
struct DecisionLayout {
  int num_nodes = 0;
  int m_u = 0;
  int num_sensors = 0;
  int slack_dim = 0;
  int n_xi = 0;
  int n = 0;

  int chol_dim() const { return n * (n + 1) / 2; }
  int per_node() const {
    return m_u + num_sensors + slack_dim + n_xi + chol_dim();
  }
  int num_vars() const { return num_nodes * per_node(); }
  int node_offset(int k) const { return k * per_node(); }
  int u_index(int k, int i) const { return node_offset(k) + i; }
  int lambda_index(int k, int s) const { return node_offset(k) + m_u + s; }
  int eps_index(int k, int i) const {
    return node_offset(k) + m_u + num_sensors + i;
  }
  int xi_index(int k, int i) const {
    return node_offset(k) + m_u + num_sensors + slack_dim + i;
  }
  int chol_index(int k, int i, int j) const;  // i >= j
  bool chol_is_diagonal(int local_index) const;

  MatrixXd chol_of_node(const VectorXd& z, int k) const;
  void set_chol_of_node(VectorXd& z, int k, const MatrixXd& L) const;
  VectorXd u_of_node(const VectorXd& z, int k) const;
  VectorXd lambda_of_node(const VectorXd& z, int k) const;
  VectorXd eps_of_node(const VectorXd& z, int k) const;
  VectorXd xi_of_node(const VectorXd& z, int k) const;
};

/// Flat decision vector; interpret through a DecisionLayout.
struct DecisionVector {
  VectorXd z;
};

/// Sparse derivative of (objective, eq, ineq) with respect to one coordinate.
struct DerivColumn {
  double d_objective = 0.0;
  std::vector<std::pair<int, double>> d_eq;
  std::vector<std::pair<int, double>> d_ineq;
};

/// Generic nonlinear program with simple bounds, equality and inequality
/// (<= 0) constraints.
struct Nlp {
  int num_vars = 0;
  int num_eq = 0;
  int num_ineq = 0;
  VectorXd lower, upper;
  std::function<double(const VectorXd&)> objective;
  std::function<VectorXd(const VectorXd&)> eq;    // null = none
  std::function<VectorXd(const VectorXd&)> ineq;  // null = none
  // Per-coordinate derivative oracle; null = dense central differences.
  std::function<DerivColumn(const VectorXd&, int)> deriv_column;
};

struct SolveOptions {
  double feas_tol = 1e-6;
  double opt_tol = 1e-6;
  int max_outer = 30;
  int max_inner = 400;
  double penalty_init = 10.0;
  double penalty_growth = 10.0;
};

struct NlpDiagnostics {
  bool converged = false;
  int outer_iterations = 0;
  int inner_iterations = 0;
  double objective = 0.0;
  double max_violation = 0.0;
  double proj_grad_norm = 0.0;
  // Augmented-Lagrangian merit values of the accepted inner iterates, one
  // list per outer iteration (the merit function changes between outers).
  std::vector<std::vector<double>> merit_history;
};

struct NlpResult {
  VectorXd x;
  NlpDiagnostics diagnostics;
};

/// Augmented-Lagrangian solver: outer loop on the constraints, inner
/// projected quasi-Newton descent on the simple bounds. Never throws on
/// nonconvergence; the best iterate is returned with converged == false.
NlpResult minimize_nlp(const Nlp& nlp, const VectorXd& x0,
                       const SolveOptions& opts);

/// Max relative error between the solver-used derivatives and dense central
/// finite differences over `num_coords` random coordinates.
double gradient_check(const Nlp& nlp, const VectorXd& point,
                      int num_coords = 20, std::uint64_t seed = 1234);

/// Direct-collocation transcription of an OcpSpec: forward-Euler defect
/// equalities for the auxiliary bound and the Cholesky-parametrized
/// covariance bound, inequality rows from the spec callbacks, and simple
/// bounds (rates >= 0, slack >= 0, input box, Cholesky diagonal floor,
/// initial conditions pinned).
class TranscribedOcp {
 public:
  const Nlp& nlp() const { return nlp_; }
  const DecisionLayout& layout() const { return layout_; }
  const TimeGrid& grid() const { return grid_; }

  /// Decision vector from explicit Euler roll-forward of node-valued rates
  /// (S x N) and inputs (m_u x N); defects vanish by construction.
  DecisionVector roll_forward(const MatrixXd& node_rates,
                              const MatrixXd& node_inputs) const;

  /// Default initialization: rates at 1.0 (clamped into bounds), inputs at
  /// the box midpoint, states rolled forward so the defects start feasible.
  DecisionVector initial_guess() const;

  // internal
  struct Context;
  std::shared_ptr<const Context> context() const { return ctx_; }

 private:
  friend TranscribedOcp transcribe(const OcpSpec&, const ProcessModel&,
                                   const AuxModel&, const std::vector<Sensor>&,
                                   const TimeGrid&, const MatrixXd&,
                                   const VectorXd&);
  Nlp nlp_;
  DecisionLayout layout_;
  TimeGrid grid_{std::vector<double>{0.0, 1.0}};
  std::shared_ptr<const Context> ctx_;
};

TranscribedOcp transcribe(const OcpSpec& spec, const ProcessModel& process,
                          const AuxModel& aux,
                          const std::vector<Sensor>& sensors,
                          const TimeGrid& grid, const MatrixXd& sigma0,
                          const VectorXd& xi0);

/// Optimized plan with solver diagnostics.
struct OcpSolution {
  RatePlan rate_plan;
  InputPlan input_plan;
  MatrixXd node_rates;   // S x N, raw node values
  MatrixXd node_inputs;  // m_u x N
  MatrixXd slack;        // slack_dim x N
  BoundTrajectory bound;
  NlpDiagnostics diagnostics;
};

OcpSolution solve_nlp(const TranscribedOcp& ocp, const DecisionVector& init,
                      const SolveOptions& opts);

/// Node-valued rates/inputs to interval-constant plans by the left-node
/// convention; negative round-off on rates is clamped to zero.
std::pair<RatePlan, InputPlan> extract_plan(const MatrixXd& node_rates,
                                            const MatrixXd& node_inputs,
                                            const TimeGrid& grid);
std::pair<RatePlan, InputPlan> extract_plan(const OcpSolution& sol);

}  // namespace cdkf
