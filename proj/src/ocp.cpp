#include "cdkf/ocp.hpp"

#include <algorithm>
#include <cmath>

namespace cdkf {

int DecisionLayout::chol_index(int k, int i, int j) const {
  // Lower triangle, column-major: entries (j..n-1, j) for each column j.
  const int base = node_offset(k) + m_u + num_sensors + slack_dim + n_xi;
  const int col_start = j * n - j * (j - 1) / 2;
  return base + col_start + (i - j);
}

bool DecisionLayout::chol_is_diagonal(int local_index) const {
  // local_index counts within the chol block of a node.
  int idx = local_index;
  for (int j = 0; j < n; ++j) {
    const int len = n - j;
    if (idx == 0) return true;
    if (idx < len) return false;
    idx -= len;
  }
  return false;
}

MatrixXd DecisionLayout::chol_of_node(const VectorXd& z, int k) const {
  MatrixXd L = MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) L(i, j) = z(chol_index(k, i, j));
  }
  return L;
}

void DecisionLayout::set_chol_of_node(VectorXd& z, int k,
                                      const MatrixXd& L) const {
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) z(chol_index(k, i, j)) = L(i, j);
  }
}

VectorXd DecisionLayout::u_of_node(const VectorXd& z, int k) const {
  return z.segment(node_offset(k), m_u);
}
VectorXd DecisionLayout::lambda_of_node(const VectorXd& z, int k) const {
  return z.segment(node_offset(k) + m_u, num_sensors);
}
VectorXd DecisionLayout::eps_of_node(const VectorXd& z, int k) const {
  return z.segment(node_offset(k) + m_u + num_sensors, slack_dim);
}
VectorXd DecisionLayout::xi_of_node(const VectorXd& z, int k) const {
  return z.segment(node_offset(k) + m_u + num_sensors + slack_dim, n_xi);
}

namespace {

constexpr double kCholDiagFloor = 1e-8;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Cholesky factor of a (possibly just-PSD) symmetric matrix, eigenvalues
// clamped so the factorization exists and the diagonal respects the floor.
MatrixXd robust_cholesky(const MatrixXd& sigma) {
  MatrixXd sym = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<MatrixXd> llt(sym);
  if (llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    sym = es.eigenvectors() *
          es.eigenvalues().cwiseMax(1e-16).asDiagonal() *
          es.eigenvectors().transpose();
    llt.compute(0.5 * (sym + sym.transpose()));
    if (llt.info() != Eigen::Success) {
      throw TranscriptionError("could not factorize a covariance iterate");
    }
  }
  MatrixXd L = llt.matrixL();
  for (int i = 0; i < L.rows(); ++i) {
    L(i, i) = std::max(L(i, i), kCholDiagFloor);
  }
  return L;
}

VectorXd lower_triangle_vec(const MatrixXd& m) {
  const int n = static_cast<int>(m.rows());
  VectorXd v(n * (n + 1) / 2);
  int idx = 0;
  for (int j = 0; j < n; ++j) {
    for (int i = j; i < n; ++i) v(idx++) = m(i, j);
  }
  return v;
}

}  // namespace

struct TranscribedOcp::Context {
  OcpSpec spec;
  ProcessModel process;
  AuxModel aux;
  std::vector<Sensor> sensors;
  TimeGrid grid{std::vector<double>{0.0, 1.0}};
  MatrixXd sigma0;
  VectorXd xi0;
  MatrixXd chol0;
  DecisionLayout layout;

  std::vector<int> ineq_offset;  // per node
  std::vector<int> ineq_count;   // per node, includes terminal rows at N-1
  int num_ineq = 0;

  int defect_block_size() const { return layout.n_xi + layout.chol_dim(); }
  int num_eq() const {
    return (layout.num_nodes - 1) * defect_block_size();
  }

  VectorXd defect_block(const VectorXd& z, int b) const {
    const DecisionLayout& lo = layout;
    const double t = grid.nodes()[b];
    const double h = grid.dt(b);
    const VectorXd xi_k = lo.xi_of_node(z, b);
    const VectorXd xi_k1 = lo.xi_of_node(z, b + 1);
    const VectorXd u_k = lo.u_of_node(z, b);
    const VectorXd lambda_k = lo.lambda_of_node(z, b);
    const MatrixXd L_k = lo.chol_of_node(z, b);
    const MatrixXd L_k1 = lo.chol_of_node(z, b + 1);
    const MatrixXd sigma_k = L_k * L_k.transpose();

    VectorXd out(defect_block_size());
    out.head(lo.n_xi) =
        xi_k1 - xi_k -
        h * aux_bound_rhs(xi_k, u_k, lambda_k, aux, sensors, t);
    const MatrixXd defect =
        L_k1 * L_k1.transpose() - sigma_k -
        h * sigma_bound_rhs(sigma_k, xi_k, lambda_k, sensors, process, t);
    out.tail(lo.chol_dim()) = lower_triangle_vec(defect);
    return out;
  }

  double cost_terms_of_node(const VectorXd& z, int k) const {
    const DecisionLayout& lo = layout;
    const MatrixXd L = lo.chol_of_node(z, k);
    const MatrixXd sigma = L * L.transpose();
    const VectorXd xi = lo.xi_of_node(z, k);
    const VectorXd u = lo.u_of_node(z, k);
    const VectorXd lambda = lo.lambda_of_node(z, k);
    const VectorXd eps = lo.eps_of_node(z, k);
    const double t = grid.nodes()[k];
    double val = 0.0;
    if (k < lo.num_nodes - 1 && spec.running_cost) {
      val += grid.dt(k) * spec.running_cost(xi, sigma, u, lambda, eps, t);
    }
    if (k == lo.num_nodes - 1 && spec.terminal_cost) {
      val += spec.terminal_cost(xi, sigma, u, lambda, eps, t);
    }
    return val;
  }

  VectorXd ineq_rows_of_node(const VectorXd& z, int k) const {
    const DecisionLayout& lo = layout;
    VectorXd rows(ineq_count[k]);
    if (ineq_count[k] == 0) return rows;
    const MatrixXd L = lo.chol_of_node(z, k);
    const MatrixXd sigma = L * L.transpose();
    const VectorXd xi = lo.xi_of_node(z, k);
    const VectorXd u = lo.u_of_node(z, k);
    const VectorXd lambda = lo.lambda_of_node(z, k);
    const VectorXd eps = lo.eps_of_node(z, k);
    const double t = grid.nodes()[k];
    int idx = 0;
    if (spec.running_constraints) {
      const VectorXd c = spec.running_constraints(xi, sigma, u, lambda, eps, t);
      if (idx + c.size() > rows.size()) {
        throw TranscriptionError(
            "running constraint row count changed between evaluations");
      }
      rows.segment(idx, c.size()) = c;
      idx += static_cast<int>(c.size());
    }
    if (k == lo.num_nodes - 1 && spec.terminal_constraints) {
      const VectorXd c =
          spec.terminal_constraints(xi, sigma, u, lambda, eps, t);
      rows.segment(idx, c.size()) = c;
      idx += static_cast<int>(c.size());
    }
    if (idx != rows.size()) {
      throw TranscriptionError(
          "constraint row count changed between evaluations");
    }
    return rows;
  }
};

TranscribedOcp transcribe(const OcpSpec& spec, const ProcessModel& process,
                          const AuxModel& aux,
                          const std::vector<Sensor>& sensors,
                          const TimeGrid& grid, const MatrixXd& sigma0,
                          const VectorXd& xi0) {
  if (grid.num_nodes() < 3) {
    throw TranscriptionError("transcription needs a grid with >= 3 nodes");
  }
  if (spec.input_lower.size() != spec.input_upper.size()) {
    throw TranscriptionError("input box bounds must have equal sizes");
  }
  for (int i = 0; i < spec.input_lower.size(); ++i) {
    if (!(spec.input_lower(i) <= spec.input_upper(i))) {
      throw TranscriptionError("input box bounds must be ordered");
    }
  }
  if (xi0.size() != aux.n_xi) {
    throw TranscriptionError("xi0 dimension does not match the aux model");
  }
  if (sigma0.rows() != process.n || sigma0.cols() != process.n) {
    throw TranscriptionError("sigma0 must be n x n");
  }
  if (spec.slack_dim < 0) throw TranscriptionError("slack_dim must be >= 0");

  auto ctx = std::make_shared<TranscribedOcp::Context>();
  ctx->spec = spec;
  ctx->process = process;
  ctx->aux = aux;
  ctx->sensors = sensors;
  ctx->grid = grid;
  ctx->sigma0 = floored_spd(sigma0);
  ctx->xi0 = xi0;
  ctx->chol0 = robust_cholesky(ctx->sigma0);

  DecisionLayout& lo = ctx->layout;
  lo.num_nodes = grid.num_nodes();
  lo.m_u = static_cast<int>(spec.input_lower.size());
  lo.num_sensors = static_cast<int>(sensors.size());
  lo.slack_dim = spec.slack_dim;
  lo.n_xi = aux.n_xi;
  lo.n = process.n;

  // Probe constraint row counts per node (they may depend on t only).
  const VectorXd probe_u =
      0.5 * (spec.input_lower.cwiseMax(-1.0) + spec.input_upper.cwiseMin(1.0));
  const VectorXd probe_lambda = VectorXd::Ones(lo.num_sensors);
  const VectorXd probe_eps = VectorXd::Zero(lo.slack_dim);
  ctx->ineq_offset.resize(lo.num_nodes);
  ctx->ineq_count.resize(lo.num_nodes);
  int offset = 0;
  for (int k = 0; k < lo.num_nodes; ++k) {
    int count = 0;
    if (spec.running_constraints) {
      count += static_cast<int>(
          spec.running_constraints(xi0, ctx->sigma0, probe_u, probe_lambda,
                                   probe_eps, grid.nodes()[k])
              .size());
    }
    if (k == lo.num_nodes - 1 && spec.terminal_constraints) {
      count += static_cast<int>(
          spec.terminal_constraints(xi0, ctx->sigma0, probe_u, probe_lambda,
                                    probe_eps, grid.nodes()[k])
              .size());
    }
    ctx->ineq_offset[k] = offset;
    ctx->ineq_count[k] = count;
    offset += count;
  }
  ctx->num_ineq = offset;

  TranscribedOcp ocp;
  ocp.ctx_ = ctx;
  ocp.layout_ = lo;
  ocp.grid_ = grid;

  Nlp& nlp = ocp.nlp_;
  nlp.num_vars = lo.num_vars();
  nlp.num_eq = ctx->num_eq();
  nlp.num_ineq = ctx->num_ineq;
  nlp.lower = VectorXd::Constant(nlp.num_vars, -kInf);
  nlp.upper = VectorXd::Constant(nlp.num_vars, kInf);
  for (int k = 0; k < lo.num_nodes; ++k) {
    for (int i = 0; i < lo.m_u; ++i) {
      nlp.lower(lo.u_index(k, i)) = spec.input_lower(i);
      nlp.upper(lo.u_index(k, i)) = spec.input_upper(i);
    }
    for (int s = 0; s < lo.num_sensors; ++s) {
      nlp.lower(lo.lambda_index(k, s)) = 0.0;
      nlp.upper(lo.lambda_index(k, s)) = spec.rate_upper;
    }
    for (int i = 0; i < lo.slack_dim; ++i) {
      nlp.lower(lo.eps_index(k, i)) = 0.0;
    }
    for (int j = 0; j < lo.n; ++j) {
      nlp.lower(lo.chol_index(k, j, j)) = kCholDiagFloor;
    }
  }
  // Initial conditions pinned through the bounds.
  for (int i = 0; i < lo.n_xi; ++i) {
    nlp.lower(lo.xi_index(0, i)) = xi0(i);
    nlp.upper(lo.xi_index(0, i)) = xi0(i);
  }
  for (int j = 0; j < lo.n; ++j) {
    for (int i = j; i < lo.n; ++i) {
      nlp.lower(lo.chol_index(0, i, j)) = ctx->chol0(i, j);
      nlp.upper(lo.chol_index(0, i, j)) = ctx->chol0(i, j);
    }
  }

  std::shared_ptr<const TranscribedOcp::Context> c = ctx;
  nlp.objective = [c](const VectorXd& z) {
    double val = 0.0;
    for (int k = 0; k < c->layout.num_nodes; ++k) {
      val += c->cost_terms_of_node(z, k);
    }
    return val;
  };
  nlp.eq = [c](const VectorXd& z) {
    VectorXd out(c->num_eq());
    const int bs = c->defect_block_size();
    for (int b = 0; b < c->layout.num_nodes - 1; ++b) {
      out.segment(b * bs, bs) = c->defect_block(z, b);
    }
    return out;
  };
  if (ctx->num_ineq > 0) {
    nlp.ineq = [c](const VectorXd& z) {
      VectorXd out(c->num_ineq);
      for (int k = 0; k < c->layout.num_nodes; ++k) {
        if (c->ineq_count[k] > 0) {
          out.segment(c->ineq_offset[k], c->ineq_count[k]) =
              c->ineq_rows_of_node(z, k);
        }
      }
      return out;
    };
  }
  nlp.deriv_column = [c](const VectorXd& z, int i) {
    const DecisionLayout& lo = c->layout;
    const int k = i / lo.per_node();
    const double h = 1e-7 * (1.0 + std::abs(z(i)));
    VectorXd zs = z;
    DerivColumn col;

    auto with_perturbation = [&](auto&& eval) {
      zs(i) = z(i) + h;
      const auto plus = eval(zs);
      zs(i) = z(i) - h;
      const auto minus = eval(zs);
      zs(i) = z(i);
      return std::make_pair(plus, minus);
    };

    {
      auto [plus, minus] = with_perturbation(
          [&](const VectorXd& zz) { return c->cost_terms_of_node(zz, k); });
      col.d_objective = (plus - minus) / (2.0 * h);
    }
    const int bs = c->defect_block_size();
    for (int b : {k - 1, k}) {
      if (b < 0 || b >= lo.num_nodes - 1) continue;
      auto [plus, minus] = with_perturbation(
          [&](const VectorXd& zz) { return c->defect_block(zz, b); });
      const VectorXd d = (plus - minus) / (2.0 * h);
      for (int r = 0; r < d.size(); ++r) {
        if (d(r) != 0.0) col.d_eq.push_back({b * bs + r, d(r)});
      }
    }
    if (c->ineq_count[k] > 0) {
      auto [plus, minus] = with_perturbation(
          [&](const VectorXd& zz) { return c->ineq_rows_of_node(zz, k); });
      const VectorXd d = (plus - minus) / (2.0 * h);
      for (int r = 0; r < d.size(); ++r) {
        if (d(r) != 0.0) col.d_ineq.push_back({c->ineq_offset[k] + r, d(r)});
      }
    }
    return col;
  };

  return ocp;
}

DecisionVector TranscribedOcp::roll_forward(const MatrixXd& node_rates,
                                            const MatrixXd& node_inputs) const {
  const auto& c = *ctx_;
  const DecisionLayout& lo = layout_;
  if (node_rates.rows() != lo.num_sensors || node_rates.cols() != lo.num_nodes ||
      node_inputs.rows() != lo.m_u || node_inputs.cols() != lo.num_nodes) {
    throw TranscriptionError("roll_forward: node value shapes do not match");
  }
  DecisionVector dv;
  dv.z = VectorXd::Zero(lo.num_vars());
  VectorXd xi = c.xi0;
  MatrixXd L = c.chol0;
  for (int k = 0; k < lo.num_nodes; ++k) {
    for (int i = 0; i < lo.m_u; ++i) dv.z(lo.u_index(k, i)) = node_inputs(i, k);
    for (int s = 0; s < lo.num_sensors; ++s) {
      dv.z(lo.lambda_index(k, s)) = node_rates(s, k);
    }
    dv.z.segment(lo.xi_index(k, 0), lo.n_xi) = xi;
    lo.set_chol_of_node(dv.z, k, L);
    if (k == lo.num_nodes - 1) break;

    const double t = grid_.nodes()[k];
    const double h = grid_.dt(k);
    const MatrixXd sigma = L * L.transpose();
    const VectorXd lambda_k = node_rates.col(k);
    const VectorXd u_k = node_inputs.col(k);
    xi = xi + h * aux_bound_rhs(xi, u_k, lambda_k, c.aux, c.sensors, t);
    const MatrixXd sigma_next =
        sigma + h * sigma_bound_rhs(sigma, lo.xi_of_node(dv.z, k), lambda_k,
                                    c.sensors, c.process, t);
    L = robust_cholesky(sigma_next);
  }
  return dv;
}

DecisionVector TranscribedOcp::initial_guess() const {
  const auto& c = *ctx_;
  const DecisionLayout& lo = layout_;
  double rate0 = 1.0;
  if (std::isfinite(c.spec.rate_upper)) {
    rate0 = std::min(1.0, 0.5 * c.spec.rate_upper);
  }
  MatrixXd rates = MatrixXd::Constant(lo.num_sensors, lo.num_nodes, rate0);
  MatrixXd inputs(lo.m_u, lo.num_nodes);
  for (int i = 0; i < lo.m_u; ++i) {
    const double lb = c.spec.input_lower(i);
    const double ub = c.spec.input_upper(i);
    double mid = 0.0;
    if (std::isfinite(lb) && std::isfinite(ub)) {
      mid = 0.5 * (lb + ub);
    } else if (std::isfinite(lb)) {
      mid = lb + 1.0;
    } else if (std::isfinite(ub)) {
      mid = ub - 1.0;
    }
    inputs.row(i).setConstant(mid);
  }
  return roll_forward(rates, inputs);
}

std::pair<RatePlan, InputPlan> extract_plan(const MatrixXd& node_rates,
                                            const MatrixXd& node_inputs,
                                            const TimeGrid& grid) {
  const int intervals = grid.num_intervals();
  MatrixXd rates = node_rates.leftCols(intervals).cwiseMax(0.0);
  MatrixXd inputs = node_inputs.leftCols(intervals);
  return {RatePlan(grid, std::move(rates)), InputPlan(grid, std::move(inputs))};
}

std::pair<RatePlan, InputPlan> extract_plan(const OcpSolution& sol) {
  return extract_plan(sol.node_rates, sol.node_inputs,
                      sol.rate_plan.grid());
}

OcpSolution solve_nlp(const TranscribedOcp& ocp, const DecisionVector& init,
                      const SolveOptions& opts) {
  const auto& c = *ocp.context();
  const DecisionLayout& lo = ocp.layout();
  NlpResult res = minimize_nlp(ocp.nlp(), init.z, opts);

  MatrixXd node_rates(lo.num_sensors, lo.num_nodes);
  MatrixXd node_inputs(lo.m_u, lo.num_nodes);
  MatrixXd slack(lo.slack_dim, lo.num_nodes);
  BoundTrajectory bound{ocp.grid(), {}, {},
                        c.aux.convexity_tag == ConvexityTag::None};
  for (int k = 0; k < lo.num_nodes; ++k) {
    node_rates.col(k) = lo.lambda_of_node(res.x, k);
    node_inputs.col(k) = lo.u_of_node(res.x, k);
    slack.col(k) = lo.eps_of_node(res.x, k);
    const MatrixXd L = lo.chol_of_node(res.x, k);
    bound.sigma_hat.push_back(L * L.transpose());
    bound.xi_hat.push_back(lo.xi_of_node(res.x, k));
  }
  auto [rate_plan, input_plan] =
      extract_plan(node_rates, node_inputs, ocp.grid());
  return OcpSolution{std::move(rate_plan), std::move(input_plan),
                     std::move(node_rates), std::move(node_inputs),
                     std::move(slack), std::move(bound),
                     std::move(res.diagnostics)};
}

}  // namespace cdkf
