#include <algorithm>
#include <cmath>
#include <deque>

#include "cdkf/ocp.hpp"
#include "cdkf/rng.hpp"

namespace cdkf {

namespace {

VectorXd clamp_to_bounds(const Nlp& nlp, VectorXd x) {
  for (int i = 0; i < nlp.num_vars; ++i) {
    x(i) = std::min(std::max(x(i), nlp.lower(i)), nlp.upper(i));
  }
  return x;
}

VectorXd eval_eq(const Nlp& nlp, const VectorXd& x) {
  return nlp.eq ? nlp.eq(x) : VectorXd();
}

VectorXd eval_ineq(const Nlp& nlp, const VectorXd& x) {
  return nlp.ineq ? nlp.ineq(x) : VectorXd();
}

double violation(const VectorXd& ceq, const VectorXd& cin) {
  double v = 0.0;
  if (ceq.size() > 0) v = ceq.cwiseAbs().maxCoeff();
  if (cin.size() > 0) v = std::max(v, cin.cwiseMax(0.0).maxCoeff());
  return v;
}

DerivColumn dense_central_column(const Nlp& nlp, const VectorXd& x, int i,
                                 double h) {
  VectorXd xp = x, xm = x;
  xp(i) += h;
  xm(i) -= h;
  DerivColumn col;
  col.d_objective = (nlp.objective(xp) - nlp.objective(xm)) / (2.0 * h);
  if (nlp.eq) {
    const VectorXd d = (nlp.eq(xp) - nlp.eq(xm)) / (2.0 * h);
    for (int r = 0; r < d.size(); ++r) {
      if (d(r) != 0.0) col.d_eq.push_back({r, d(r)});
    }
  }
  if (nlp.ineq) {
    const VectorXd d = (nlp.ineq(xp) - nlp.ineq(xm)) / (2.0 * h);
    for (int r = 0; r < d.size(); ++r) {
      if (d(r) != 0.0) col.d_ineq.push_back({r, d(r)});
    }
  }
  return col;
}

DerivColumn solver_column(const Nlp& nlp, const VectorXd& x, int i) {
  if (nlp.deriv_column) return nlp.deriv_column(x, i);
  return dense_central_column(nlp, x, i, 1e-7 * (1.0 + std::abs(x(i))));
}

struct AlState {
  VectorXd mu;  // equality multipliers
  VectorXd nu;  // inequality multipliers (>= 0)
  double rho = 10.0;
};

// Augmented Lagrangian value: f + mu'c + rho/2 |c|^2 for equalities and the
// Rockafellar form for inequalities.
double al_value(const Nlp& nlp, const AlState& al, const VectorXd& x,
                double* f_out = nullptr, VectorXd* ceq_out = nullptr,
                VectorXd* cin_out = nullptr) {
  const double f = nlp.objective(x);
  const VectorXd ceq = eval_eq(nlp, x);
  const VectorXd cin = eval_ineq(nlp, x);
  double val = f;
  for (int i = 0; i < ceq.size(); ++i) {
    val += al.mu(i) * ceq(i) + 0.5 * al.rho * ceq(i) * ceq(i);
  }
  for (int i = 0; i < cin.size(); ++i) {
    const double shifted = std::max(0.0, al.nu(i) + al.rho * cin(i));
    val += (shifted * shifted - al.nu(i) * al.nu(i)) / (2.0 * al.rho);
  }
  if (f_out) *f_out = f;
  if (ceq_out) *ceq_out = ceq;
  if (cin_out) *cin_out = cin;
  return val;
}

VectorXd al_gradient(const Nlp& nlp, const AlState& al, const VectorXd& x,
                     const VectorXd& ceq, const VectorXd& cin) {
  VectorXd y_eq = ceq.size() > 0 ? (al.mu + al.rho * ceq).eval() : VectorXd();
  VectorXd y_in = cin.size() > 0
                      ? (al.nu + al.rho * cin).cwiseMax(0.0).eval()
                      : VectorXd();
  VectorXd g = VectorXd::Zero(nlp.num_vars);
  for (int i = 0; i < nlp.num_vars; ++i) {
    const DerivColumn col = solver_column(nlp, x, i);
    double gi = col.d_objective;
    for (const auto& [r, v] : col.d_eq) gi += y_eq(r) * v;
    for (const auto& [r, v] : col.d_ineq) gi += y_in(r) * v;
    g(i) = gi;
  }
  return g;
}

double projected_gradient_norm(const Nlp& nlp, const VectorXd& x,
                               const VectorXd& g) {
  double norm = 0.0;
  for (int i = 0; i < nlp.num_vars; ++i) {
    const double step = std::min(std::max(x(i) - g(i), nlp.lower(i)),
                                 nlp.upper(i));
    norm = std::max(norm, std::abs(x(i) - step));
  }
  return norm;
}

struct LbfgsMemory {
  std::deque<VectorXd> s, y;
  std::deque<double> rho;
  static constexpr int kCapacity = 12;

  void clear() {
    s.clear();
    y.clear();
    rho.clear();
  }
  void push(const VectorXd& si, const VectorXd& yi) {
    const double sy = si.dot(yi);
    if (sy <= 1e-12 * si.norm() * yi.norm()) return;
    s.push_back(si);
    y.push_back(yi);
    rho.push_back(1.0 / sy);
    if (static_cast<int>(s.size()) > kCapacity) {
      s.pop_front();
      y.pop_front();
      rho.pop_front();
    }
  }
  VectorXd direction(const VectorXd& g) const {
    VectorXd q = g;
    const int m = static_cast<int>(s.size());
    std::vector<double> alpha(m);
    for (int i = m - 1; i >= 0; --i) {
      alpha[i] = rho[i] * s[i].dot(q);
      q -= alpha[i] * y[i];
    }
    if (m > 0) {
      const double gamma = s[m - 1].dot(y[m - 1]) / y[m - 1].squaredNorm();
      q *= gamma;
    }
    for (int i = 0; i < m; ++i) {
      const double beta = rho[i] * y[i].dot(q);
      q += (alpha[i] - beta) * s[i];
    }
    return -q;
  }
};

}  // namespace

NlpResult minimize_nlp(const Nlp& nlp, const VectorXd& x0,
                       const SolveOptions& opts) {
  NlpResult result;
  NlpDiagnostics& diag = result.diagnostics;

  VectorXd x = clamp_to_bounds(nlp, x0);
  AlState al;
  al.rho = opts.penalty_init;
  al.mu = VectorXd::Zero(nlp.num_eq);
  al.nu = VectorXd::Zero(nlp.num_ineq);

  double f_cur;
  VectorXd ceq, cin;
  double merit = al_value(nlp, al, x, &f_cur, &ceq, &cin);
  VectorXd g = al_gradient(nlp, al, x, ceq, cin);

  // Best-so-far iterate: feasible ones ranked by objective, infeasible ones
  // by violation; strict improvement keeps the earliest on ties.
  VectorXd best_x = x;
  double best_f = f_cur;
  double best_viol = violation(ceq, cin);
  auto consider_best = [&](const VectorXd& xc, double fc, double vc) {
    const bool cand_feas = vc <= opts.feas_tol;
    const bool best_feas = best_viol <= opts.feas_tol;
    bool better = false;
    if (cand_feas && !best_feas) {
      better = true;
    } else if (cand_feas && best_feas) {
      better = fc < best_f;
    } else if (!cand_feas && !best_feas) {
      better = vc < best_viol;
    }
    if (better) {
      best_x = xc;
      best_f = fc;
      best_viol = vc;
    }
  };

  double prev_viol = std::numeric_limits<double>::infinity();
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    diag.outer_iterations = outer + 1;
    const double inner_tol =
        std::max(opts.opt_tol, 1e-2 * std::pow(0.2, outer));

    LbfgsMemory memory;
    diag.merit_history.emplace_back();
    diag.merit_history.back().push_back(merit);

    double pg = projected_gradient_norm(nlp, x, g);
    if (violation(ceq, cin) < opts.feas_tol && pg < opts.opt_tol) {
      diag.converged = true;
      diag.outer_iterations = outer;
      break;
    }

    for (int inner = 0; inner < opts.max_inner; ++inner) {
      if (pg < inner_tol) break;
      VectorXd d = memory.direction(g);
      if (g.dot(d) > -1e-14 * g.norm() * d.norm()) {
        d = -g;
        memory.clear();
      }

      double alpha = 1.0;
      bool accepted = false;
      VectorXd x_new;
      double merit_new = 0.0;
      for (int ls = 0; ls < 50; ++ls) {
        x_new = clamp_to_bounds(nlp, x + alpha * d);
        const VectorXd dx = x_new - x;
        if (dx.cwiseAbs().maxCoeff() == 0.0) break;
        merit_new = al_value(nlp, al, x_new);
        const double slope = g.dot(dx);
        if (merit_new <= merit + 1e-4 * std::min(slope, 0.0)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted && d != -g) {
        // Retry along steepest descent once before giving up.
        memory.clear();
        d = -g;
        alpha = 1.0;
        for (int ls = 0; ls < 50; ++ls) {
          x_new = clamp_to_bounds(nlp, x + alpha * d);
          const VectorXd dx = x_new - x;
          if (dx.cwiseAbs().maxCoeff() == 0.0) break;
          merit_new = al_value(nlp, al, x_new);
          if (merit_new <= merit + 1e-4 * std::min(g.dot(dx), 0.0)) {
            accepted = true;
            break;
          }
          alpha *= 0.5;
        }
      }
      if (!accepted) break;  // line search stalled at this tolerance

      double f_new;
      VectorXd ceq_new, cin_new;
      merit_new = al_value(nlp, al, x_new, &f_new, &ceq_new, &cin_new);
      VectorXd g_new = al_gradient(nlp, al, x_new, ceq_new, cin_new);
      memory.push(x_new - x, g_new - g);
      x = std::move(x_new);
      g = std::move(g_new);
      merit = merit_new;
      f_cur = f_new;
      ceq = std::move(ceq_new);
      cin = std::move(cin_new);
      diag.inner_iterations += 1;
      diag.merit_history.back().push_back(merit);
      consider_best(x, f_cur, violation(ceq, cin));
      pg = projected_gradient_norm(nlp, x, g);
    }

    const double viol = violation(ceq, cin);
    consider_best(x, f_cur, viol);
    if (viol < opts.feas_tol && pg < opts.opt_tol) {
      diag.converged = true;
      break;
    }

    // First-order multiplier update when the constraints improved enough,
    // otherwise raise the penalty.
    if (viol <= std::max(opts.feas_tol, 0.25 * prev_viol)) {
      if (ceq.size() > 0) {
        al.mu = (al.mu + al.rho * ceq).cwiseMax(-1e12).cwiseMin(1e12);
      }
      if (cin.size() > 0) {
        al.nu = (al.nu + al.rho * cin).cwiseMax(0.0).cwiseMin(1e12);
      }
      prev_viol = viol;
    } else {
      al.rho *= opts.penalty_growth;
    }
    merit = al_value(nlp, al, x, &f_cur, &ceq, &cin);
    g = al_gradient(nlp, al, x, ceq, cin);
  }

  // Report the best iterate found.
  {
    const VectorXd ceq_b = eval_eq(nlp, best_x);
    const VectorXd cin_b = eval_ineq(nlp, best_x);
    const VectorXd g_b =
        al_gradient(nlp, al, best_x, ceq_b, cin_b);
    diag.objective = nlp.objective(best_x);
    diag.max_violation = violation(ceq_b, cin_b);
    diag.proj_grad_norm = projected_gradient_norm(nlp, best_x, g_b);
  }
  result.x = best_x;
  return result;
}

double gradient_check(const Nlp& nlp, const VectorXd& point, int num_coords,
                      std::uint64_t seed) {
  if (nlp.num_vars == 0) return 0.0;
  RngStream rng(seed, 0);
  double max_err = 0.0;
  for (int c = 0; c < num_coords; ++c) {
    const int i = static_cast<int>(rng.uniform() * nlp.num_vars) %
                  nlp.num_vars;
    const double h = 1e-6 * (1.0 + std::abs(point(i)));
    const DerivColumn ref = dense_central_column(nlp, point, i, h);
    const DerivColumn got = solver_column(nlp, point, i);

    auto dense = [&](const std::vector<std::pair<int, double>>& entries,
                     int rows) {
      VectorXd v = VectorXd::Zero(rows);
      for (const auto& [r, val] : entries) v(r) = val;
      return v;
    };
    const VectorXd ref_eq = dense(ref.d_eq, nlp.num_eq);
    const VectorXd got_eq = dense(got.d_eq, nlp.num_eq);
    const VectorXd ref_in = dense(ref.d_ineq, nlp.num_ineq);
    const VectorXd got_in = dense(got.d_ineq, nlp.num_ineq);

    auto rel = [](double a, double b) {
      return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
    };
    max_err = std::max(max_err, rel(ref.d_objective, got.d_objective));
    for (int r = 0; r < nlp.num_eq; ++r) {
      max_err = std::max(max_err, rel(ref_eq(r), got_eq(r)));
    }
    for (int r = 0; r < nlp.num_ineq; ++r) {
      max_err = std::max(max_err, rel(ref_in(r), got_in(r)));
    }
  }
  return max_err;
}

}  // namespace cdkf
