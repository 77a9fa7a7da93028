#include "cdkf/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cdkf {

TimeGrid::TimeGrid(std::vector<double> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.size() < 2) {
    throw ParameterError("TimeGrid needs at least 2 nodes");
  }
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    if (!(nodes_[i] < nodes_[i + 1])) {
      throw ParameterError("TimeGrid nodes must be strictly increasing");
    }
  }
}

TimeGrid TimeGrid::uniform(double t0, double tf, int n) {
  if (n < 2) throw ParameterError("uniform grid needs n >= 2");
  if (!(tf > t0)) throw ParameterError("uniform grid needs tf > t0");
  std::vector<double> nodes(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nodes[i] = t0 + (tf - t0) * static_cast<double>(i) / (n - 1);
  }
  nodes.front() = t0;
  nodes.back() = tf;
  return TimeGrid(std::move(nodes));
}

int TimeGrid::interval_of(double t) const {
  if (!contains(t)) {
    throw ScheduleOutOfRangeError("time " + std::to_string(t) +
                                  " outside horizon [" + std::to_string(t0()) +
                                  ", " + std::to_string(tf()) + "]");
  }
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  int k = static_cast<int>(it - nodes_.begin()) - 1;
  return std::min(k, num_intervals() - 1);
}

MatrixXd floored_spd(const MatrixXd& cov) {
  MatrixXd sym = 0.5 * (cov + cov.transpose());
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < -GaussianBelief::kEigFloor) {
    throw ParameterError("covariance eigenvalue " + std::to_string(min_eig) +
                         " below the -1e-10 floor");
  }
  if (min_eig < 0.0) {
    // Tiny negative eigenvalues are integration round-off; clamp to zero.
    MatrixXd repaired = es.eigenvectors() *
                        es.eigenvalues().cwiseMax(0.0).asDiagonal() *
                        es.eigenvectors().transpose();
    sym = 0.5 * (repaired + repaired.transpose());
  }
  return sym;
}

GaussianBelief::GaussianBelief(VectorXd mean, MatrixXd cov)
    : mean_(std::move(mean)) {
  if (cov.rows() != cov.cols() || cov.rows() != mean_.size()) {
    throw ParameterError("GaussianBelief: covariance must be n x n");
  }
  cov_ = floored_spd(cov);
}

RatePlan::RatePlan(TimeGrid grid, MatrixXd rates)
    : grid_(std::move(grid)), rates_(std::move(rates)) {
  if (rates_.cols() != grid_.num_intervals()) {
    throw ParameterError("RatePlan: rates must have one column per interval");
  }
  if ((rates_.array() < 0.0).any()) {
    throw ParameterError("RatePlan: rates must be nonnegative");
  }
}

double RatePlan::rate_at(int s, double t) const {
  return rates_(s, grid_.interval_of(t));
}

VectorXd RatePlan::rates_at(double t) const {
  return rates_.col(grid_.interval_of(t));
}

InputPlan::InputPlan(TimeGrid grid, MatrixXd values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (values_.cols() != grid_.num_intervals()) {
    throw ParameterError("InputPlan: values must have one column per interval");
  }
}

InputPlan InputPlan::zero(const TimeGrid& grid, int m_u) {
  return InputPlan(grid, MatrixXd::Zero(m_u, grid.num_intervals()));
}

VectorXd InputPlan::value_at(double t) const {
  return values_.col(grid_.interval_of(t));
}

int Schedule::total_events() const {
  int n = 0;
  for (const auto& ts : times) n += static_cast<int>(ts.size());
  return n;
}

void Schedule::validate(const TimeGrid& grid) const {
  for (std::size_t s = 0; s < times.size(); ++s) {
    const auto& ts = times[s];
    for (std::size_t i = 0; i < ts.size(); ++i) {
      if (!grid.contains(ts[i])) {
        throw ScheduleOutOfRangeError("sensor " + std::to_string(s + 1) +
                                      " event at t = " + std::to_string(ts[i]) +
                                      " outside horizon");
      }
      if (i > 0 && !(ts[i - 1] < ts[i])) {
        throw ScheduleOutOfRangeError(
            "sensor " + std::to_string(s + 1) +
            " times must be strictly increasing");
      }
    }
  }
}

namespace {

bool finite(const MatrixXd& m) { return m.allFinite(); }

template <typename F>
bool probe(std::vector<ValidationIssue>& issues, const std::string& where,
           F&& f) {
  try {
    f();
    return true;
  } catch (const std::exception& e) {
    issues.push_back({where, std::string("callback failed: ") + e.what()});
  } catch (...) {
    issues.push_back({where, "callback failed with unknown error"});
  }
  return false;
}

}  // namespace

std::vector<ValidationIssue> validate_model(
    const ProcessModel& process, const AuxModel& aux,
    const std::vector<Sensor>& sensors, const TimeGrid& grid,
    const std::function<VectorXd(double)>& nominal_aux,
    const VectorXd& nominal_input) {
  std::vector<ValidationIssue> issues;
  if (aux.n_p > aux.n_xi || aux.n_p < 0) {
    issues.push_back({"aux", "n_p must satisfy 0 <= n_p <= n_xi"});
  }

  for (double t : grid.nodes()) {
    VectorXd xi;
    if (!probe(issues, "nominal_aux", [&] {
          xi = nominal_aux(t);
          if (xi.size() != aux.n_xi) {
            throw ParameterError("nominal trajectory has wrong dimension");
          }
        })) {
      continue;
    }

    probe(issues, "process.drift", [&] {
      MatrixXd A = process.drift(xi, t);
      if (A.rows() != process.n || A.cols() != process.n) {
        std::ostringstream os;
        os << "returned " << A.rows() << "x" << A.cols() << ", expected "
           << process.n << "x" << process.n << " at t = " << t;
        issues.push_back({"process.drift", os.str()});
      } else if (!finite(A)) {
        issues.push_back({"process.drift", "non-finite entries"});
      }
    });
    probe(issues, "process.diffusion", [&] {
      MatrixXd S = process.diffusion(xi, t);
      if (S.rows() != process.n || S.cols() != process.m) {
        std::ostringstream os;
        os << "returned " << S.rows() << "x" << S.cols() << ", expected "
           << process.n << "x" << process.m << " at t = " << t;
        issues.push_back({"process.diffusion", os.str()});
      }
    });

    for (const Sensor& sensor : sensors) {
      const std::string tag = "sensor " + std::to_string(sensor.id);
      probe(issues, tag + ".output", [&] {
        MatrixXd C = sensor.output(xi, t);
        if (C.rows() != sensor.q || C.cols() != process.n) {
          std::ostringstream os;
          os << "returned " << C.rows() << "x" << C.cols() << ", expected "
             << sensor.q << "x" << process.n << " at t = " << t;
          issues.push_back({tag + ".output", os.str()});
        }
      });
      probe(issues, tag + ".noise_cov", [&] {
        MatrixXd R = sensor.noise_cov(xi, t);
        if (R.rows() != sensor.q || R.cols() != sensor.q) {
          std::ostringstream os;
          os << "returned " << R.rows() << "x" << R.cols() << ", expected "
             << sensor.q << "x" << sensor.q << " at t = " << t;
          issues.push_back({tag + ".noise_cov", os.str()});
          return;
        }
        if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-10) {
          issues.push_back({tag + ".noise_cov", "not symmetric"});
          return;
        }
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(R);
        if (es.eigenvalues().minCoeff() <= 0.0) {
          std::ostringstream os;
          os << "non-PD noise (min eigenvalue "
             << es.eigenvalues().minCoeff() << ") at t = " << t;
          issues.push_back({tag + ".noise_cov", os.str()});
        }
      });
      probe(issues, tag + ".jump", [&] {
        VectorXd g = sensor.jump(xi, nominal_input, t);
        if (g.size() != aux.n_p) {
          std::ostringstream os;
          os << "returned size " << g.size() << ", expected " << aux.n_p;
          issues.push_back({tag + ".jump", os.str()});
        }
      });
    }

    probe(issues, "aux.f_p", [&] {
      VectorXd d = aux.f_p(xi, nominal_input, t);
      if (d.size() != aux.n_p) {
        std::ostringstream os;
        os << "returned size " << d.size() << ", expected " << aux.n_p;
        issues.push_back({"aux.f_p", os.str()});
      }
    });
    probe(issues, "aux.f_u", [&] {
      VectorXd d =
          aux.f_u(AuxModel::unperturbed_part(xi, aux.n_p), nominal_input, t);
      if (d.size() != aux.n_u()) {
        std::ostringstream os;
        os << "returned size " << d.size() << ", expected " << aux.n_u();
        issues.push_back({"aux.f_u", os.str()});
      }
    });
  }
  return issues;
}

}  // namespace cdkf
