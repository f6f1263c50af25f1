#include "csa/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace csa {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// log(sum_j exp(v_j)) with -inf entries contributing nothing.
double log_sum_exp(const Vector& v) {
  double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (int i = 0; i < v.size(); ++i)
    if (v[i] != kNegInf) s += std::exp(v[i] - m);
  return m + std::log(s);
}

Vector safe_log(const Vector& v) {
  Vector out(v.size());
  for (int i = 0; i < v.size(); ++i) {
    if (v[i] < 0) throw Error("marginals must be nonnegative");
    out[i] = v[i] == 0.0 ? kNegInf : std::log(v[i]);
  }
  return out;
}

Matrix coupling_from_logs(const Matrix& log_kernel, const Vector& log_a, const Vector& log_b) {
  Matrix coupling(log_kernel.rows(), log_kernel.cols());
  for (int i = 0; i < coupling.rows(); ++i) {
    if (log_a[i] == kNegInf) {
      coupling.row(i).setZero();
      continue;
    }
    for (int k = 0; k < coupling.cols(); ++k) {
      coupling(i, k) =
          log_b[k] == kNegInf ? 0.0 : std::exp(log_a[i] + log_kernel(i, k) + log_b[k]);
    }
  }
  return coupling;
}

double marginal_residual(const Matrix& coupling, const AugmentedMarginals& marginals) {
  double row = (coupling.rowwise().sum() - marginals.row).cwiseAbs().maxCoeff();
  double col = (coupling.colwise().sum().transpose() - marginals.col).cwiseAbs().maxCoeff();
  return std::max(row, col);
}

}  // namespace

AugmentedProblem build_augmented_problem(const Matrix& cost,
                                         const ClassFrequencyBounds& bounds,
                                         double rho) {
  const int n = static_cast<int>(cost.rows());
  const int k = static_cast<int>(cost.cols());
  if (n < 1 || k < 1) throw Error("cost matrix must be nonempty");
  if (!cost.allFinite()) throw Error("cost matrix must be finite");
  if (rho <= 0 || rho > 1) throw Error("rho must lie in (0, 1]");
  if (bounds.w_plus.size() != k) throw Error("bounds do not match the class count");
  bounds.validate(rho);

  const double upper_mass = bounds.w_plus.sum();
  const double lower_mass = rho * bounds.w_minus.sum();
  if (upper_mass - lower_mass < -1e-12)
    throw Error("infeasible bounds: sum(w_plus) < rho * sum(w_minus)");
  if (1.0 - lower_mass < -1e-12)
    throw Error("infeasible bounds: rho * sum(w_minus) exceeds 1");

  AugmentedProblem problem;
  problem.cost = Matrix::Zero(n + 1, k + 1);
  problem.cost.topLeftCorner(n, k) = cost;  // slack row/column/corner cost 0

  problem.marginals.row.resize(n + 1);
  problem.marginals.row.head(n).setOnes();
  problem.marginals.row[n] = std::max(0.0, n * (upper_mass - lower_mass));

  problem.marginals.col.resize(k + 1);
  problem.marginals.col.head(k) = n * bounds.w_plus;
  problem.marginals.col[k] = std::max(0.0, n * (1.0 - lower_mass));

  const double row_sum = problem.marginals.row.sum();
  const double col_sum = problem.marginals.col.sum();
  if (std::abs(row_sum - col_sum) > 1e-9)
    throw Error("marginal mass mismatch: rows " + std::to_string(row_sum) + " vs columns " +
                std::to_string(col_sum));
  return problem;
}

AssignmentMatrix sinkhorn_solve(const Matrix& cost, const AugmentedMarginals& marginals,
                                const SinkhornOptions& options) {
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  if (marginals.row.size() != rows || marginals.col.size() != cols)
    throw Error("marginal lengths do not match the cost matrix");
  if (options.epsilon <= 0) throw Error("epsilon must be positive");
  const double row_sum = marginals.row.sum();
  const double col_sum = marginals.col.sum();
  if (std::abs(row_sum - col_sum) > 1e-9 * std::max(1.0, row_sum))
    throw Error("sinkhorn_solve requires balanced marginals");

  const Matrix log_kernel = -cost / options.epsilon;
  const Vector log_row = safe_log(marginals.row);
  const Vector log_col = safe_log(marginals.col);

  Vector log_a = options.init_log_row_scaling.size() == rows ? options.init_log_row_scaling
                                                             : Vector::Zero(rows);
  Vector log_b = options.init_log_col_scaling.size() == cols ? options.init_log_col_scaling
                                                             : Vector::Zero(cols);

  AssignmentMatrix result;
  int iteration = 0;
  double residual = std::numeric_limits<double>::infinity();
  Vector scratch(cols);
  for (; iteration < options.max_iterations; ++iteration) {
    // a-update matches row marginals, then b-update matches columns.
    for (int i = 0; i < rows; ++i) {
      if (log_row[i] == kNegInf) {
        log_a[i] = kNegInf;
        continue;
      }
      scratch = log_kernel.row(i).transpose() + log_b;
      log_a[i] = log_row[i] - log_sum_exp(scratch);
    }
    for (int k = 0; k < cols; ++k) {
      if (log_col[k] == kNegInf) {
        log_b[k] = kNegInf;
        continue;
      }
      Vector column = log_kernel.col(k) + log_a;
      log_b[k] = log_col[k] - log_sum_exp(column);
    }
    for (int i = 0; i < rows; ++i)
      if (std::isnan(log_a[i]) || log_a[i] == std::numeric_limits<double>::infinity())
        throw Error("non-finite row scaling; marginals are infeasible");
    for (int k = 0; k < cols; ++k)
      if (std::isnan(log_b[k]) || log_b[k] == std::numeric_limits<double>::infinity())
        throw Error("non-finite column scaling; marginals are infeasible");

    Matrix coupling = coupling_from_logs(log_kernel, log_a, log_b);
    residual = marginal_residual(coupling, marginals);
    if (options.on_iteration) options.on_iteration(iteration, coupling, log_a, log_b);
    if (residual <= options.tolerance) {
      result.coupling = std::move(coupling);
      ++iteration;
      break;
    }
    if (iteration == options.max_iterations - 1) result.coupling = std::move(coupling);
  }
  if (result.coupling.size() == 0)
    result.coupling = coupling_from_logs(log_kernel, log_a, log_b);
  result.iterations_used = iteration;
  result.marginal_residual = residual;
  result.log_row_scaling = std::move(log_a);
  result.log_col_scaling = std::move(log_b);
  return result;
}

AssignmentMatrix sinkhorn_solve_scaled(const Matrix& cost, const AugmentedMarginals& marginals,
                                       const SinkhornOptions& options, double epsilon_start) {
  if (epsilon_start < options.epsilon) epsilon_start = options.epsilon;
  // Geometric schedule; dual potentials u = eps*log(a) carry across stages.
  std::vector<double> schedule;
  for (double eps = epsilon_start; eps > options.epsilon; eps /= 4.0) schedule.push_back(eps);
  schedule.push_back(options.epsilon);

  SinkhornOptions stage = options;
  AssignmentMatrix solution;
  bool warm = false;
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    double eps = schedule[s];
    if (warm) {
      double ratio = stage.epsilon / eps;
      stage.init_log_row_scaling = solution.log_row_scaling * ratio;
      stage.init_log_col_scaling = solution.log_col_scaling * ratio;
      for (int i = 0; i < stage.init_log_row_scaling.size(); ++i)
        if (std::isnan(stage.init_log_row_scaling[i])) stage.init_log_row_scaling[i] = 0.0;
      for (int i = 0; i < stage.init_log_col_scaling.size(); ++i)
        if (std::isnan(stage.init_log_col_scaling[i])) stage.init_log_col_scaling[i] = 0.0;
    }
    stage.epsilon = eps;
    stage.on_iteration = s + 1 == schedule.size() ? options.on_iteration : nullptr;
    solution = sinkhorn_solve(cost, marginals, stage);
    warm = true;
  }
  return solution;
}

double entropic_dual_objective(const Matrix& cost, const AugmentedMarginals& marginals,
                               double epsilon, const Vector& log_row_scaling,
                               const Vector& log_col_scaling) {
  double value = 0.0;
  for (int i = 0; i < marginals.row.size(); ++i)
    if (marginals.row[i] > 0) value += epsilon * log_row_scaling[i] * marginals.row[i];
  for (int k = 0; k < marginals.col.size(); ++k)
    if (marginals.col[k] > 0) value += epsilon * log_col_scaling[k] * marginals.col[k];
  Matrix coupling = coupling_from_logs(-cost / epsilon, log_row_scaling, log_col_scaling);
  return value - epsilon * coupling.sum();
}

double transport_objective(const Matrix& coupling, const Matrix& cost) {
  return (coupling.array() * cost.array()).sum();
}

std::vector<PseudoLabel> extract_assignments(const Matrix& coupling, int real_rows,
                                             int real_cols) {
  if (coupling.rows() < real_rows + 1 || coupling.cols() < real_cols + 1)
    throw Error("coupling is smaller than the stated problem size");
  std::vector<PseudoLabel> assignments;
  for (int i = 0; i < real_rows; ++i) {
    int best = 0;
    for (int k = 1; k < real_cols; ++k)
      if (coupling(i, k) > coupling(i, best)) best = k;
    // The slack column is the "leave unassigned" competitor; ties keep the
    // sample unassigned.
    if (coupling(i, best) > coupling(i, real_cols))
      assignments.push_back({i, best});
  }
  return assignments;
}

std::string assignment_diagnostics_json(const AssignmentMatrix& solution) {
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", solution.marginal_residual);
  out << "{\"iterations\": " << solution.iterations_used << ", \"marginal_residual\": " << buf
      << ", \"rows\": " << solution.coupling.rows() << ", \"cols\": " << solution.coupling.cols()
      << "}";
  return out.str();
}

}  // namespace csa
