#pragma once

#include <functional>
#include <string>
#include <vector>

#include "csa/dataset.hpp"

namespace csa {

// Balanced-transport marginals after slack augmentation:
//   row = [1_N ; N*(sum(w_plus) - rho*sum(w_minus))]        (length N+1)
//   col = [N*w_plus ; N*(1 - rho*sum(w_minus))]             (length K+1)
// Row and column sums agree identically.
struct AugmentedMarginals {
  Vector row;
  Vector col;
};

// Cost matrix embedded in the top-left N x K block; the slack row, slack
// column and corner cost nothing so the objective value is preserved.
struct AugmentedProblem {
  Matrix cost;  // (N+1) x (K+1)
  AugmentedMarginals marginals;

  int real_rows() const { return static_cast<int>(cost.rows()) - 1; }
  int real_cols() const { return static_cast<int>(cost.cols()) - 1; }
};

AugmentedProblem build_augmented_problem(const Matrix& cost,
                                         const ClassFrequencyBounds& bounds,
                                         double rho);

struct SinkhornOptions {
  double epsilon = 0.01;
  int max_iterations = 1000;
  double tolerance = 1e-6;  // on the max marginal residual (inf norm)

  // Warm-start log scalings (used by epsilon scaling); empty = zeros.
  Vector init_log_row_scaling;
  Vector init_log_col_scaling;

  // Called after every full row+column update with the current coupling and
  // log scalings; used by diagnostics and the dual-ascent property test.
  std::function<void(int iteration, const Matrix& coupling, const Vector& log_row_scaling,
                     const Vector& log_col_scaling)>
      on_iteration;
};

struct AssignmentMatrix {
  Matrix coupling;           // (N+1) x (K+1), nonnegative
  int iterations_used = 0;
  double marginal_residual = 0.0;
  Vector log_row_scaling;
  Vector log_col_scaling;
};

// Log-domain Sinkhorn scaling: alternately match row then column marginals of
// diag(a) exp(-C/eps) diag(b), with all products done by log-sum-exp so small
// epsilon cannot underflow. Stops at `tolerance` or `max_iterations`.
AssignmentMatrix sinkhorn_solve(const Matrix& cost, const AugmentedMarginals& marginals,
                                const SinkhornOptions& options);

// Epsilon scaling: solve a short schedule of decreasing epsilons, carrying the
// dual potentials over, finishing at options.epsilon. Reaches tight tolerances
// at small epsilon in far fewer iterations than a cold start.
AssignmentMatrix sinkhorn_solve_scaled(const Matrix& cost, const AugmentedMarginals& marginals,
                                       const SinkhornOptions& options,
                                       double epsilon_start = 0.064);

// Lagrangian dual of the entropic problem evaluated at the current scalings;
// Sinkhorn is exact blockwise ascent on this, so it is non-decreasing.
double entropic_dual_objective(const Matrix& cost, const AugmentedMarginals& marginals,
                               double epsilon, const Vector& log_row_scaling,
                               const Vector& log_col_scaling);

// <Q, C> over the full augmented matrix (slack entries cost 0 anyway).
double transport_objective(const Matrix& coupling, const Matrix& cost);

struct PseudoLabel {
  int sample = 0;  // row index within the solved problem (0..N-1)
  int label = 0;
};

// Hard rounding of the dense coupling: row i is assigned its argmax class k*
// iff Q(i, k*) strictly exceeds the slack-column mass Q(i, K); ties leave the
// sample unassigned.
std::vector<PseudoLabel> extract_assignments(const Matrix& coupling, int real_rows,
                                             int real_cols);

// Convergence diagnostics for one solve, exportable per round.
std::string assignment_diagnostics_json(const AssignmentMatrix& solution);

}  // namespace csa
