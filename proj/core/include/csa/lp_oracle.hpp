#pragma once

#include "csa/sinkhorn.hpp"

namespace csa {

struct LpSolution {
  Matrix coupling;
  double objective = 0.0;
  Vector row_potentials;  // dual certificate: cost - u_i - v_k >= 0
  Vector col_potentials;
  int pivots = 0;
};

// Exact optimum of the balanced transportation LP
//   min <Q, C>  s.t.  Q >= 0, Q 1 = row, Q^T 1 = col
// by the transportation simplex (basis tree + potentials, Bland's rule).
// Verification oracle for small instances only; throws beyond 16 x 8.
LpSolution lp_oracle(const Matrix& cost, const AugmentedMarginals& marginals);

}  // namespace csa
