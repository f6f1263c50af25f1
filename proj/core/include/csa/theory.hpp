#pragma once

#include <cstdint>
#include <vector>

#include "csa/common.hpp"

namespace csa {

// Setup for the estimation-error bound of the mislabeled-mixture estimator:
// class means, shared diagonal noise, per-class pseudo-label counts, and the
// mean/variance of the per-sample correctness indicators.
struct EstimationErrorSetup {
  Matrix class_means;            // K x d
  Vector noise_variances;        // d
  std::vector<int> pseudo_counts;  // K
  Vector indicator_means;        // K, in [0, 1]
  Vector indicator_variances;    // K
  double delta = 1.0;
  int trials = 10000;

  int class_count() const { return static_cast<int>(class_means.rows()); }
  int dimension() const { return static_cast<int>(class_means.cols()); }
  void validate() const;
};

// 1 - 2*sum_k sum_j exp(-delta^2*n_k / (8*sigma_j^2))
//   - sum_k (4*Var(I_k)/delta^2) * mean_{j != k} ||mu_k - mu_j||_1.
// May be negative (vacuous); returned as-is.
double estimation_error_bound(const EstimationErrorSetup& setup);

struct MonteCarloResult {
  double success_fraction = 0.0;
  double standard_error = 0.0;
  int trials = 0;
};

// Empirical probability that sum_k ||theta_hat_k - mu_k||_1 <= delta when each
// pseudo-labeled sample is correct with probability E(I_k) and wrong samples
// are drawn from a uniformly chosen other class. Per-trial RNG streams derive
// from (seed, trial) so results are independent of scheduling.
MonteCarloResult estimation_error_monte_carlo(const EstimationErrorSetup& setup,
                                              std::uint64_t seed, int workers = 1);

// Random setups with a non-vacuous bound (bound >= min_bound), for sweeps.
std::vector<EstimationErrorSetup> random_nonvacuous_setups(int count, std::uint64_t seed,
                                                           double min_bound = 0.05);

// ---- PAC-Bayes quantities over an M-member ensemble -----------------------

// err: M x N 0/1 loss indicators (1 = model got the sample wrong).
// Tandem loss: sum_{m,m'} xi_m xi_m' * mean_n err(m,n)*err(m',n).
double tandem_loss(const Matrix& err, const Vector& posterior);

// Error rate of the posterior-weighted plurality vote; vote ties break toward
// the lower class index.
double majority_vote_loss(const std::vector<std::vector<int>>& member_predictions,
                          const Vector& posterior, const std::vector<int>& labels);

double total_variation(const Vector& p, const Vector& q);
// sum p log(p/q), 0 log 0 := 0; +inf when p puts mass where q has none.
double kl_divergence(const Vector& p, const Vector& q);

struct PacBayesSetup {
  Matrix correct;    // M x N_l 1[h_m(x_n) = y_n] indicators
  Vector posterior;  // xi, length M
  Vector prior;      // pi, length M
  double delta = 0.05;

  int labeled_count() const { return static_cast<int>(correct.cols()); }
  void validate() const;
};

enum class DivergenceChoice { kTotalVariation, kKlPinsker };

// First term + sqrt((8*gamma + 8*ln(N_l/delta)) / (N_l - 1)) where gamma is
// TV(xi, pi) or its Pinsker surrogate sqrt(0.5*KL). With the default
// misclassification convention the first term is 4 * E_xi[empirical error];
// misclassification=false takes the correctness indicators literally instead.
double pac_bayes_rhs(const PacBayesSetup& setup, DivergenceChoice divergence,
                     bool misclassification = true);

}  // namespace csa
