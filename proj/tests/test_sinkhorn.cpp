#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "csa/lp_oracle.hpp"
#include "csa/sinkhorn.hpp"

using namespace csa;

namespace {

// Exact fraction on __int128 for the marginal-identity spot checks.
struct Fraction {
  __int128 num = 0, den = 1;

  static __int128 gcd(__int128 a, __int128 b) {
    if (a < 0) a = -a;
    if (b < 0) b = -b;
    while (b) {
      __int128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }
  Fraction reduce() const {
    __int128 g = gcd(num, den);
    if (g == 0) return {0, 1};
    Fraction f{num / g, den / g};
    if (f.den < 0) {
      f.num = -f.num;
      f.den = -f.den;
    }
    return f;
  }
  Fraction operator+(const Fraction& o) const {
    return Fraction{num * o.den + o.num * den, den * o.den}.reduce();
  }
  Fraction operator-(const Fraction& o) const {
    return Fraction{num * o.den - o.num * den, den * o.den}.reduce();
  }
  Fraction operator*(const Fraction& o) const {
    return Fraction{num * o.num, den * o.den}.reduce();
  }
  bool operator==(const Fraction& o) const {
    return num * o.den == o.num * den;
  }
};

struct RandomInstance {
  Matrix cost;
  ClassFrequencyBounds bounds;
  double rho;
};

// Costs come from -log of sharpened softmax probabilities, matching the
// pipeline's -log P_bar cost construction (small probabilities included).
RandomInstance random_instance(std::mt19937_64& gen, int max_n = 10, int max_k = 4) {
  std::uniform_int_distribution<int> n_pick(2, max_n), k_pick(2, max_k);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  RandomInstance inst;
  const int n = n_pick(gen), k = k_pick(gen);
  const double sharpness = 1.0 + 3.0 * unit(gen);
  Matrix probs(n, k);
  for (int i = 0; i < n; ++i) {
    double total = 0;
    for (int j = 0; j < k; ++j) {
      probs(i, j) = std::exp(sharpness * normal(gen));
      total += probs(i, j);
    }
    probs.row(i) = (probs.row(i) / total).cwiseMax(1e-9);
  }
  inst.cost = -probs.array().log();
  Vector w(k);
  double total = 0;
  for (int j = 0; j < k; ++j) {
    w[j] = 0.1 + unit(gen);
    total += w[j];
  }
  w /= total;
  double slack = 1.0 + 0.3 * unit(gen);
  inst.bounds.w = w;
  inst.bounds.w_plus = (slack * w.array()).min(1.0);
  inst.bounds.w_minus = ((2.0 - slack) * w.array()).max(0.0);
  inst.rho = 0.2 + 0.8 * unit(gen);
  return inst;
}

}  // namespace

TEST_CASE("build_augmented_problem constructs the slack marginals") {
  SUBCASE("worked 2x2 example") {
    Matrix cost(2, 2);
    cost << 0.5, 1.0, 1.0, 0.5;
    ClassFrequencyBounds bounds;
    bounds.w = Vector::Constant(2, 0.5);
    bounds.w_plus = Vector::Constant(2, 1.0);
    bounds.w_minus = Vector::Constant(2, 0.0);
    auto problem = build_augmented_problem(cost, bounds, 1.0);
    REQUIRE(problem.cost.rows() == 3);
    REQUIRE(problem.cost.cols() == 3);
    CHECK(problem.marginals.row[0] == doctest::Approx(1.0));
    CHECK(problem.marginals.row[1] == doctest::Approx(1.0));
    CHECK(problem.marginals.row[2] == doctest::Approx(4.0));
    CHECK(problem.marginals.col[0] == doctest::Approx(2.0));
    CHECK(problem.marginals.col[1] == doctest::Approx(2.0));
    CHECK(problem.marginals.col[2] == doctest::Approx(2.0));
    CHECK(problem.marginals.row.sum() == doctest::Approx(6.0));
    CHECK(problem.cost(2, 2) == 0.0);
    CHECK(problem.cost(0, 2) == 0.0);
    CHECK(problem.cost(2, 0) == 0.0);
    CHECK(problem.cost(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("full allocation closes the slack column") {
    Matrix cost = Matrix::Zero(3, 2);
    ClassFrequencyBounds bounds;
    bounds.w = Vector::Constant(2, 0.5);
    bounds.w_plus = Vector::Constant(2, 0.5);
    bounds.w_minus = Vector::Constant(2, 0.5);  // sums to 1
    auto problem = build_augmented_problem(cost, bounds, 1.0);
    CHECK(problem.marginals.col[2] == doctest::Approx(0.0));
  }
  SUBCASE("non-finite costs are rejected") {
    Matrix cost(1, 2);
    cost << 1.0, std::numeric_limits<double>::infinity();
    ClassFrequencyBounds bounds;
    bounds.w = Vector::Constant(2, 0.5);
    bounds.w_plus = Vector::Constant(2, 0.6);
    bounds.w_minus = Vector::Constant(2, 0.4);
    CHECK_THROWS_AS(build_augmented_problem(cost, bounds, 0.5), Error);
  }
}

TEST_CASE("marginal identity holds in exact rational arithmetic") {
  // w_k = c_k / C with integer counts; slack in {1, 11/10, 3/2}; rho in
  // {1/4, ..., 1}. Row and column sums must agree exactly.
  std::mt19937_64 gen(2718);
  std::uniform_int_distribution<int> k_pick(2, 5), n_pick(1, 40), count_pick(1, 30);
  const Fraction one{1, 1};
  for (int trial = 0; trial < 1000; ++trial) {
    const int k = k_pick(gen);
    const int n = n_pick(gen);
    std::vector<Fraction> w(k);
    long long total = 0;
    std::vector<int> counts(k);
    for (int j = 0; j < k; ++j) {
      counts[j] = count_pick(gen);
      total += counts[j];
    }
    for (int j = 0; j < k; ++j) w[j] = Fraction{counts[j], total};
    Fraction slack{static_cast<int>(10 + gen() % 11), 10};  // 1.0 .. 2.0
    Fraction rho{static_cast<int>(1 + gen() % 4), 4};
    Fraction n_frac{n, 1};

    Fraction sum_w_plus{0, 1}, sum_w_minus{0, 1};
    for (int j = 0; j < k; ++j) {
      sum_w_plus = sum_w_plus + slack * w[j];
      sum_w_minus = sum_w_minus + (Fraction{2, 1} - slack) * w[j];
    }
    // rows: n ones plus the slack row
    Fraction row_sum = n_frac + n_frac * (sum_w_plus - rho * sum_w_minus);
    // columns: n * w_plus plus the slack column
    Fraction col_sum = n_frac * sum_w_plus + n_frac * (one - rho * sum_w_minus);
    CHECK(row_sum == col_sum);
  }
}

TEST_CASE("sinkhorn on a constant cost returns the product coupling") {
  Matrix cost = Matrix::Constant(3, 3, 2.0);
  AugmentedMarginals marginals;
  marginals.row = Vector::Constant(3, 1.0);
  marginals.col = Vector::Constant(3, 1.0);
  SinkhornOptions options;
  options.epsilon = 0.05;
  options.max_iterations = 500;
  options.tolerance = 1e-10;
  auto solution = sinkhorn_solve(cost, marginals, options);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(solution.coupling(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-8));
}

TEST_CASE("small epsilon recovers the permutation optimum") {
  Matrix cost(2, 2);
  cost << 0.0, 1.0, 1.0, 0.0;
  AugmentedMarginals marginals;
  marginals.row = Vector::Constant(2, 1.0);
  marginals.col = Vector::Constant(2, 1.0);
  SinkhornOptions options;
  options.epsilon = 0.01;
  options.max_iterations = 5000;
  options.tolerance = 1e-10;
  auto solution = sinkhorn_solve(cost, marginals, options);
  CHECK(solution.coupling(0, 0) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(solution.coupling(1, 1) == doctest::Approx(1.0).epsilon(1e-4));
  CHECK(solution.coupling(0, 1) == doctest::Approx(0.0).scale(1).epsilon(1e-4));
}

TEST_CASE("sinkhorn objective approaches the LP optimum") {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(gen);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    auto exact = lp_oracle(problem.cost, problem.marginals);

    // Default epsilon: suboptimality is the entropic bias, order epsilon.
    SinkhornOptions options;
    options.epsilon = 0.01;
    options.max_iterations = 20000;
    options.tolerance = 1e-8;
    auto entropic = sinkhorn_solve_scaled(problem.cost, problem.marginals, options);
    double gap = transport_objective(entropic.coupling, problem.cost) - exact.objective;
    CHECK(gap >= -1e-6);  // the LP is the true optimum
    CHECK(gap <= 10 * options.epsilon);

    // Small epsilon: within 1e-3 of the exact optimum.
    options.epsilon = 0.001;
    options.max_iterations = 40000;
    auto tight = sinkhorn_solve_scaled(problem.cost, problem.marginals, options);
    double tight_gap = transport_objective(tight.coupling, problem.cost) - exact.objective;
    CHECK(std::abs(tight_gap) <= 1e-3);
    CHECK(tight.marginal_residual <= 1e-6);
  }
}

TEST_CASE("marginals are met within 1e-6 at the iteration cap") {
  std::mt19937_64 gen(12);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(gen);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    SinkhornOptions options;
    options.epsilon = 0.01;
    options.max_iterations = 10000;
    options.tolerance = 1e-8;
    auto solution = sinkhorn_solve(problem.cost, problem.marginals, options);
    CHECK(solution.marginal_residual <= 1e-6);
    CHECK((solution.coupling.array() >= 0).all());
  }
}

TEST_CASE("sinkhorn is blockwise ascent on the entropic dual") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_instance(gen);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    std::vector<double> duals;
    SinkhornOptions options;
    options.epsilon = 0.05;
    options.max_iterations = 200;
    options.tolerance = 1e-12;
    options.on_iteration = [&](int, const Matrix&, const Vector& log_a, const Vector& log_b) {
      duals.push_back(entropic_dual_objective(problem.cost, problem.marginals,
                                              options.epsilon, log_a, log_b));
    };
    sinkhorn_solve(problem.cost, problem.marginals, options);
    REQUIRE(duals.size() > 2);
    for (std::size_t i = 1; i < duals.size(); ++i)
      CHECK(duals[i] >= duals[i - 1] - 1e-10);
  }
}

TEST_CASE("entropic objective gap shrinks as epsilon decreases") {
  std::mt19937_64 gen(14);
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_instance(gen);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    auto exact = lp_oracle(problem.cost, problem.marginals);
    std::vector<double> gaps;
    for (double eps : {0.1, 0.01, 0.001}) {
      SinkhornOptions options;
      options.epsilon = eps;
      options.max_iterations = 40000;
      options.tolerance = 1e-9;
      auto solution = sinkhorn_solve_scaled(problem.cost, problem.marginals, options);
      gaps.push_back(
          std::abs(transport_objective(solution.coupling, problem.cost) - exact.objective));
    }
    CHECK(gaps[1] <= gaps[0] + 1e-9);
    CHECK(gaps[2] <= gaps[1] + 1e-9);
  }
}

TEST_CASE("assignments are invariant to constant cost shifts") {
  std::mt19937_64 gen(15);
  for (int trial = 0; trial < 5; ++trial) {
    auto inst = random_instance(gen, 8, 3);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    SinkhornOptions options;
    options.epsilon = 0.02;
    options.max_iterations = 20000;
    options.tolerance = 1e-9;
    auto base = sinkhorn_solve(problem.cost, problem.marginals, options);

    // Shift only the real block; slack entries stay at zero cost, mirroring
    // how a rescaled probability floor shifts -log P uniformly.
    auto shifted_problem = problem;
    shifted_problem.cost.topLeftCorner(inst.cost.rows(), inst.cost.cols()).array() += 3.7;
    auto shifted = sinkhorn_solve(shifted_problem.cost, shifted_problem.marginals, options);

    auto a = extract_assignments(base.coupling, inst.cost.rows(), inst.cost.cols());
    auto b = extract_assignments(shifted.coupling, inst.cost.rows(), inst.cost.cols());
    // Same per-sample argmax class among the real columns.
    std::vector<int> label_a(inst.cost.rows(), -1), label_b(inst.cost.rows(), -1);
    for (auto& p : a) label_a[p.sample] = p.label;
    for (auto& p : b) label_b[p.sample] = p.label;
    for (int i = 0; i < inst.cost.rows(); ++i) {
      if (label_a[i] >= 0 && label_b[i] >= 0) CHECK(label_a[i] == label_b[i]);
    }
  }
}

TEST_CASE("assigned mass respects the allocation floor") {
  std::mt19937_64 gen(16);
  for (int trial = 0; trial < 10; ++trial) {
    auto inst = random_instance(gen);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    SinkhornOptions options;
    options.epsilon = 0.01;
    options.max_iterations = 20000;
    options.tolerance = 1e-8;
    auto solution = sinkhorn_solve(problem.cost, problem.marginals, options);
    const int n = inst.cost.rows(), k = inst.cost.cols();
    double assigned_mass = solution.coupling.topLeftCorner(n, k).sum();
    double floor = n * inst.rho * inst.bounds.w_minus.sum();
    CHECK(assigned_mass >= floor - 1e-6);
  }
}

TEST_CASE("extract_assignments rounding rules") {
  Matrix coupling(2, 3);
  SUBCASE("dominant class mass wins") {
    coupling << 0.9, 0.05, 0.05, 0.2, 0.2, 0.6;
    auto picks = extract_assignments(coupling, 1, 2);
    REQUIRE(picks.size() == 1);
    CHECK(picks[0].sample == 0);
    CHECK(picks[0].label == 0);
  }
  SUBCASE("slack-dominated rows stay unassigned") {
    coupling << 0.2, 0.2, 0.6, 0.0, 0.0, 1.0;
    CHECK(extract_assignments(coupling, 1, 2).empty());
  }
  SUBCASE("exact tie with the slack column stays unassigned") {
    coupling << 0.5, 0.0, 0.5, 0.0, 0.0, 1.0;
    CHECK(extract_assignments(coupling, 1, 2).empty());
  }
}

TEST_CASE("full allocation assigns every accepted sample") {
  // rho = 1 with sum(w_minus) = 1 zeroes the slack column marginal.
  std::mt19937_64 gen(17);
  auto inst = random_instance(gen, 8, 3);
  inst.bounds.w_minus = inst.bounds.w;  // slack factor 1 on the lower side
  inst.rho = 1.0;
  auto problem = build_augmented_problem(inst.cost, inst.bounds, 1.0);
  CHECK(problem.marginals.col[inst.cost.cols()] == doctest::Approx(0.0));
  SinkhornOptions options;
  options.epsilon = 0.01;
  options.max_iterations = 30000;
  options.tolerance = 1e-9;
  auto solution = sinkhorn_solve(problem.cost, problem.marginals, options);
  auto picks = extract_assignments(solution.coupling, inst.cost.rows(), inst.cost.cols());
  CHECK(static_cast<int>(picks.size()) == inst.cost.rows());
}

TEST_CASE("lp_oracle exact cases") {
  SUBCASE("single cell") {
    Matrix cost(1, 1);
    cost << 3.0;
    AugmentedMarginals marginals;
    marginals.row = Vector::Constant(1, 2.5);
    marginals.col = Vector::Constant(1, 2.5);
    auto solution = lp_oracle(cost, marginals);
    CHECK(solution.objective == doctest::Approx(7.5));
    CHECK(solution.coupling(0, 0) == doctest::Approx(2.5));
  }
  SUBCASE("identity-favoring 3x3 cost yields the permutation") {
    Matrix cost(3, 3);
    cost << 0, 1, 1, 1, 0, 1, 1, 1, 0;
    AugmentedMarginals marginals;
    marginals.row = Vector::Constant(3, 1.0);
    marginals.col = Vector::Constant(3, 1.0);
    auto solution = lp_oracle(cost, marginals);
    CHECK(solution.objective == doctest::Approx(0.0));
    for (int i = 0; i < 3; ++i) CHECK(solution.coupling(i, i) == doctest::Approx(1.0));
  }
  SUBCASE("oracle beats 1000 random feasible couplings") {
    std::mt19937_64 gen(18);
    auto inst = random_instance(gen, 5, 3);
    auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
    auto exact = lp_oracle(problem.cost, problem.marginals);

    // Random feasible couplings via proportional fitting of random positive
    // matrices to the marginals.
    std::uniform_real_distribution<double> unit(0.05, 1.0);
    const int rows = problem.cost.rows(), cols = problem.cost.cols();
    for (int sample = 0; sample < 1000; ++sample) {
      Matrix q(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) q(i, j) = unit(gen);
      for (int sweep = 0; sweep < 60; ++sweep) {
        for (int i = 0; i < rows; ++i) {
          double s = q.row(i).sum();
          if (s > 0) q.row(i) *= problem.marginals.row[i] / s;
        }
        for (int j = 0; j < cols; ++j) {
          double s = q.col(j).sum();
          if (s > 0) q.col(j) *= problem.marginals.col[j] / s;
        }
      }
      CHECK(transport_objective(q, problem.cost) >= exact.objective - 1e-6);
    }
  }
  SUBCASE("dual certificate: reduced costs are nonnegative") {
    std::mt19937_64 gen(19);
    for (int trial = 0; trial < 20; ++trial) {
      auto inst = random_instance(gen);
      auto problem = build_augmented_problem(inst.cost, inst.bounds, inst.rho);
      auto solution = lp_oracle(problem.cost, problem.marginals);
      for (int i = 0; i < problem.cost.rows(); ++i)
        for (int j = 0; j < problem.cost.cols(); ++j)
          CHECK(problem.cost(i, j) - solution.row_potentials[i] - solution.col_potentials[j] >=
                -1e-8);
      // primal feasibility
      CHECK((solution.coupling.rowwise().sum() - problem.marginals.row).cwiseAbs().maxCoeff() <=
            1e-8);
      CHECK((solution.coupling.colwise().sum().transpose() - problem.marginals.col)
                .cwiseAbs()
                .maxCoeff() <= 1e-8);
    }
  }
  SUBCASE("oversized instances are rejected") {
    Matrix cost = Matrix::Zero(20, 9);
    AugmentedMarginals marginals;
    marginals.row = Vector::Constant(20, 1.0);
    marginals.col = Vector::Constant(9, 20.0 / 9.0);
    CHECK_THROWS_WITH_AS(lp_oracle(cost, marginals), doctest::Contains("too large"), Error);
  }
}

TEST_CASE("unbalanced marginals are rejected") {
  Matrix cost = Matrix::Zero(2, 2);
  AugmentedMarginals marginals;
  marginals.row = Vector::Constant(2, 1.0);
  marginals.col = Vector::Constant(2, 2.0);
  SinkhornOptions options;
  CHECK_THROWS_AS(sinkhorn_solve(cost, marginals, options), Error);
  CHECK_THROWS_AS(lp_oracle(cost, marginals), Error);
}
