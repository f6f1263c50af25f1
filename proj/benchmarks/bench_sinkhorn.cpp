#include <benchmark/benchmark.h>

#include <random>

#include "csa/sinkhorn.hpp"

namespace {

csa::AugmentedProblem random_problem(int n, int k, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  csa::Matrix probs(n, k);
  for (int i = 0; i < n; ++i) {
    double total = 0.0;
    for (int j = 0; j < k; ++j) {
      probs(i, j) = 0.05 + unit(gen);
      total += probs(i, j);
    }
    probs.row(i) /= total;
  }
  csa::Matrix cost = -probs.array().log();
  csa::ClassFrequencyBounds bounds;
  bounds.w = csa::Vector::Constant(k, 1.0 / k);
  bounds.w_plus = 1.1 * bounds.w;
  bounds.w_minus = 0.9 * bounds.w;
  return csa::build_augmented_problem(cost, bounds, 0.5);
}

void BM_SinkhornSolve(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int k = static_cast<int>(state.range(1));
  auto problem = random_problem(n, k, 42);
  csa::SinkhornOptions options;
  options.epsilon = 0.01;
  options.max_iterations = 1000;
  for (auto _ : state) {
    auto solution = csa::sinkhorn_solve(problem.cost, problem.marginals, options);
    benchmark::DoNotOptimize(solution.marginal_residual);
  }
}

void BM_SinkhornScaled(benchmark::State& state) {
  auto problem = random_problem(static_cast<int>(state.range(0)), 4, 42);
  csa::SinkhornOptions options;
  options.epsilon = 0.001;
  options.max_iterations = 20000;
  options.tolerance = 1e-7;
  for (auto _ : state) {
    auto solution = csa::sinkhorn_solve_scaled(problem.cost, problem.marginals, options);
    benchmark::DoNotOptimize(solution.marginal_residual);
  }
}

}  // namespace

BENCHMARK(BM_SinkhornSolve)->Args({100, 3})->Args({500, 3})->Args({2000, 3})->Args({500, 10})
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SinkhornScaled)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
