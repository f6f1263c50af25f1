#include <benchmark/benchmark.h>

#include "csa/dataset.hpp"
#include "csa/ensemble.hpp"

namespace {

csa::TabularDataset benchmark_mixture(int per_class, int dim) {
  csa::GaussianMixtureSpec spec;
  spec.class_means = csa::Matrix::Zero(3, dim);
  spec.class_means(0, 0) = 2.0;
  spec.class_means(1, 1) = 2.0;
  spec.class_means(2, 2) = 2.0;
  spec.noise_variances = csa::Vector::Ones(dim);
  spec.samples_per_class = {per_class, per_class, per_class};
  return csa::sample_gaussian_mixture(spec, 7);
}

void BM_LogisticFit(benchmark::State& state) {
  auto data = benchmark_mixture(static_cast<int>(state.range(0)), 10);
  csa::ClassifierSpec spec;
  spec.epochs = 300;
  spec.learning_rate = 0.1;
  spec.seed = 11;
  for (auto _ : state) {
    auto model = csa::LogisticModel::fit(spec, data.features, data.labels, 3);
    benchmark::DoNotOptimize(model.coefficients());
  }
}

void BM_PredictTensor(benchmark::State& state) {
  auto train = benchmark_mixture(40, 10);
  auto eval = benchmark_mixture(static_cast<int>(state.range(0)), 10);
  auto specs = csa::sample_specs(20, {}, 3);
  auto ensemble = csa::EnsembleModel::fit(specs, train.features, train.labels, 3);
  for (auto _ : state) {
    auto tensor = ensemble.predict_tensor(eval.features);
    benchmark::DoNotOptimize(tensor.slices.back()(0, 0));
  }
}

}  // namespace

BENCHMARK(BM_LogisticFit)->Arg(40)->Arg(400)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictTensor)->Arg(100)->Arg(1000)->Unit(benchmark::kMillisecond);
