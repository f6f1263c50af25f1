#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <filesystem>
#include <fstream>

#include "csa/confidence.hpp"

using namespace csa;

namespace {

PredictionTensor random_tensor(int models, int samples, int classes, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> unit(0.01, 1.0);
  PredictionTensor tensor;
  for (int m = 0; m < models; ++m) {
    Matrix slice(samples, classes);
    for (int i = 0; i < samples; ++i) {
      double total = 0;
      for (int k = 0; k < classes; ++k) {
        slice(i, k) = unit(gen);
        total += slice(i, k);
      }
      slice.row(i) /= total;
    }
    tensor.slices.push_back(slice);
  }
  return tensor;
}

PredictionTensor tensor_from_rows(const std::vector<Matrix>& rows) {
  PredictionTensor tensor;
  tensor.slices = rows;
  return tensor;
}

}  // namespace

TEST_CASE("top_two_classes ordering and ties") {
  SUBCASE("clear ordering") {
    Matrix slice(1, 3);
    slice << 0.7, 0.2, 0.1;
    auto stats = top_two_classes(tensor_from_rows({slice}), 0);
    CHECK(stats.top_class == 0);
    CHECK(stats.second_class == 1);
    CHECK(stats.top_mean == doctest::Approx(0.7));
    CHECK(stats.second_mean == doctest::Approx(0.2));
  }
  SUBCASE("exact tie breaks toward the lower index") {
    Matrix slice(1, 2);
    slice << 0.5, 0.5;
    auto stats = top_two_classes(tensor_from_rows({slice}), 0);
    CHECK(stats.top_class == 0);
    CHECK(stats.second_class == 1);
  }
  SUBCASE("matches a full-sort oracle on random tensors") {
    PredictionTensor tensor = random_tensor(5, 40, 4, 1234);
    Matrix mean = mean_probabilities(tensor);
    for (int i = 0; i < 40; ++i) {
      std::vector<int> order{0, 1, 2, 3};
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return mean(i, a) > mean(i, b); });
      auto stats = top_two_classes(tensor, i);
      CHECK(stats.top_class == order[0]);
      CHECK(stats.second_class == order[1]);
      double var = 0;
      for (int m = 0; m < 5; ++m)
        var += std::pow(tensor.slices[m](i, order[0]) - mean(i, order[0]), 2);
      CHECK(stats.top_variance == doctest::Approx(var / 5).epsilon(1e-12));
    }
  }
}

TEST_CASE("welch_t_value") {
  SUBCASE("equal means give zero") {
    CHECK(welch_t_value(0.4, 0.4, 0.02, 0.05, 10) == doctest::Approx(0.0));
  }
  SUBCASE("hand-computed value") {
    // (0.8 - 0.2) / sqrt((0.01 + 0.01) / 20) = 0.6 / sqrt(0.001)
    CHECK(welch_t_value(0.8, 0.2, 0.01, 0.01, 20) ==
          doctest::Approx(18.9736659610103).epsilon(1e-12));
  }
  SUBCASE("consensus with distinct means is infinitely confident") {
    CHECK(std::isinf(welch_t_value(0.9, 0.1, 0.0, 0.0, 5)));
    CHECK(welch_t_value(0.9, 0.1, 0.0, 0.0, 5) > 0);
    CHECK(welch_t_value(0.5, 0.5, 0.0, 0.0, 5) == 0.0);
  }
  SUBCASE("antisymmetric under swapping the two classes") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
      double mu1 = unit(gen), mu2 = unit(gen);
      double v1 = 0.1 * unit(gen), v2 = 0.1 * unit(gen);
      CHECK(welch_t_value(mu1, mu2, v1, v2, 8) ==
            doctest::Approx(-welch_t_value(mu2, mu1, v2, v1, 8)));
    }
  }
  SUBCASE("requires at least two models") {
    CHECK_THROWS_AS(welch_t_value(0.8, 0.2, 0.01, 0.01, 1), Error);
  }
}

TEST_CASE("welch_degrees_of_freedom") {
  // equal variances: (M-1) * (2v)^2 / (2v^2) = 2(M-1)
  CHECK(welch_degrees_of_freedom(0.03, 0.03, 20) == doctest::Approx(38.0));
  // one-sided: v^2 / v^2 = 1 with M = 2
  CHECK(welch_degrees_of_freedom(0.2, 0.0, 2) == doctest::Approx(1.0));
  // 9 * (0.05)^2 / (0.0016 + 0.0001)
  CHECK(welch_degrees_of_freedom(0.04, 0.01, 10) ==
        doctest::Approx(9.0 * 0.0025 / 0.0017).epsilon(1e-12));
  CHECK_THROWS_AS(welch_degrees_of_freedom(0.0, 0.0, 10), Error);
  CHECK_THROWS_AS(welch_degrees_of_freedom(0.1, 0.1, 1), Error);
}

TEST_CASE("total_variance") {
  SUBCASE("consensus tensors have zero variance") {
    Matrix slice(1, 3);
    slice << 0.6, 0.3, 0.1;
    auto tensor = tensor_from_rows({slice, slice, slice});
    CHECK(total_variance(tensor, 0) == doctest::Approx(0.0));
  }
  SUBCASE("two opposing binary models") {
    Matrix a(1, 2), b(1, 2);
    a << 1, 0;
    b << 0, 1;
    CHECK(total_variance(tensor_from_rows({a, b}), 0) == doctest::Approx(0.25));
  }
  SUBCASE("matches the double-loop oracle") {
    PredictionTensor tensor = random_tensor(7, 25, 3, 99);
    for (int i = 0; i < 25; ++i) {
      double expected = 0;
      for (int k = 0; k < 3; ++k) {
        double mean = 0;
        for (int m = 0; m < 7; ++m) mean += tensor.slices[m](i, k);
        mean /= 7;
        double var = 0;
        for (int m = 0; m < 7; ++m) var += std::pow(tensor.slices[m](i, k) - mean, 2);
        expected += var / 7;
      }
      expected /= 3;
      CHECK(total_variance(tensor, i) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("total_entropy") {
  SUBCASE("one-hot average has zero entropy") {
    Matrix slice(1, 3);
    slice << 1, 0, 0;
    CHECK(total_entropy(tensor_from_rows({slice, slice}), 0) == doctest::Approx(0.0));
  }
  SUBCASE("uniform over four classes gives ln 4") {
    Matrix slice(1, 4);
    slice << 0.25, 0.25, 0.25, 0.25;
    CHECK(total_entropy(tensor_from_rows({slice}), 0) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
  }
  SUBCASE("hand-computed mixed distribution") {
    Matrix slice(1, 3);
    slice << 0.5, 0.25, 0.25;
    // 0.5*ln2 + 2*0.25*ln4 = 1.0397207708399179
    CHECK(total_entropy(tensor_from_rows({slice}), 0) ==
          doctest::Approx(1.0397207708399179).epsilon(1e-12));
  }
}

TEST_CASE("select_confident") {
  ConfidenceReport report;
  report.t_value = {1.5, 2.0, 3.7};
  report.degrees_of_freedom = {1, 1, 1};
  report.variance = {0.1, 0.2, 0.3};
  report.entropy = {0.5, 0.4, 0.3};
  report.top_class = {0, 0, 0};
  report.second_class = {1, 1, 1};

  SUBCASE("t-test threshold is inclusive") {
    auto accepted = select_confident(report, ConfidenceCriterion::kTTest, {});
    CHECK(accepted == std::vector<int>{1, 2});
  }
  SUBCASE("variance keeps the lowest-scoring fraction with index ties") {
    ConfidenceReport r;
    r.t_value = {0, 0, 0, 0};
    r.degrees_of_freedom = {0, 0, 0, 0};
    r.variance = {0.1, 0.2, 0.3, 0.4};
    r.entropy = {1, 1, 1, 1};
    r.top_class = {0, 0, 0, 0};
    r.second_class = {1, 1, 1, 1};
    auto accepted = select_confident(r, ConfidenceCriterion::kTotalVariance, {});
    CHECK(accepted == std::vector<int>{0, 1});
    auto by_entropy = select_confident(r, ConfidenceCriterion::kEntropy, {});
    CHECK(by_entropy == std::vector<int>{0, 1});  // all tied, lowest indices win
  }
  SUBCASE("an all-rejected report yields the empty signal") {
    ConfidenceReport r;
    r.t_value = {0.0, 0.0, 0.0};
    r.degrees_of_freedom = {1, 1, 1};
    r.variance = {0, 0, 0};
    r.entropy = {0, 0, 0};
    r.top_class = {0, 0, 0};
    r.second_class = {1, 1, 1};
    CHECK(select_confident(r, ConfidenceCriterion::kTTest, {}).empty());
  }
  SUBCASE("raising the threshold never accepts a previously rejected sample") {
    ConfidenceParams low{1.5, 0.5}, high{3.0, 0.5};
    auto loose = select_confident(report, ConfidenceCriterion::kTTest, low);
    auto strict = select_confident(report, ConfidenceCriterion::kTTest, high);
    for (int idx : strict)
      CHECK(std::find(loose.begin(), loose.end(), idx) != loose.end());
  }
}

TEST_CASE("statistics are invariant to permuting the model axis") {
  PredictionTensor tensor = random_tensor(6, 10, 3, 2024);
  PredictionTensor shuffled = tensor;
  std::mt19937_64 gen(1);
  std::shuffle(shuffled.slices.begin(), shuffled.slices.end(), gen);

  ConfidenceReport a = compute_confidence(tensor);
  ConfidenceReport b = compute_confidence(shuffled);
  for (int i = 0; i < 10; ++i) {
    CHECK(a.t_value[i] == doctest::Approx(b.t_value[i]).epsilon(1e-12));
    CHECK(a.variance[i] == doctest::Approx(b.variance[i]).epsilon(1e-12));
    CHECK(a.entropy[i] == doctest::Approx(b.entropy[i]).epsilon(1e-12));
    CHECK(a.top_class[i] == b.top_class[i]);
    CHECK(a.second_class[i] == b.second_class[i]);
  }
}

TEST_CASE("argmax of the mean is recomputed, not cached") {
  // A constant-prediction model that agrees with the old argmax must not flip
  // the top/second ordering.
  Matrix a(1, 3), b(1, 3), constant(1, 3);
  a << 0.6, 0.3, 0.1;
  b << 0.5, 0.4, 0.1;
  constant << 0.34, 0.33, 0.33;
  auto before = top_two_classes(tensor_from_rows({a, b}), 0);
  auto after = top_two_classes(tensor_from_rows({a, b, constant}), 0);
  CHECK(before.top_class == after.top_class);
  CHECK(before.second_class == after.second_class);
  CHECK(after.top_mean == doctest::Approx((0.6 + 0.5 + 0.34) / 3));
}

TEST_CASE("confidence report exports one CSV row per sample") {
  PredictionTensor tensor = random_tensor(4, 6, 3, 7);
  ConfidenceReport report = compute_confidence(tensor);
  auto path = (std::filesystem::temp_directory_path() / "csa_confidence.csv").string();
  write_confidence_csv(report, path);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 7);  // header + 6 samples
}
