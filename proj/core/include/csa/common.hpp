#pragma once

#include <Eigen/Dense>

#include <atomic>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

namespace csa {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Runtime failure inside an operation (maps to CLI exit code 1).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user-supplied configuration (maps to CLI exit code 2).
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent deterministic stream for (seed, stream). Used everywhere a
// sub-component needs its own engine so that scheduling cannot perturb draws.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline std::mt19937_64 engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(derive(seed, stream));
}

}  // namespace rng

// Counts reads of quarantined data (test features, hidden pool labels) that
// happen outside a sanctioned evaluation scope. Training, confidence scoring
// and transport never open a scope, so any read from those paths shows up in
// violation_count().
class LeakAudit {
 public:
  class EvalScope {
   public:
    EvalScope() { ++depth(); }
    ~EvalScope() { --depth(); }
    EvalScope(const EvalScope&) = delete;
    EvalScope& operator=(const EvalScope&) = delete;
  };

  static void on_hidden_label_read() { record(); }
  static void on_test_feature_read() { record(); }

  static std::int64_t violation_count() { return violations().load(); }
  static void reset() { violations().store(0); }

 private:
  static void record() {
    if (depth() == 0) violations().fetch_add(1, std::memory_order_relaxed);
  }
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
  static std::atomic<std::int64_t>& violations() {
    static std::atomic<std::int64_t> v{0};
    return v;
  }
};

// Bounded fan-out over [0, count). Results must be written to per-index slots
// so the outcome is independent of scheduling.
void parallel_for(int count, int workers, const std::function<void(int)>& body);

// CSA_WORKERS env var, else hardware concurrency.
int default_worker_count();

}  // namespace csa
