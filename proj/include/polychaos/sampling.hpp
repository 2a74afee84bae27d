#pragma once

// Seeded, counter-addressable random streams and germ samplers shared by the
// Monte Carlo oracle, the closed-loop harness and the parameter filter.

#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "polychaos/multibasis.hpp"

namespace polychaos {

/// SplitMix64 generator; cheap to seed, so every sample gets its own stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

/// Independent stream `stream` derived from `seed`.
SplitMix64 substream(std::uint64_t seed, std::uint64_t stream);

/// Draws from the standardized germ of one measure.
class GermSampler {
 public:
  explicit GermSampler(const MeasureDescriptor& measure);

  double operator()(SplitMix64& rng) const;
  /// Inverse CDF of the germ.
  double quantile(double u) const;

 private:
  MeasureDescriptor measure_;
  std::vector<double> cdf_x_;  // custom measures only
  std::vector<double> cdf_p_;
};

/// Product sampler over all germ components of a basis.
class BasisSampler {
 public:
  explicit BasisSampler(const TotalDegreeBasis& basis);
  Eigen::VectorXd operator()(SplitMix64& rng) const;
  int dimension() const noexcept { return static_cast<int>(samplers_.size()); }
  const GermSampler& component(int k) const { return samplers_.at(k); }

 private:
  std::vector<GermSampler> samplers_;
};

/// Worker count from POLYCHAOS_THREADS, else hardware concurrency.
int worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Results must
/// be written to per-index slots so the outcome is independent of scheduling.
template <class Body>
void parallel_for(std::size_t n, Body&& body) {
  const auto workers = static_cast<std::size_t>(std::max(1, worker_count()));
  if (workers <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t used = std::min(workers, n);
  pool.reserve(used);
  for (std::size_t w = 0; w < used; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += used) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Streaming central moments up to order four (mergeable).
struct MomentAccumulator {
  double n = 0.0;
  double mean = 0.0;
  double m2 = 0.0;
  double m3 = 0.0;
  double m4 = 0.0;

  void add(double x) noexcept;
  void merge(const MomentAccumulator& other) noexcept;
  /// Unbiased sample variance.
  double variance() const noexcept { return n > 1.0 ? m2 / (n - 1.0) : 0.0; }
  double stderr_mean() const noexcept { return n > 0.0 ? std::sqrt(variance() / n) : 0.0; }
  /// Large-sample standard error of the sample variance.
  double stderr_variance() const noexcept;
};

}  // namespace polychaos
