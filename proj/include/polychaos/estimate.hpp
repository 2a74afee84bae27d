#pragma once

// Bayesian moment-matching update of a scalar parameter expansion from noisy
// measurements y = forward(theta) + noise, noise ~ N(0, noise_std^2).

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include "polychaos/pce.hpp"

namespace polychaos {

struct LikelihoodModel {
  std::function<double(double)> forward;
  double noise_std = 1.0;

  double density(double y, double theta) const;
};

struct MomentTargets {
  std::vector<double> b;  // b[m-1] = weighted E[theta^m], m = 1..M
  std::size_t samples = 0;
  double effective_sample_size = 0.0;

  int order() const noexcept { return static_cast<int>(b.size()); }
  double mean() const { return b.at(0); }
  double variance() const { return b.at(1) - b.at(0) * b.at(0); }
};

/// Importance-weighted posterior moments from k germ draws of the prior
/// expansion. Draws are stratified on the germ CDF (one per quantile cell).
MomentTargets posterior_moments(const PceVector& theta, double y, const LikelihoodModel& lik,
                                int m, std::size_t k, std::uint64_t seed);

struct RefitResult {
  PceVector pce;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // ||mu(c) - b||_2
};

/// Gauss-Newton fit of the coefficients so the first M raw moments match the
/// targets; starts from `init` and fixes c_1 >= 0 on symmetric germs.
RefitResult refit_pce(const BasisPtr& basis, const MomentTargets& targets, const PceVector& init);

struct FilterConfig {
  int moments = 2;
  std::size_t samples = 10000;
  std::uint64_t seed = 0;
};

struct FilterResult {
  PceVector posterior;
  MomentTargets targets;
  RefitResult refit;
};

FilterResult filter_step(const PceVector& theta, double y, const LikelihoodModel& lik,
                         const FilterConfig& config);

struct FilterTraceRow {
  int step = 0;
  double y = 0.0;
  double mean = 0.0;
  double variance = 0.0;
  double ess = 0.0;
};

/// CSV: step,y,posterior_mean,posterior_variance,ess
void write_csv(std::ostream& os, const std::vector<FilterTraceRow>& rows);

}  // namespace polychaos
