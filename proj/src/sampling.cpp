#include "polychaos/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <random>
#include <string>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include "polychaos/error.hpp"

namespace polychaos {

namespace {
constexpr int kCustomCdfPoints = 4096;

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace

SplitMix64 substream(std::uint64_t seed, std::uint64_t stream) {
  return SplitMix64(mix(mix(seed + 0x632BE59BD9B4E019ULL) ^ (stream * 0x9E3779B97F4A7C15ULL)));
}

GermSampler::GermSampler(const MeasureDescriptor& measure) : measure_(measure) {
  if (measure_.kind() != MeasureKind::custom) return;
  const auto [lo, hi] = measure_.germ_support();
  cdf_x_.resize(kCustomCdfPoints + 1);
  cdf_p_.resize(kCustomCdfPoints + 1);
  const double h = (hi - lo) / kCustomCdfPoints;
  double prev = measure_.germ_density(lo);
  cdf_x_[0] = lo;
  cdf_p_[0] = 0.0;
  for (int k = 1; k <= kCustomCdfPoints; ++k) {
    const double x = lo + k * h;
    const double f = measure_.germ_density(x);
    cdf_x_[k] = x;
    cdf_p_[k] = cdf_p_[k - 1] + 0.5 * h * (prev + f);
    prev = f;
  }
  const double total = cdf_p_.back();
  if (!(total > 0.0)) throw DegenerateMeasure("custom density has zero mass");
  for (double& p : cdf_p_) p /= total;
}

double GermSampler::quantile(double u) const {
  u = std::clamp(u, 1e-300, 1.0 - 1e-16);
  switch (measure_.kind()) {
    case MeasureKind::gaussian:
      return boost::math::quantile(boost::math::normal_distribution<double>(0.0, 1.0), u);
    case MeasureKind::uniform:
      return 2.0 * u - 1.0;
    case MeasureKind::gamma: {
      const auto& m = std::get<GammaMeasure>(measure_.value());
      return boost::math::quantile(boost::math::gamma_distribution<double>(m.shape, 1.0), u);
    }
    case MeasureKind::beta: {
      const auto& m = std::get<BetaMeasure>(measure_.value());
      return 2.0 * boost::math::quantile(boost::math::beta_distribution<double>(m.p, m.q), u) -
             1.0;
    }
    case MeasureKind::custom: {
      const auto it = std::lower_bound(cdf_p_.begin(), cdf_p_.end(), u);
      if (it == cdf_p_.begin()) return cdf_x_.front();
      if (it == cdf_p_.end()) return cdf_x_.back();
      const auto k = static_cast<std::size_t>(it - cdf_p_.begin());
      const double p0 = cdf_p_[k - 1];
      const double p1 = cdf_p_[k];
      const double t = p1 > p0 ? (u - p0) / (p1 - p0) : 0.0;
      return cdf_x_[k - 1] + t * (cdf_x_[k] - cdf_x_[k - 1]);
    }
  }
  return 0.0;
}

double GermSampler::operator()(SplitMix64& rng) const {
  switch (measure_.kind()) {
    case MeasureKind::gaussian:
      return std::normal_distribution<double>(0.0, 1.0)(rng);
    case MeasureKind::uniform:
      return 2.0 * rng.uniform() - 1.0;
    case MeasureKind::gamma: {
      const auto& m = std::get<GammaMeasure>(measure_.value());
      return std::gamma_distribution<double>(m.shape, 1.0)(rng);
    }
    case MeasureKind::beta: {
      const auto& m = std::get<BetaMeasure>(measure_.value());
      const double x = std::gamma_distribution<double>(m.p, 1.0)(rng);
      const double y = std::gamma_distribution<double>(m.q, 1.0)(rng);
      return 2.0 * x / (x + y) - 1.0;
    }
    case MeasureKind::custom:
      return quantile(rng.uniform());
  }
  return 0.0;
}

BasisSampler::BasisSampler(const TotalDegreeBasis& basis) {
  samplers_.reserve(basis.families().size());
  for (const auto& f : basis.families()) samplers_.emplace_back(f.measure());
}

Eigen::VectorXd BasisSampler::operator()(SplitMix64& rng) const {
  Eigen::VectorXd xi(dimension());
  for (int k = 0; k < dimension(); ++k) xi[k] = samplers_[k](rng);
  return xi;
}

int worker_count() {
  if (const char* env = std::getenv("POLYCHAOS_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n >= 1) return n;
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void MomentAccumulator::add(double x) noexcept {
  const double n1 = n;
  n += 1.0;
  const double delta = x - mean;
  const double delta_n = delta / n;
  const double delta_n2 = delta_n * delta_n;
  const double term1 = delta * delta_n * n1;
  mean += delta_n;
  m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * m2 - 4.0 * delta_n * m3;
  m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * m2;
  m2 += term1;
}

void MomentAccumulator::merge(const MomentAccumulator& o) noexcept {
  if (o.n == 0.0) return;
  if (n == 0.0) {
    *this = o;
    return;
  }
  const double na = n;
  const double nb = o.n;
  const double nt = na + nb;
  const double delta = o.mean - mean;
  const double d2 = delta * delta;
  const double d3 = d2 * delta;
  const double d4 = d2 * d2;
  const double new_m4 = m4 + o.m4 + d4 * na * nb * (na * na - na * nb + nb * nb) / (nt * nt * nt) +
                        6.0 * d2 * (na * na * o.m2 + nb * nb * m2) / (nt * nt) +
                        4.0 * delta * (na * o.m3 - nb * m3) / nt;
  const double new_m3 = m3 + o.m3 + d3 * na * nb * (na - nb) / (nt * nt) +
                        3.0 * delta * (na * o.m2 - nb * m2) / nt;
  m2 = m2 + o.m2 + d2 * na * nb / nt;
  m3 = new_m3;
  m4 = new_m4;
  mean = mean + delta * nb / nt;
  n = nt;
}

double MomentAccumulator::stderr_variance() const noexcept {
  if (n < 2.0) return 0.0;
  const double mu2 = m2 / n;
  const double mu4 = m4 / n;
  return std::sqrt(std::max(0.0, mu4 - mu2 * mu2) / n);
}

}  // namespace polychaos
