#include "polychaos/estimate.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include "polychaos/error.hpp"
#include "polychaos/io.hpp"
#include "polychaos/sampling.hpp"

namespace polychaos {

namespace {
constexpr double kCollapseFloor = 1e-300;
constexpr double kRefitTolerance = 1e-10;
constexpr int kRefitCap = 200;
constexpr int kMaxMoments = 4;
}  // namespace

double LikelihoodModel::density(double y, double theta) const {
  const double r = (y - forward(theta)) / noise_std;
  return std::exp(-0.5 * r * r) / (noise_std * std::sqrt(2.0 * std::numbers::pi));
}

MomentTargets posterior_moments(const PceVector& theta, double y, const LikelihoodModel& lik,
                                int m, std::size_t k, std::uint64_t seed) {
  if (theta.rows() != 1) throw DimensionMismatch("parameter expansion must be scalar");
  if (m < 2 || m > kMaxMoments) throw InvalidArgument("moment count must lie in [2, 4]");
  if (k < 100) throw InvalidArgument("posterior_moments needs at least 100 samples");
  if (!lik.forward || !(lik.noise_std > 0.0))
    throw InvalidArgument("likelihood needs a forward map and noise_std > 0");

  const BasisSampler sampler(*theta.basis());
  std::vector<double> draws(k);
  std::vector<double> weights(k);
  for (std::size_t j = 0; j < k; ++j) {
    auto rng = substream(seed, j);
    Eigen::VectorXd xi = sampler(rng);
    // stratify the leading germ component
    xi[0] = sampler.component(0).quantile((static_cast<double>(j) + rng.uniform()) /
                                          static_cast<double>(k));
    draws[j] = sample_eval(theta, xi)[0];
    weights[j] = lik.density(y, draws[j]);
  }
  double total = 0.0;
  double total2 = 0.0;
  bool any_alive = false;
  for (double w : weights) {
    total += w;
    total2 += w * w;
    any_alive = any_alive || w >= kCollapseFloor;
  }
  if (!any_alive)
    throw LikelihoodCollapse("every likelihood weight is below 1e-300; the measurement is "
                             "inconsistent with the prior support");

  MomentTargets out;
  out.b.assign(m, 0.0);
  for (std::size_t j = 0; j < k; ++j) {
    const double w = weights[j] / total;
    double p = 1.0;
    for (int order = 0; order < m; ++order) {
      p *= draws[j];
      out.b[order] += w * p;
    }
  }
  out.samples = k;
  out.effective_sample_size = total * total / total2;
  return out;
}

RefitResult refit_pce(const BasisPtr& basis, const MomentTargets& targets, const PceVector& init) {
  if (basis->dimension() != 1) throw InvalidArgument("refit_pce expects a one-dimensional basis");
  if (init.rows() != 1 || init.basis()->id() != basis->id())
    throw DimensionMismatch("initial expansion does not match the basis");
  const int m = targets.order();
  if (m < 2 || m > kMaxMoments) throw InvalidArgument("moment count must lie in [2, 4]");
  const auto n = init.terms();
  if (n > m + 1)
    throw InvalidArgument("refit needs at most M + 1 free coefficients");
  const auto rule = tensor_rule_for_degree(*basis, m * basis->degree());
  const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(targets.b.data(), m);

  const auto moments = [&](const Eigen::RowVectorXd& c) {
    const PceVector p(basis, c);
    Eigen::VectorXd mu(m);
    mu[0] = c[0];
    mu[1] = c.squaredNorm();
    for (int order = 3; order <= m; ++order) mu[order - 1] = raw_moment(p, order, rule)[0];
    return mu;
  };

  Eigen::RowVectorXd c = init.coeffs().row(0);
  Eigen::VectorXd r = moments(c) - b;
  RefitResult out{init, false, 0, r.norm()};
  Eigen::RowVectorXd best = c;
  double best_res = r.norm();
  int it = 0;
  while (r.norm() > kRefitTolerance && it < kRefitCap) {
    ++it;
    Eigen::MatrixXd jac(m, n);
    jac.setZero();
    jac(0, 0) = 1.0;
    jac.row(1) = 2.0 * c;
    for (int order = 3; order <= m; ++order) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(c[i]));
        Eigen::RowVectorXd cp = c;
        Eigen::RowVectorXd cm = c;
        cp[i] += h;
        cm[i] -= h;
        jac(order - 1, i) = (moments(cp)[order - 1] - moments(cm)[order - 1]) / (2.0 * h);
      }
    }
    const Eigen::VectorXd delta = jac.completeOrthogonalDecomposition().solve(-r);
    c += delta.transpose();
    r = moments(c) - b;
    if (r.norm() < best_res) {
      best_res = r.norm();
      best = c;
    }
    if (delta.norm() <= kRefitTolerance * std::max(1.0, c.norm())) break;
  }
  if (n > 1 && basis->families()[0].measure().symmetric() && best[1] < 0.0) {
    for (Eigen::Index i = 1; i < n; i += 2) best[i] = -best[i];
  }
  out.pce = PceVector(basis, best);
  out.iterations = it;
  out.residual = best_res;
  out.converged = best_res <= kRefitTolerance;
  return out;
}

FilterResult filter_step(const PceVector& theta, double y, const LikelihoodModel& lik,
                         const FilterConfig& config) {
  auto targets = posterior_moments(theta, y, lik, config.moments, config.samples, config.seed);
  auto refit = refit_pce(theta.basis(), targets, theta);
  auto posterior = refit.pce;
  return FilterResult{std::move(posterior), std::move(targets), std::move(refit)};
}

void write_csv(std::ostream& os, const std::vector<FilterTraceRow>& rows) {
  os << "step,y,posterior_mean,posterior_variance,ess\n";
  for (const auto& r : rows)
    os << r.step << ',' << format_double(r.y) << ',' << format_double(r.mean) << ','
       << format_double(r.variance) << ',' << format_double(r.ess) << '\n';
}

}  // namespace polychaos
