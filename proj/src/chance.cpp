#include "polychaos/chance.hpp"

#include <cmath>
#include <numeric>

#include "polychaos/error.hpp"

namespace polychaos {

Polytope::Polytope(Eigen::MatrixXd g_, Eigen::VectorXd bounds_)
    : g(std::move(g_)), bounds(std::move(bounds_)) {
  if (g.rows() != bounds.size()) throw DimensionMismatch("polytope rows and bounds differ");
  for (Eigen::Index j = 0; j < g.rows(); ++j)
    if (g.row(j).cwiseAbs().maxCoeff() == 0.0)
      throw InvalidArgument("polytope row " + std::to_string(j) + " is all zero");
}

double Polytope::max_violation(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != g.cols()) throw DimensionMismatch("point dimension does not match polytope");
  return (g * x - bounds).maxCoeff();
}

ChanceSpec::ChanceSpec(double beta_, std::vector<double> eps_) : beta(beta_), eps(std::move(eps_)) {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
  for (double e : eps)
    if (!(e > 0.0)) throw InvalidArgument("every violation budget must be positive");
  const double total = std::accumulate(eps.begin(), eps.end(), 0.0);
  if (std::abs(total - (1.0 - beta)) > 1e-12)
    throw InvalidArgument("violation budgets must sum to 1 - beta");
}

ChanceSpec boole_allocate(double beta, int n_c) {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
  if (n_c < 1) throw InvalidArgument("need at least one constraint row");
  return ChanceSpec(beta, std::vector<double>(n_c, (1.0 - beta) / n_c));
}

double cantelli_factor(double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("eps must lie in (0, 1)");
  return std::sqrt((1.0 - eps) / eps);
}

double cantelli_residual(double mean_g, double std_g, double eps) {
  if (std_g < 0.0) throw InvalidArgument("standard deviation must be nonnegative");
  return mean_g + cantelli_factor(eps) * std_g;
}

std::pair<double, double> pce_halfspace_moments(const PceVector& x,
                                                const Eigen::Ref<const Eigen::VectorXd>& a,
                                                double b) {
  if (a.size() != x.rows()) throw DimensionMismatch("halfspace normal does not match state");
  const Eigen::RowVectorXd proj = a.transpose() * x.coeffs();
  const double m = proj[0] + b;
  const double s = proj.size() > 1 ? proj.tail(proj.size() - 1).norm() : 0.0;
  return {m, s};
}

double saa_joint_probability(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                             const Polytope& poly) {
  if (samples.cols() < 1) throw InvalidArgument("SAA needs at least one sample");
  long inside = 0;
  for (Eigen::Index k = 0; k < samples.cols(); ++k)
    if (poly.contains(samples.col(k))) ++inside;
  return static_cast<double>(inside) / static_cast<double>(samples.cols());
}

double chebyshev_radius(int n_x, double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw InvalidArgument("beta must lie in (0, 1)");
  return std::sqrt(static_cast<double>(n_x) / (1.0 - beta));
}

bool ellipsoid_inclusion(const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::Ref<const Eigen::MatrixXd>& cov, double r,
                         const Polytope& poly) {
  if (r < 0.0) throw InvalidArgument("ellipsoid radius must be nonnegative");
  if (cov.rows() != cov.cols() || cov.rows() != mean.size() || mean.size() != poly.dimension())
    throw DimensionMismatch("ellipsoid and polytope dimensions differ");
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-12 * scale)
    throw InvalidArgument("covariance must be positive semidefinite");
  for (Eigen::Index j = 0; j < poly.rows(); ++j) {
    const Eigen::VectorXd gj = poly.g.row(j).transpose();
    const double spread = std::sqrt(std::max(0.0, gj.dot(cov * gj)));
    if (gj.dot(mean) + r * spread > poly.bounds[j]) return false;
  }
  return true;
}

std::vector<RowReport> violation_report(const PceVector& x, const Polytope& poly,
                                        const ChanceSpec& spec) {
  if (static_cast<Eigen::Index>(spec.eps.size()) != poly.rows())
    throw DimensionMismatch("chance allocation does not match polytope rows");
  std::vector<RowReport> out;
  out.reserve(spec.eps.size());
  for (Eigen::Index j = 0; j < poly.rows(); ++j) {
    const auto [m, s] = pce_halfspace_moments(x, poly.g.row(j).transpose(), -poly.bounds[j]);
    out.push_back({m, s, spec.eps[j], cantelli_residual(m, s, spec.eps[j])});
  }
  return out;
}

}  // namespace polychaos
