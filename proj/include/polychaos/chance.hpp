#pragma once

// Deterministic surrogates and empirical estimators for chance constraints on
// a polytope {x : G x <= bounds}.
//
// Conventions: beta is the joint *satisfaction* probability, eps_i is the
// per-row *violation* budget, sum_i eps_i = 1 - beta.

#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "polychaos/pce.hpp"

namespace polychaos {

struct Polytope {
  Eigen::MatrixXd g;       // n_c x n_x
  Eigen::VectorXd bounds;  // n_c

  Polytope() = default;
  Polytope(Eigen::MatrixXd g, Eigen::VectorXd bounds);

  Eigen::Index rows() const noexcept { return g.rows(); }
  Eigen::Index dimension() const noexcept { return g.cols(); }
  /// max_j (g_j^T x - d_j); x lies inside iff this is <= 0.
  double max_violation(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  bool contains(const Eigen::Ref<const Eigen::VectorXd>& x) const { return max_violation(x) <= 0.0; }
};

struct ChanceSpec {
  double beta = 0.9;
  std::vector<double> eps;

  ChanceSpec() = default;
  ChanceSpec(double beta, std::vector<double> eps);
};

/// Uniform Boole split eps_i = (1 - beta) / n_c.
ChanceSpec boole_allocate(double beta, int n_c);

/// sqrt((1 - eps) / eps), the Cantelli tightening factor.
double cantelli_factor(double eps);

/// mean_g + sqrt((1 - eps) / eps) * std_g; the row holds with probability at
/// least 1 - eps for every distribution with these moments iff this is <= 0.
double cantelli_residual(double mean_g, double std_g, double eps);

/// Mean and standard deviation of a^T x + b for a PCE state x.
std::pair<double, double> pce_halfspace_moments(const PceVector& x,
                                                const Eigen::Ref<const Eigen::VectorXd>& a,
                                                double b);

/// Fraction of sample columns (n_x x K) that lie inside the polytope.
double saa_joint_probability(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                             const Polytope& poly);

/// Default ellipsoid radius sqrt(n_x / (1 - beta)) from the multivariate
/// Chebyshev bound.
double chebyshev_radius(int n_x, double beta);

/// True iff g_j^T mean + r sqrt(g_j^T cov g_j) <= d_j for every row.
bool ellipsoid_inclusion(const Eigen::Ref<const Eigen::VectorXd>& mean,
                         const Eigen::Ref<const Eigen::MatrixXd>& cov, double r,
                         const Polytope& poly);

struct RowReport {
  double mean_g = 0.0;
  double std_g = 0.0;
  double eps = 0.0;
  double residual = 0.0;
};

/// Per-row Cantelli residuals of a PCE state against a polytope; serialized
/// to JSON by the scenario runner.
std::vector<RowReport> violation_report(const PceVector& x, const Polytope& poly,
                                        const ChanceSpec& spec);

}  // namespace polychaos
