#pragma once

// Univariate orthonormal polynomial families matched to probability measures.
//
// Every family lives on a standardized germ xi. The physical parameter is
// recovered through MeasureDescriptor::to_parameter, which is affine:
//   gaussian(mean, stddev)  xi ~ N(0,1)                 theta = mean + stddev*xi
//   uniform(lo, hi)         xi ~ U[-1,1]                theta = mid + half*xi
//   gamma(shape)            xi ~ Gamma(shape, 1)        theta = xi
//   beta(p, q)              xi = 2*theta - 1 in [-1,1]  theta = (1 + xi)/2
//   custom(density, lo, hi) xi has the given density    theta = xi

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace polychaos {

struct GaussianMeasure {
  double mean = 0.0;
  double stddev = 1.0;
};
struct UniformMeasure {
  double lo = -1.0;
  double hi = 1.0;
};
struct GammaMeasure {
  double shape = 1.0;
};
struct BetaMeasure {
  double p = 1.0;
  double q = 1.0;
};
struct CustomMeasure {
  std::function<double(double)> density;
  double lo = -1.0;
  double hi = 1.0;
};

enum class MeasureKind { gaussian, uniform, gamma, beta, custom };

class MeasureDescriptor {
 public:
  using Variant = std::variant<GaussianMeasure, UniformMeasure, GammaMeasure,
                               BetaMeasure, CustomMeasure>;

  MeasureDescriptor() : MeasureDescriptor(GaussianMeasure{}) {}
  /// Validates the parameters; throws InvalidArgument on violation.
  explicit MeasureDescriptor(Variant v);

  static MeasureDescriptor gaussian(double mean, double stddev);
  static MeasureDescriptor uniform(double lo, double hi);
  static MeasureDescriptor gamma(double shape);
  static MeasureDescriptor beta(double p, double q);
  static MeasureDescriptor custom(std::function<double(double)> density,
                                  double lo, double hi);

  MeasureKind kind() const noexcept {
    return static_cast<MeasureKind>(value_.index());
  }
  const Variant& value() const noexcept { return value_; }

  /// Support of the standardized germ (may be infinite).
  std::pair<double, double> germ_support() const;
  /// Density of the standardized germ.
  double germ_density(double xi) const;
  /// Affine map germ -> parameter: theta = offset + scale * xi.
  double offset() const;
  double scale() const;
  double to_parameter(double xi) const { return offset() + scale() * xi; }
  /// True when the germ density is even about zero.
  bool symmetric() const;

  std::string describe() const;

 private:
  Variant value_;
};

/// Nodes and weights of a probability-weighted quadrature rule.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  int exact_degree = 0;
};

/// Orthonormal family defined through a monic three-term recurrence
///   pi_{n+1}(x) = (x - a_n) pi_n(x) - b_n pi_{n-1}(x),  pi_0 = 1,
/// with b_0 = 1 (probability measure). The orthonormal polynomial is
/// phi_n = pi_n / h_n where h_n^2 = b_0 b_1 ... b_n.
class PolynomialFamily {
 public:
  PolynomialFamily(MeasureDescriptor measure, std::vector<double> recur_a,
                   std::vector<double> recur_b, int quad_points = 0);

  const MeasureDescriptor& measure() const noexcept { return measure_; }
  int max_degree() const noexcept { return static_cast<int>(a_.size()) - 1; }
  std::span<const double> recur_a() const noexcept { return a_; }
  std::span<const double> recur_b() const noexcept { return b_; }
  std::span<const double> norms() const noexcept { return h_; }
  /// Discretization resolution used by the Stieltjes builder (0 = closed form).
  int quad_points() const noexcept { return quad_points_; }

  double eval(int degree, double x) const;
  /// Values of phi_0..phi_{max_degree} at x.
  Eigen::VectorXd eval_all(double x) const;
  /// Monomial coefficients c_k of phi_degree(x) = sum_k c_k x^k.
  std::vector<double> monomial_coefficients(int degree) const;

 private:
  MeasureDescriptor measure_;
  std::vector<double> a_;
  std::vector<double> b_;
  std::vector<double> h_;
  int quad_points_;
};

/// Closed-form Askey family for gaussian, uniform, gamma and beta measures.
PolynomialFamily build_family(const MeasureDescriptor& measure, int max_degree);

/// Discretized Stieltjes procedure for a custom density. The density is
/// sampled on a composite 8-point Gauss-Legendre rule with quad_points / 8
/// panels over the declared support.
PolynomialFamily stieltjes_family(const MeasureDescriptor& measure,
                                  int max_degree, int quad_points = 512);

/// Same measure, recurrence extended (or kept) to at least max_degree.
PolynomialFamily extend_family(const PolynomialFamily& family, int max_degree);

double eval_poly(const PolynomialFamily& family, int degree, double x);

/// Golub-Welsch rule with n_nodes nodes, exact up to degree 2*n_nodes - 1.
QuadratureRule gauss_rule(const PolynomialFamily& family, int n_nodes);

/// Quadrature approximation of E[f(xi) g(xi)].
double inner_product(const PolynomialFamily& family,
                     const std::function<double(double)>& f,
                     const std::function<double(double)>& g,
                     const QuadratureRule& rule);

namespace detail {
/// Eigen-decomposition of the symmetric tridiagonal matrix with the given
/// diagonal and off-diagonal (length n-1). Returns eigenvalues ascending and
/// the squared first components of the normalized eigenvectors.
std::pair<std::vector<double>, std::vector<double>> tridiagonal_eigen(
    std::vector<double> diag, std::vector<double> offdiag);
}  // namespace detail

}  // namespace polychaos
