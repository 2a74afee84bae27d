#pragma once

// Polynomial expressions in named parameters, e.g. "1 + 0.5*theta1^2 - theta2",
// rewritten in the standardized germ and expanded exactly on a basis.

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polychaos/multibasis.hpp"

namespace polychaos {

class Polynomial {
 public:
  explicit Polynomial(int variables = 0) : variables_(variables) {}
  static Polynomial constant(int variables, double c);
  /// offset + scale * xi_k
  static Polynomial affine(int variables, int k, double offset, double scale);

  int variables() const noexcept { return variables_; }
  int degree() const;
  const std::map<std::vector<int>, double>& terms() const noexcept { return terms_; }
  bool is_constant() const;
  double constant_term() const;
  double eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const;

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator-(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial scaled(double s) const;
  Polynomial pow(int e) const;

 private:
  void add_term(const std::vector<int>& exps, double c);

  int variables_;
  std::map<std::vector<int>, double> terms_;
};

/// Parses an expression over `names`, substituting name_k = measure_k(xi_k)
/// via each family's affine germ map. Throws ConfigError on syntax errors.
Polynomial parse_polynomial(const std::string& expr, const std::vector<std::string>& names,
                            const std::vector<MeasureDescriptor>& measures);

/// Exact basis coefficients. Throws ExactnessError when degree > basis degree.
Eigen::VectorXd to_basis(const Polynomial& poly, const TotalDegreeBasis& basis);

}  // namespace polychaos
