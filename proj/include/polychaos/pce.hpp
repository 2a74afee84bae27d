#pragma once

#include <functional>
#include <memory>

#include <Eigen/Dense>

#include "polychaos/multibasis.hpp"

namespace polychaos {

using BasisPtr = std::shared_ptr<const TotalDegreeBasis>;

/// Coefficient matrix over a shared basis: row r holds the expansion of
/// output r, column l multiplies phi_l.
class PceVector {
 public:
  PceVector(BasisPtr basis, Eigen::MatrixXd coeffs);
  /// Zero expansion with n_out rows.
  static PceVector zero(BasisPtr basis, Eigen::Index n_out);
  /// Deterministic expansion: column 0 = value, others zero.
  static PceVector constant(BasisPtr basis, const Eigen::Ref<const Eigen::VectorXd>& value);

  const BasisPtr& basis() const noexcept { return basis_; }
  const Eigen::MatrixXd& coeffs() const noexcept { return coeffs_; }
  Eigen::MatrixXd& coeffs() noexcept { return coeffs_; }
  Eigen::Index rows() const noexcept { return coeffs_.rows(); }
  Eigen::Index terms() const noexcept { return coeffs_.cols(); }

 private:
  BasisPtr basis_;
  Eigen::MatrixXd coeffs_;
};

Eigen::VectorXd mean(const PceVector& p);
/// Per-row sum of squared coefficients l >= 1.
Eigen::VectorXd variance(const PceVector& p);
/// E[y^m] per row by quadrature; the rule must be exact to degree m * d.
Eigen::VectorXd raw_moment(const PceVector& p, int m, const TensorRule& rule);

/// Degree-d projection of the pointwise product. Row counts must match, or
/// one operand may have a single row (broadcast).
PceVector galerkin_product(const PceVector& p, const PceVector& q, const TripleProductTensor& t);

using GermFunction = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// v_l = E[g(xi) phi_l(xi)] by quadrature; the rule should be exact to 2d.
PceVector project_function(const GermFunction& g, BasisPtr basis, const TensorRule& rule);

/// Least-squares fit. xi is n_xi x K, y is n_out x K.
PceVector regress(const Eigen::Ref<const Eigen::MatrixXd>& xi,
                  const Eigen::Ref<const Eigen::MatrixXd>& y, BasisPtr basis);

Eigen::VectorXd sample_eval(const PceVector& p, const Eigen::Ref<const Eigen::VectorXd>& xi);

}  // namespace polychaos
