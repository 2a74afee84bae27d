#include "polychaos/pce.hpp"

#include <cmath>

#include "polychaos/error.hpp"

namespace polychaos {

PceVector::PceVector(BasisPtr basis, Eigen::MatrixXd coeffs)
    : basis_(std::move(basis)), coeffs_(std::move(coeffs)) {
  if (!basis_) throw InvalidArgument("PceVector requires a basis");
  if (coeffs_.cols() != static_cast<Eigen::Index>(basis_->size()))
    throw DimensionMismatch("PceVector has " + std::to_string(coeffs_.cols()) +
                            " columns, basis has " + std::to_string(basis_->size()) + " terms");
  if (!coeffs_.allFinite()) throw NumericalError("PceVector coefficients must be finite");
}

PceVector PceVector::zero(BasisPtr basis, Eigen::Index n_out) {
  const auto cols = static_cast<Eigen::Index>(basis->size());
  return PceVector(std::move(basis), Eigen::MatrixXd::Zero(n_out, cols));
}

PceVector PceVector::constant(BasisPtr basis, const Eigen::Ref<const Eigen::VectorXd>& value) {
  auto p = zero(std::move(basis), value.size());
  p.coeffs().col(0) = value;
  return p;
}

Eigen::VectorXd mean(const PceVector& p) { return p.coeffs().col(0); }

Eigen::VectorXd variance(const PceVector& p) {
  if (p.terms() == 1) return Eigen::VectorXd::Zero(p.rows());
  return p.coeffs().rightCols(p.terms() - 1).rowwise().squaredNorm();
}

Eigen::VectorXd raw_moment(const PceVector& p, int m, const TensorRule& rule) {
  if (m < 1) throw InvalidArgument("moment order must be >= 1");
  const int needed = m * p.basis()->degree();
  if (rule.exact_degree < needed)
    throw ExactnessError("quadrature exact to degree " + std::to_string(rule.exact_degree) +
                         " cannot resolve moment " + std::to_string(m) + " (needs " +
                         std::to_string(needed) + ")");
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(p.rows());
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd y = p.coeffs() * p.basis()->eval(rule.points.col(idx));
    acc += rule.weights[idx] * y.array().pow(m).matrix();
  }
  return acc;
}

PceVector galerkin_product(const PceVector& p, const PceVector& q, const TripleProductTensor& t) {
  if (p.basis() != q.basis() && p.basis()->id() != q.basis()->id())
    throw InvalidArgument("galerkin_product operands use different bases");
  if (t.basis_size() != p.basis()->size() || t.basis_id() != p.basis()->id())
    throw InvalidArgument("triple-product tensor does not belong to the operands' basis");
  if (p.rows() != q.rows() && p.rows() != 1 && q.rows() != 1)
    throw DimensionMismatch("galerkin_product operands have incompatible row counts");
  const Eigen::Index rows = std::max(p.rows(), q.rows());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows, p.terms());
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto pr = p.coeffs().row(p.rows() == 1 ? 0 : r);
    const auto qr = q.coeffs().row(q.rows() == 1 ? 0 : r);
    for (const auto& e : t.entries()) out(r, e.l) += pr[e.i] * qr[e.j] * e.value;
  }
  return PceVector(p.basis(), std::move(out));
}

PceVector project_function(const GermFunction& g, BasisPtr basis, const TensorRule& rule) {
  Eigen::MatrixXd acc;
  for (std::size_t k = 0; k < rule.size(); ++k) {
    const auto idx = static_cast<Eigen::Index>(k);
    const Eigen::VectorXd xi = rule.points.col(idx);
    const Eigen::VectorXd y = g(xi);
    const Eigen::VectorXd phi = basis->eval(xi);
    if (k == 0) acc = Eigen::MatrixXd::Zero(y.size(), phi.size());
    if (y.size() != acc.rows()) throw DimensionMismatch("projected function changed output size");
    acc.noalias() += rule.weights[idx] * y * phi.transpose();
  }
  return PceVector(std::move(basis), std::move(acc));
}

PceVector regress(const Eigen::Ref<const Eigen::MatrixXd>& xi,
                  const Eigen::Ref<const Eigen::MatrixXd>& y, BasisPtr basis) {
  const auto terms = static_cast<Eigen::Index>(basis->size());
  if (xi.cols() != y.cols()) throw DimensionMismatch("regress: sample counts differ");
  if (xi.rows() != basis->dimension()) throw DimensionMismatch("regress: germ dimension mismatch");
  if (xi.cols() < terms)
    throw RankDeficient("regress needs at least " + std::to_string(terms) + " samples, got " +
                            std::to_string(xi.cols()),
                        0, terms);
  Eigen::MatrixXd design(xi.cols(), terms);
  for (Eigen::Index k = 0; k < xi.cols(); ++k) design.row(k) = basis->eval(xi.col(k)).transpose();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < terms)
    throw RankDeficient("regress design matrix has rank " + std::to_string(qr.rank()) +
                            " < " + std::to_string(terms) + " basis terms",
                        qr.rank(), terms);
  Eigen::MatrixXd coeffs = qr.solve(y.transpose()).transpose();
  return PceVector(std::move(basis), std::move(coeffs));
}

Eigen::VectorXd sample_eval(const PceVector& p, const Eigen::Ref<const Eigen::VectorXd>& xi) {
  return p.coeffs() * p.basis()->eval(xi);
}

}  // namespace polychaos
