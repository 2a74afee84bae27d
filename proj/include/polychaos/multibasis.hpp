#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "polychaos/orthopoly.hpp"

namespace polychaos {

struct MultiIndex {
  std::vector<int> exponents;

  int order() const noexcept {
    int s = 0;
    for (int e : exponents) s += e;
    return s;
  }
  std::size_t dimension() const noexcept { return exponents.size(); }
  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

/// Number of multi-indices with |alpha|_1 <= degree in `dimension` variables,
/// i.e. (n + d)! / (n! d!). Throws BasisSizeError on overflow.
std::size_t total_degree_count(int dimension, int degree);

/// Tensor-product basis over independent germ components, truncated to total
/// degree d and ordered graded-lexicographically (within a degree, larger
/// leading exponents first).
class TotalDegreeBasis {
 public:
  TotalDegreeBasis(std::vector<PolynomialFamily> families, int degree);

  int dimension() const noexcept { return static_cast<int>(families_.size()); }
  int degree() const noexcept { return degree_; }
  std::size_t size() const noexcept { return indices_.size(); }
  const std::vector<PolynomialFamily>& families() const noexcept { return families_; }
  const std::vector<MultiIndex>& indices() const noexcept { return indices_; }
  std::optional<std::size_t> position(const MultiIndex& alpha) const;

  /// Total polynomial degree of basis function l.
  int order(std::size_t l) const { return indices_.at(l).order(); }

  /// Stable identifier built from the measures and the degree cap.
  std::string id() const;

  Eigen::VectorXd eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const;

 private:
  std::vector<PolynomialFamily> families_;
  int degree_;
  std::vector<MultiIndex> indices_;
};

TotalDegreeBasis total_degree_basis(std::vector<PolynomialFamily> families, int degree);

Eigen::VectorXd eval_basis(const TotalDegreeBasis& basis,
                           const Eigen::Ref<const Eigen::VectorXd>& xi);

/// Tensorized Gauss rule over the germ. points is n_xi x P.
struct TensorRule {
  Eigen::MatrixXd points;
  Eigen::VectorXd weights;
  int exact_degree = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(weights.size()); }
};

TensorRule tensor_rule(const TotalDegreeBasis& basis, int nodes_per_dim);
/// Smallest tensor rule exact for polynomials of the given total degree.
TensorRule tensor_rule_for_degree(const TotalDegreeBasis& basis, int poly_degree);

/// Sparse, fully symmetric table of E[phi_i phi_j phi_l].
class TripleProductTensor {
 public:
  struct Entry {
    std::uint32_t i;
    std::uint32_t j;
    std::uint32_t l;
    double value;
  };

  TripleProductTensor() = default;
  /// `entries` must contain every permutation of each stored triple.
  TripleProductTensor(std::size_t basis_size, std::string basis_id, std::vector<Entry> entries);

  std::size_t basis_size() const noexcept { return basis_size_; }
  const std::string& basis_id() const noexcept { return basis_id_; }
  double operator()(std::size_t i, std::size_t j, std::size_t l) const;
  /// All entries, sorted by (l, i, j).
  std::span<const Entry> entries() const noexcept { return entries_; }
  /// Entries with third index l.
  std::span<const Entry> slice(std::size_t l) const;
  std::size_t nonzeros() const noexcept { return entries_.size(); }

 private:
  std::size_t basis_size_ = 0;
  std::string basis_id_;
  std::vector<Entry> entries_;
  std::vector<std::size_t> slice_start_;
};

TripleProductTensor triple_products(const TotalDegreeBasis& basis);

/// Coefficients c with sum_l c_l phi_l(xi) == prod_i xi_i^{s_i}.
Eigen::VectorXd monomial_to_basis(const TotalDegreeBasis& basis, const MultiIndex& monomial);

}  // namespace polychaos
