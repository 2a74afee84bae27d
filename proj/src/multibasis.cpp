#include "polychaos/multibasis.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "polychaos/error.hpp"

namespace polychaos {

namespace {

constexpr double kSparsityThreshold = 1e-12;
constexpr std::size_t kMaxBasisSize = std::size_t{1} << 24;

// Compositions of `total` into `parts` nonnegative parts, leading part largest first.
void compositions(int total, int parts, std::vector<int>& prefix, std::vector<MultiIndex>& out) {
  if (parts == 1) {
    prefix.push_back(total);
    out.push_back(MultiIndex{prefix});
    prefix.pop_back();
    return;
  }
  for (int first = total; first >= 0; --first) {
    prefix.push_back(first);
    compositions(total - first, parts - 1, prefix, out);
    prefix.pop_back();
  }
}

std::uint64_t triple_key(std::size_t n, std::size_t l, std::size_t i, std::size_t j) {
  return (static_cast<std::uint64_t>(l) * n + i) * n + j;
}

}  // namespace

std::size_t total_degree_count(int dimension, int degree) {
  if (dimension < 1) throw InvalidArgument("basis needs at least one germ dimension");
  if (degree < 0) throw InvalidArgument("degree cap must be nonnegative");
  // C(n + d, d) computed incrementally; each partial product is itself a binomial.
  unsigned __int128 count = 1;
  for (int k = 1; k <= degree; ++k) {
    count = count * static_cast<unsigned>(dimension + k) / static_cast<unsigned>(k);
    if (count > std::numeric_limits<std::uint64_t>::max())
      throw BasisSizeError("total-degree basis size overflows");
  }
  return static_cast<std::size_t>(count);
}

TotalDegreeBasis::TotalDegreeBasis(std::vector<PolynomialFamily> families, int degree)
    : degree_(degree) {
  if (families.empty()) throw InvalidArgument("basis needs at least one family");
  const std::size_t count = total_degree_count(static_cast<int>(families.size()), degree);
  if (count > kMaxBasisSize)
    throw BasisSizeError("total-degree basis with " + std::to_string(count) +
                         " terms exceeds the supported size");
  families_.reserve(families.size());
  for (auto& f : families) families_.push_back(extend_family(f, degree));
  indices_.reserve(count);
  std::vector<int> prefix;
  for (int t = 0; t <= degree; ++t) compositions(t, dimension(), prefix, indices_);
}

std::optional<std::size_t> TotalDegreeBasis::position(const MultiIndex& alpha) const {
  const auto it = std::find(indices_.begin(), indices_.end(), alpha);
  if (it == indices_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - indices_.begin());
}

std::string TotalDegreeBasis::id() const {
  std::ostringstream os;
  os << "total_degree(d=" << degree_ << ";";
  for (std::size_t k = 0; k < families_.size(); ++k) {
    if (k) os << "x";
    os << families_[k].measure().describe();
  }
  os << ")";
  return os.str();
}

Eigen::VectorXd TotalDegreeBasis::eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  if (xi.size() != dimension())
    throw DimensionMismatch("germ point has dimension " + std::to_string(xi.size()) +
                            ", basis expects " + std::to_string(dimension()));
  std::vector<Eigen::VectorXd> univariate;
  univariate.reserve(families_.size());
  for (int k = 0; k < dimension(); ++k) univariate.push_back(families_[k].eval_all(xi[k]));
  Eigen::VectorXd out(size());
  for (std::size_t l = 0; l < size(); ++l) {
    double v = 1.0;
    const auto& e = indices_[l].exponents;
    for (int k = 0; k < dimension(); ++k) v *= univariate[k][e[k]];
    out[static_cast<Eigen::Index>(l)] = v;
  }
  return out;
}

TotalDegreeBasis total_degree_basis(std::vector<PolynomialFamily> families, int degree) {
  return TotalDegreeBasis(std::move(families), degree);
}

Eigen::VectorXd eval_basis(const TotalDegreeBasis& basis,
                           const Eigen::Ref<const Eigen::VectorXd>& xi) {
  return basis.eval(xi);
}

TensorRule tensor_rule(const TotalDegreeBasis& basis, int nodes_per_dim) {
  if (nodes_per_dim < 1) throw InvalidArgument("tensor rule needs at least one node");
  const int n = basis.dimension();
  std::vector<QuadratureRule> rules;
  rules.reserve(n);
  for (const auto& f : basis.families())
    rules.push_back(gauss_rule(extend_family(f, nodes_per_dim - 1), nodes_per_dim));

  std::size_t total = 1;
  for (int k = 0; k < n; ++k) total *= static_cast<std::size_t>(nodes_per_dim);
  TensorRule out;
  out.points.resize(n, static_cast<Eigen::Index>(total));
  out.weights.resize(static_cast<Eigen::Index>(total));
  out.exact_degree = 2 * nodes_per_dim - 1;
  std::vector<int> counter(n, 0);
  for (std::size_t p = 0; p < total; ++p) {
    double w = 1.0;
    for (int k = 0; k < n; ++k) {
      out.points(k, static_cast<Eigen::Index>(p)) = rules[k].nodes[counter[k]];
      w *= rules[k].weights[counter[k]];
    }
    out.weights[static_cast<Eigen::Index>(p)] = w;
    for (int k = n - 1; k >= 0; --k) {
      if (++counter[k] < nodes_per_dim) break;
      counter[k] = 0;
    }
  }
  return out;
}

TensorRule tensor_rule_for_degree(const TotalDegreeBasis& basis, int poly_degree) {
  return tensor_rule(basis, std::max(1, (poly_degree + 2) / 2));
}

TripleProductTensor::TripleProductTensor(std::size_t basis_size, std::string basis_id,
                                         std::vector<Entry> entries)
    : basis_size_(basis_size), basis_id_(std::move(basis_id)), entries_(std::move(entries)) {
  const auto n = basis_size_;
  for (const auto& e : entries_) {
    if (e.i >= n || e.j >= n || e.l >= n)
      throw InvalidArgument("triple-product entry index outside the basis");
  }
  std::sort(entries_.begin(), entries_.end(), [n](const Entry& a, const Entry& b) {
    return triple_key(n, a.l, a.i, a.j) < triple_key(n, b.l, b.i, b.j);
  });
  slice_start_.assign(n + 1, 0);
  for (const auto& e : entries_) ++slice_start_[e.l + 1];
  for (std::size_t l = 0; l < n; ++l) slice_start_[l + 1] += slice_start_[l];
}

double TripleProductTensor::operator()(std::size_t i, std::size_t j, std::size_t l) const {
  if (i >= basis_size_ || j >= basis_size_ || l >= basis_size_)
    throw InvalidArgument("triple-product index out of range");
  const auto key = triple_key(basis_size_, l, i, j);
  const auto n = basis_size_;
  const auto s = slice(l);
  const auto it = std::lower_bound(s.begin(), s.end(), key, [n](const Entry& e, std::uint64_t k) {
    return triple_key(n, e.l, e.i, e.j) < k;
  });
  if (it != s.end() && it->i == i && it->j == j) return it->value;
  return 0.0;
}

std::span<const TripleProductTensor::Entry> TripleProductTensor::slice(std::size_t l) const {
  if (l >= basis_size_) throw InvalidArgument("triple-product slice out of range");
  return std::span<const Entry>(entries_).subspan(slice_start_[l],
                                                  slice_start_[l + 1] - slice_start_[l]);
}

TripleProductTensor triple_products(const TotalDegreeBasis& basis) {
  const int d = basis.degree();
  const int n_dim = basis.dimension();
  const int nodes = (3 * d + 2) / 2;  // ceil((3d + 1) / 2)

  // Univariate tables t_k(a, b, c), computed once per sorted triple.
  const std::size_t w = static_cast<std::size_t>(d) + 1;
  std::vector<std::vector<double>> tables(n_dim, std::vector<double>(w * w * w, 0.0));
  for (int k = 0; k < n_dim; ++k) {
    const auto& fam = basis.families()[k];
    const auto rule = gauss_rule(extend_family(fam, nodes - 1), std::max(nodes, 1));
    std::vector<Eigen::VectorXd> vals;
    vals.reserve(rule.nodes.size());
    for (double x : rule.nodes) vals.push_back(fam.eval_all(x).head(d + 1));
    for (int a = 0; a <= d; ++a)
      for (int b = a; b <= d; ++b)
        for (int c = b; c <= d; ++c) {
          double acc = 0.0;
          for (std::size_t q = 0; q < rule.nodes.size(); ++q)
            acc += rule.weights[q] * vals[q][a] * vals[q][b] * vals[q][c];
          const std::array<int, 3> p{a, b, c};
          // store all permutations with the same value
          for (int x = 0; x < 3; ++x)
            for (int y = 0; y < 3; ++y)
              for (int z = 0; z < 3; ++z)
                if (x != y && y != z && x != z)
                  tables[k][(p[x] * w + p[y]) * w + p[z]] = acc;
        }
  }

  const std::size_t size = basis.size();
  const auto& idx = basis.indices();
  std::vector<TripleProductTensor::Entry> entries;
  for (std::size_t i = 0; i < size; ++i)
    for (std::size_t j = i; j < size; ++j)
      for (std::size_t l = j; l < size; ++l) {
        double v = 1.0;
        for (int k = 0; k < n_dim && v != 0.0; ++k) {
          const int a = idx[i].exponents[k];
          const int b = idx[j].exponents[k];
          const int c = idx[l].exponents[k];
          v *= tables[k][(a * w + b) * w + c];
        }
        if (std::abs(v) <= kSparsityThreshold) continue;
        const std::array<std::uint32_t, 3> t{static_cast<std::uint32_t>(i),
                                             static_cast<std::uint32_t>(j),
                                             static_cast<std::uint32_t>(l)};
        std::array<std::uint32_t, 3> perm = t;
        std::sort(perm.begin(), perm.end());
        do {
          entries.push_back({perm[0], perm[1], perm[2], v});
        } while (std::next_permutation(perm.begin(), perm.end()));
      }
  return TripleProductTensor(size, basis.id(), std::move(entries));
}

Eigen::VectorXd monomial_to_basis(const TotalDegreeBasis& basis, const MultiIndex& monomial) {
  if (static_cast<int>(monomial.dimension()) != basis.dimension())
    throw DimensionMismatch("monomial dimension does not match the basis");
  if (monomial.order() > basis.degree())
    throw ExactnessError("monomial of degree " + std::to_string(monomial.order()) +
                         " cannot be represented exactly in a degree-" +
                         std::to_string(basis.degree()) + " basis");
  const auto rule = tensor_rule(basis, basis.degree() + 1);
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t p = 0; p < rule.size(); ++p) {
    const auto xi = rule.points.col(static_cast<Eigen::Index>(p));
    double mono = 1.0;
    for (int k = 0; k < basis.dimension(); ++k) mono *= std::pow(xi[k], monomial.exponents[k]);
    coeffs += rule.weights[static_cast<Eigen::Index>(p)] * mono * basis.eval(xi);
  }
  return coeffs;
}

}  // namespace polychaos
