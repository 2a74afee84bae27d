#include "polychaos/orthopoly.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "polychaos/error.hpp"

namespace polychaos {

namespace {

constexpr double kEigenTolerance = 1e-14;
constexpr int kEigenSweepCap = 100;
constexpr double kDegenerateNorm = 1e-12;
constexpr double kNormalizationTolerance = 1e-8;
constexpr int kPanelNodes = 8;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

void validate(const MeasureDescriptor::Variant& v) {
  std::visit(
      Overloaded{
          [](const GaussianMeasure& m) {
            if (!(m.stddev > 0.0) || !std::isfinite(m.mean))
              throw InvalidArgument("gaussian measure requires stddev > 0");
          },
          [](const UniformMeasure& m) {
            if (!(m.lo < m.hi) || !std::isfinite(m.lo) || !std::isfinite(m.hi))
              throw InvalidArgument("uniform measure requires lo < hi");
          },
          [](const GammaMeasure& m) {
            if (!(m.shape > 0.0))
              throw InvalidArgument("gamma measure requires shape > 0");
          },
          [](const BetaMeasure& m) {
            if (!(m.p > 0.0) || !(m.q > 0.0))
              throw InvalidArgument("beta measure requires p, q > 0");
          },
          [](const CustomMeasure& m) {
            if (!m.density)
              throw InvalidArgument("custom measure requires a density");
            if (!(m.lo < m.hi) || !std::isfinite(m.lo) || !std::isfinite(m.hi))
              throw InvalidArgument("custom measure requires a finite support lo < hi");
          },
      },
      v);
}

// Monic Jacobi recurrence for the weight (1-x)^alpha (1+x)^beta on [-1,1].
std::pair<double, double> jacobi_recurrence(int n, double alpha, double beta) {
  const double s = alpha + beta;
  double a;
  if (n == 0) {
    a = (beta - alpha) / (s + 2.0);
  } else {
    a = (beta * beta - alpha * alpha) / ((2.0 * n + s) * (2.0 * n + s + 2.0));
  }
  double b;
  if (n == 0) {
    b = 1.0;
  } else if (n == 1) {
    b = 4.0 * (1.0 + alpha) * (1.0 + beta) / ((2.0 + s) * (2.0 + s) * (3.0 + s));
  } else {
    const double t = 2.0 * n + s;
    b = 4.0 * n * (n + alpha) * (n + beta) * (n + s) / (t * t * (t + 1.0) * (t - 1.0));
  }
  return {a, b};
}

}  // namespace

MeasureDescriptor::MeasureDescriptor(Variant v) : value_(std::move(v)) { validate(value_); }

MeasureDescriptor MeasureDescriptor::gaussian(double mean, double stddev) {
  return MeasureDescriptor(GaussianMeasure{mean, stddev});
}
MeasureDescriptor MeasureDescriptor::uniform(double lo, double hi) {
  return MeasureDescriptor(UniformMeasure{lo, hi});
}
MeasureDescriptor MeasureDescriptor::gamma(double shape) {
  return MeasureDescriptor(GammaMeasure{shape});
}
MeasureDescriptor MeasureDescriptor::beta(double p, double q) {
  return MeasureDescriptor(BetaMeasure{p, q});
}
MeasureDescriptor MeasureDescriptor::custom(std::function<double(double)> density, double lo,
                                            double hi) {
  return MeasureDescriptor(CustomMeasure{std::move(density), lo, hi});
}

std::pair<double, double> MeasureDescriptor::germ_support() const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(Overloaded{
                        [&](const GaussianMeasure&) { return std::pair{-inf, inf}; },
                        [](const UniformMeasure&) { return std::pair{-1.0, 1.0}; },
                        [&](const GammaMeasure&) { return std::pair{0.0, inf}; },
                        [](const BetaMeasure&) { return std::pair{-1.0, 1.0}; },
                        [](const CustomMeasure& m) { return std::pair{m.lo, m.hi}; },
                    },
                    value_);
}

double MeasureDescriptor::germ_density(double xi) const {
  return std::visit(
      Overloaded{
          [&](const GaussianMeasure&) {
            return std::exp(-0.5 * xi * xi) / std::sqrt(2.0 * std::numbers::pi);
          },
          [&](const UniformMeasure&) { return (xi >= -1.0 && xi <= 1.0) ? 0.5 : 0.0; },
          [&](const GammaMeasure& m) {
            if (xi <= 0.0) return 0.0;
            return std::exp((m.shape - 1.0) * std::log(xi) - xi - std::lgamma(m.shape));
          },
          [&](const BetaMeasure& m) {
            if (xi < -1.0 || xi > 1.0) return 0.0;
            const double log_norm = (m.p + m.q - 1.0) * std::log(2.0) + std::lgamma(m.p) +
                                    std::lgamma(m.q) - std::lgamma(m.p + m.q);
            return std::exp((m.p - 1.0) * std::log1p(xi) + (m.q - 1.0) * std::log1p(-xi) -
                            log_norm);
          },
          [&](const CustomMeasure& m) {
            return (xi >= m.lo && xi <= m.hi) ? m.density(xi) : 0.0;
          },
      },
      value_);
}

double MeasureDescriptor::offset() const {
  return std::visit(Overloaded{
                        [](const GaussianMeasure& m) { return m.mean; },
                        [](const UniformMeasure& m) { return 0.5 * (m.lo + m.hi); },
                        [](const GammaMeasure&) { return 0.0; },
                        [](const BetaMeasure&) { return 0.5; },
                        [](const CustomMeasure&) { return 0.0; },
                    },
                    value_);
}

double MeasureDescriptor::scale() const {
  return std::visit(Overloaded{
                        [](const GaussianMeasure& m) { return m.stddev; },
                        [](const UniformMeasure& m) { return 0.5 * (m.hi - m.lo); },
                        [](const GammaMeasure&) { return 1.0; },
                        [](const BetaMeasure&) { return 0.5; },
                        [](const CustomMeasure&) { return 1.0; },
                    },
                    value_);
}

bool MeasureDescriptor::symmetric() const {
  switch (kind()) {
    case MeasureKind::gaussian:
    case MeasureKind::uniform:
      return true;
    case MeasureKind::beta: {
      const auto& m = std::get<BetaMeasure>(value_);
      return m.p == m.q;
    }
    default:
      return false;
  }
}

std::string MeasureDescriptor::describe() const {
  std::ostringstream os;
  os.precision(17);
  std::visit(Overloaded{
                 [&](const GaussianMeasure& m) { os << "gaussian(" << m.mean << "," << m.stddev << ")"; },
                 [&](const UniformMeasure& m) { os << "uniform(" << m.lo << "," << m.hi << ")"; },
                 [&](const GammaMeasure& m) { os << "gamma(" << m.shape << ")"; },
                 [&](const BetaMeasure& m) { os << "beta(" << m.p << "," << m.q << ")"; },
                 [&](const CustomMeasure& m) { os << "custom[" << m.lo << "," << m.hi << "]"; },
             },
             value_);
  return os.str();
}

PolynomialFamily::PolynomialFamily(MeasureDescriptor measure, std::vector<double> recur_a,
                                   std::vector<double> recur_b, int quad_points)
    : measure_(std::move(measure)),
      a_(std::move(recur_a)),
      b_(std::move(recur_b)),
      quad_points_(quad_points) {
  if (a_.empty() || a_.size() != b_.size())
    throw InvalidArgument("recurrence coefficient sequences must be nonempty and equal length");
  h_.resize(b_.size());
  double h2 = 1.0;
  for (std::size_t n = 0; n < b_.size(); ++n) {
    h2 *= b_[n];
    if (!(h2 > 0.0)) throw DegenerateMeasure("nonpositive recurrence norm");
    h_[n] = std::sqrt(h2);
  }
}

double PolynomialFamily::eval(int degree, double x) const {
  if (degree < 0 || degree > max_degree())
    throw InvalidArgument("degree " + std::to_string(degree) + " outside [0, " +
                          std::to_string(max_degree()) + "]");
  double prev = 0.0;
  double cur = 1.0;
  for (int n = 0; n < degree; ++n) {
    const double next = (x - a_[n]) * cur - b_[n] * prev;
    prev = cur;
    cur = next;
  }
  return cur / h_[degree];
}

Eigen::VectorXd PolynomialFamily::eval_all(double x) const {
  Eigen::VectorXd out(max_degree() + 1);
  double prev = 0.0;
  double cur = 1.0;
  out[0] = 1.0;
  for (int n = 0; n < max_degree(); ++n) {
    const double next = (x - a_[n]) * cur - b_[n] * prev;
    prev = cur;
    cur = next;
    out[n + 1] = cur / h_[n + 1];
  }
  return out;
}

std::vector<double> PolynomialFamily::monomial_coefficients(int degree) const {
  if (degree < 0 || degree > max_degree())
    throw InvalidArgument("degree out of range for monomial coefficients");
  std::vector<double> prev(degree + 1, 0.0);
  std::vector<double> cur(degree + 1, 0.0);
  cur[0] = 1.0;
  for (int n = 0; n < degree; ++n) {
    std::vector<double> next(degree + 1, 0.0);
    for (int k = 0; k <= n; ++k) {
      next[k + 1] += cur[k];
      next[k] -= a_[n] * cur[k];
      next[k] -= b_[n] * prev[k];
    }
    prev = std::move(cur);
    cur = std::move(next);
  }
  for (double& c : cur) c /= h_[degree];
  return cur;
}

PolynomialFamily build_family(const MeasureDescriptor& measure, int max_degree) {
  if (max_degree < 0) throw InvalidArgument("max_degree must be nonnegative");
  std::vector<double> a(max_degree + 1);
  std::vector<double> b(max_degree + 1);
  switch (measure.kind()) {
    case MeasureKind::gaussian:
      for (int n = 0; n <= max_degree; ++n) {
        a[n] = 0.0;
        b[n] = n == 0 ? 1.0 : static_cast<double>(n);
      }
      break;
    case MeasureKind::uniform:
      for (int n = 0; n <= max_degree; ++n) {
        a[n] = 0.0;
        b[n] = n == 0 ? 1.0 : static_cast<double>(n) * n / (4.0 * n * n - 1.0);
      }
      break;
    case MeasureKind::gamma: {
      const double alpha = std::get<GammaMeasure>(measure.value()).shape - 1.0;
      for (int n = 0; n <= max_degree; ++n) {
        a[n] = 2.0 * n + alpha + 1.0;
        b[n] = n == 0 ? 1.0 : n * (n + alpha);
      }
      break;
    }
    case MeasureKind::beta: {
      const auto& m = std::get<BetaMeasure>(measure.value());
      for (int n = 0; n <= max_degree; ++n) {
        std::tie(a[n], b[n]) = jacobi_recurrence(n, m.q - 1.0, m.p - 1.0);
      }
      break;
    }
    case MeasureKind::custom:
      throw UnsupportedMeasure(
          "no closed-form recurrence for a custom measure; use stieltjes_family");
  }
  return PolynomialFamily(measure, std::move(a), std::move(b));
}

PolynomialFamily stieltjes_family(const MeasureDescriptor& measure, int max_degree,
                                  int quad_points) {
  if (max_degree < 0) throw InvalidArgument("max_degree must be nonnegative");
  if (measure.kind() != MeasureKind::custom)
    throw UnsupportedMeasure("stieltjes_family expects a custom measure");
  if (quad_points < kPanelNodes)
    throw InvalidArgument("stieltjes_family needs at least 8 quadrature points");
  const auto& custom = std::get<CustomMeasure>(measure.value());

  const auto legendre = build_family(MeasureDescriptor::uniform(-1.0, 1.0), kPanelNodes - 1);
  const auto panel = gauss_rule(legendre, kPanelNodes);
  const int panels = quad_points / kPanelNodes;
  const double width = (custom.hi - custom.lo) / panels;

  std::vector<double> x;
  std::vector<double> w;
  x.reserve(static_cast<std::size_t>(panels) * kPanelNodes);
  w.reserve(x.capacity());
  for (int p = 0; p < panels; ++p) {
    const double left = custom.lo + p * width;
    for (int k = 0; k < kPanelNodes; ++k) {
      const double node = left + 0.5 * width * (panel.nodes[k] + 1.0);
      const double dens = custom.density(node);
      if (!std::isfinite(dens) || dens < 0.0)
        throw InvalidArgument("custom density must be finite and nonnegative on its support");
      x.push_back(node);
      // panel.weights sum to 1 under density 1/2 on [-1,1]
      w.push_back(dens * panel.weights[k] * width);
    }
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (std::abs(total - 1.0) > kNormalizationTolerance)
    throw InvalidArgument("custom density integrates to " + std::to_string(total) +
                          ", expected 1");
  for (double& wk : w) wk /= total;

  std::vector<double> a(max_degree + 1);
  std::vector<double> b(max_degree + 1);
  std::vector<double> p_prev(x.size(), 0.0);
  std::vector<double> p_cur(x.size(), 1.0);
  double norm2_prev = 1.0;
  for (int n = 0; n <= max_degree; ++n) {
    double norm2 = 0.0;
    double first = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double wp2 = w[k] * p_cur[k] * p_cur[k];
      norm2 += wp2;
      first += wp2 * x[k];
    }
    if (std::sqrt(norm2) < kDegenerateNorm)
      throw DegenerateMeasure("Stieltjes norm h_" + std::to_string(n) +
                              " below 1e-12; measure is numerically degenerate");
    a[n] = first / norm2;
    b[n] = n == 0 ? 1.0 : norm2 / norm2_prev;
    for (std::size_t k = 0; k < x.size(); ++k) {
      const double next = (x[k] - a[n]) * p_cur[k] - b[n] * p_prev[k];
      p_prev[k] = p_cur[k];
      p_cur[k] = next;
    }
    norm2_prev = norm2;
  }
  return PolynomialFamily(measure, std::move(a), std::move(b), quad_points);
}

PolynomialFamily extend_family(const PolynomialFamily& family, int max_degree) {
  if (family.max_degree() >= max_degree) return family;
  if (family.measure().kind() == MeasureKind::custom)
    return stieltjes_family(family.measure(), max_degree,
                            family.quad_points() > 0 ? family.quad_points() : 512);
  return build_family(family.measure(), max_degree);
}

double eval_poly(const PolynomialFamily& family, int degree, double x) {
  return family.eval(degree, x);
}

namespace detail {

std::pair<std::vector<double>, std::vector<double>> tridiagonal_eigen(
    std::vector<double> d, std::vector<double> offdiag) {
  const int n = static_cast<int>(d.size());
  std::vector<double> e(n, 0.0);
  for (int i = 0; i + 1 < n; ++i) e[i] = offdiag[i];
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(n, n);

  // Implicit QL with Wilkinson-type shifts.
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= kEigenTolerance * dd || dd + std::abs(e[m]) == dd) break;
      }
      if (m != l) {
        if (iter++ == kEigenSweepCap)
          throw NumericalError("tridiagonal eigen-iteration did not converge in 100 sweeps");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0;
        double c = 1.0;
        double p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          for (int k = 0; k < n; ++k) {
            f = z(k, i + 1);
            z(k, i + 1) = s * z(k, i) + c * f;
            z(k, i) = c * z(k, i) - s * f;
          }
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return d[i] < d[j]; });
  std::vector<double> values(n);
  std::vector<double> first2(n);
  for (int k = 0; k < n; ++k) {
    values[k] = d[order[k]];
    first2[k] = z(0, order[k]) * z(0, order[k]);
  }
  return {values, first2};
}

}  // namespace detail

QuadratureRule gauss_rule(const PolynomialFamily& family, int n_nodes) {
  if (n_nodes < 1 || n_nodes > family.max_degree() + 1)
    throw InvalidArgument("gauss_rule needs 1 <= n_nodes <= max_degree + 1 (got " +
                          std::to_string(n_nodes) + ")");
  const auto a = family.recur_a();
  const auto b = family.recur_b();
  std::vector<double> diag(a.begin(), a.begin() + n_nodes);
  std::vector<double> off(n_nodes > 1 ? n_nodes - 1 : 0);
  for (int i = 1; i < n_nodes; ++i) off[i - 1] = std::sqrt(b[i]);
  auto [nodes, weights] = detail::tridiagonal_eigen(std::move(diag), std::move(off));
  // b_0 = 1: the weights already sum to one; renormalize away rounding.
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  for (double& w : weights) w /= total;
  return QuadratureRule{std::move(nodes), std::move(weights), 2 * n_nodes - 1};
}

double inner_product(const PolynomialFamily&, const std::function<double(double)>& f,
                     const std::function<double(double)>& g, const QuadratureRule& rule) {
  double acc = 0.0;
  for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
    acc += rule.weights[k] * f(rule.nodes[k]) * g(rule.nodes[k]);
  }
  return acc;
}

}  // namespace polychaos
