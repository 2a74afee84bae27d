#include "polychaos/polynomial_expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "polychaos/error.hpp"

namespace polychaos {

Polynomial Polynomial::constant(int variables, double c) {
  Polynomial p(variables);
  p.add_term(std::vector<int>(variables, 0), c);
  return p;
}

Polynomial Polynomial::affine(int variables, int k, double offset, double scale) {
  Polynomial p = constant(variables, offset);
  std::vector<int> e(variables, 0);
  e[k] = 1;
  p.add_term(e, scale);
  return p;
}

void Polynomial::add_term(const std::vector<int>& exps, double c) {
  if (c == 0.0) return;
  auto& slot = terms_[exps];
  slot += c;
  if (slot == 0.0) terms_.erase(exps);
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [e, c] : terms_) {
    int s = 0;
    for (int v : e) s += v;
    d = std::max(d, s);
  }
  return d;
}

bool Polynomial::is_constant() const { return degree() == 0; }

double Polynomial::constant_term() const {
  const auto it = terms_.find(std::vector<int>(variables_, 0));
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::eval(const Eigen::Ref<const Eigen::VectorXd>& xi) const {
  double acc = 0.0;
  for (const auto& [e, c] : terms_) {
    double t = c;
    for (int k = 0; k < variables_; ++k) t *= std::pow(xi[k], e[k]);
    acc += t;
  }
  return acc;
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  Polynomial out = *this;
  for (const auto& [e, c] : o.terms_) out.add_term(e, c);
  return out;
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + o.scaled(-1.0); }

Polynomial Polynomial::operator*(const Polynomial& o) const {
  Polynomial out(variables_);
  for (const auto& [ea, ca] : terms_)
    for (const auto& [eb, cb] : o.terms_) {
      std::vector<int> e(variables_);
      for (int k = 0; k < variables_; ++k) e[k] = ea[k] + eb[k];
      out.add_term(e, ca * cb);
    }
  return out;
}

Polynomial Polynomial::scaled(double s) const {
  Polynomial out(variables_);
  for (const auto& [e, c] : terms_) out.add_term(e, s * c);
  return out;
}

Polynomial Polynomial::pow(int e) const {
  if (e < 0) throw ConfigError("negative exponents are not polynomial");
  Polynomial out = constant(variables_, 1.0);
  for (int i = 0; i < e; ++i) out = out * *this;
  return out;
}

namespace {

class Parser {
 public:
  Parser(const std::string& src, const std::vector<std::string>& names,
         const std::vector<MeasureDescriptor>& measures)
      : src_(src), names_(names), measures_(measures), n_(static_cast<int>(names.size())) {}

  Polynomial parse() {
    Polynomial p = expr();
    skip();
    if (pos_ != src_.size()) fail("unexpected '" + std::string(1, src_[pos_]) + "'");
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError("expression \"" + src_ + "\": " + msg + " at offset " + std::to_string(pos_));
  }
  void skip() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool accept(char c) {
    skip();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Polynomial expr() {
    Polynomial p = term();
    for (;;) {
      if (accept('+')) p = p + term();
      else if (accept('-')) p = p - term();
      else return p;
    }
  }

  Polynomial term() {
    Polynomial p = unary();
    for (;;) {
      if (accept('*')) {
        p = p * unary();
      } else if (accept('/')) {
        const Polynomial d = unary();
        if (!d.is_constant() || d.constant_term() == 0.0) fail("division only by nonzero constants");
        p = p.scaled(1.0 / d.constant_term());
      } else {
        return p;
      }
    }
  }

  Polynomial unary() {
    if (accept('-')) return unary().scaled(-1.0);
    if (accept('+')) return unary();
    return power();
  }

  Polynomial power() {
    Polynomial base = primary();
    if (accept('^')) {
      skip();
      const std::size_t start = pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
      if (start == pos_) fail("expected a nonnegative integer exponent");
      return base.pow(std::stoi(src_.substr(start, pos_ - start)));
    }
    return base;
  }

  Polynomial primary() {
    skip();
    if (pos_ >= src_.size()) fail("unexpected end of expression");
    if (accept('(')) {
      Polynomial p = expr();
      if (!accept(')')) fail("expected ')'");
      return p;
    }
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* begin = src_.c_str() + pos_;
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      if (end == begin) fail("malformed number");
      pos_ += static_cast<std::size_t>(end - begin);
      return Polynomial::constant(n_, v);
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
        ++pos_;
      const std::string name = src_.substr(start, pos_ - start);
      for (int k = 0; k < n_; ++k)
        if (names_[k] == name)
          return Polynomial::affine(n_, k, measures_[k].offset(), measures_[k].scale());
      pos_ = start;
      fail("unknown parameter '" + name + "'");
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  const std::string& src_;
  const std::vector<std::string>& names_;
  const std::vector<MeasureDescriptor>& measures_;
  int n_;
  std::size_t pos_ = 0;
};

}  // namespace

Polynomial parse_polynomial(const std::string& expr, const std::vector<std::string>& names,
                            const std::vector<MeasureDescriptor>& measures) {
  if (names.size() != measures.size()) throw InvalidArgument("names and measures differ in length");
  return Parser(expr, names, measures).parse();
}

Eigen::VectorXd to_basis(const Polynomial& poly, const TotalDegreeBasis& basis) {
  if (poly.variables() != basis.dimension())
    throw DimensionMismatch("polynomial and basis dimensions differ");
  if (poly.degree() > basis.degree())
    throw ExactnessError("polynomial of degree " + std::to_string(poly.degree()) +
                         " exceeds the basis degree " + std::to_string(basis.degree()));
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(basis.size()));
  for (const auto& [e, c] : poly.terms()) out += c * monomial_to_basis(basis, MultiIndex{e});
  return out;
}

}  // namespace polychaos
