#include "polychaos/propagate.hpp"

#include <cmath>
#include <ostream>

#include "polychaos/error.hpp"
#include "polychaos/io.hpp"

namespace polychaos {

namespace {

constexpr std::size_t kChunk = 1024;

Eigen::MatrixXd reshape_row_major(const Eigen::VectorXd& v, int rows, int cols) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = v[r * cols + c];
  return m;
}

Eigen::VectorXd flatten_row_major(const Eigen::MatrixXd& m) {
  Eigen::VectorXd v(m.size());
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) v[r * m.cols() + c] = m(r, c);
  return v;
}

// Per-sample outputs (n_out x T) reduced in fixed-size chunks, then merged in
// chunk order, so the result does not depend on the worker count.
template <class SampleFn>
McSummary reduce_samples(std::size_t n_samples, std::uint64_t seed, Eigen::Index n_out,
                         std::vector<double> times, SampleFn&& sample) {
  if (n_samples < 2) throw InvalidArgument("Monte Carlo needs at least two samples");
  const auto n_t = static_cast<Eigen::Index>(times.size());
  const std::size_t chunks = (n_samples + kChunk - 1) / kChunk;
  std::vector<std::vector<MomentAccumulator>> partial(chunks);
  parallel_for(chunks, [&](std::size_t c) {
    auto& acc = partial[c];
    acc.assign(static_cast<std::size_t>(n_out * n_t), MomentAccumulator{});
    const std::size_t end = std::min(n_samples, (c + 1) * kChunk);
    for (std::size_t i = c * kChunk; i < end; ++i) {
      auto rng = substream(seed, i);
      const Eigen::MatrixXd y = sample(rng);
      for (Eigen::Index t = 0; t < n_t; ++t)
        for (Eigen::Index r = 0; r < n_out; ++r)
          acc[static_cast<std::size_t>(t * n_out + r)].add(y(r, t));
    }
  });
  std::vector<MomentAccumulator> total(static_cast<std::size_t>(n_out * n_t));
  for (const auto& part : partial)
    for (std::size_t k = 0; k < total.size(); ++k) total[k].merge(part[k]);

  McSummary out;
  out.times = std::move(times);
  out.mean.resize(n_out, n_t);
  out.variance.resize(n_out, n_t);
  out.stderr_mean.resize(n_out, n_t);
  out.stderr_variance.resize(n_out, n_t);
  for (Eigen::Index t = 0; t < n_t; ++t)
    for (Eigen::Index r = 0; r < n_out; ++r) {
      const auto& a = total[static_cast<std::size_t>(t * n_out + r)];
      out.mean(r, t) = a.mean;
      out.variance(r, t) = a.variance();
      out.stderr_mean(r, t) = a.stderr_mean();
      out.stderr_variance(r, t) = a.stderr_variance();
    }
  out.samples = n_samples;
  out.seed = seed;
  return out;
}

}  // namespace

ParametricLinearSystem::ParametricLinearSystem(int n_x, int n_u, PceVector a, PceVector b)
    : n_x_(n_x), n_u_(n_u), a_(std::move(a)), b_(std::move(b)) {
  if (n_x < 1 || n_u < 0) throw InvalidArgument("system dimensions must be positive");
  if (a_.rows() != static_cast<Eigen::Index>(n_x) * n_x)
    throw DimensionMismatch("A expansion must have n_x * n_x rows");
  if (b_.rows() != static_cast<Eigen::Index>(n_x) * n_u)
    throw DimensionMismatch("B expansion must have n_x * n_u rows");
  if (a_.basis()->id() != b_.basis()->id())
    throw InvalidArgument("A and B expansions must share a basis");
}

ParametricLinearSystem ParametricLinearSystem::from_functions(int n_x, int n_u, BasisPtr basis,
                                                              const MatrixFunction& a_of_xi,
                                                              const MatrixFunction& b_of_xi) {
  const auto rule = tensor_rule_for_degree(*basis, 2 * basis->degree());
  auto a = project_function([&](const Eigen::VectorXd& xi) { return flatten_row_major(a_of_xi(xi)); },
                            basis, rule);
  auto b = project_function([&](const Eigen::VectorXd& xi) { return flatten_row_major(b_of_xi(xi)); },
                            basis, rule);
  return ParametricLinearSystem(n_x, n_u, std::move(a), std::move(b));
}

ParametricLinearSystem ParametricLinearSystem::deterministic(BasisPtr basis,
                                                             const Eigen::MatrixXd& a,
                                                             const Eigen::MatrixXd& b) {
  if (a.rows() != a.cols() || b.rows() != a.rows())
    throw DimensionMismatch("deterministic system matrices have inconsistent shapes");
  auto pa = PceVector::constant(basis, flatten_row_major(a));
  auto pb = PceVector::constant(basis, flatten_row_major(b));
  return ParametricLinearSystem(static_cast<int>(a.rows()), static_cast<int>(b.cols()),
                                std::move(pa), std::move(pb));
}

Eigen::MatrixXd ParametricLinearSystem::a_coeff(std::size_t j) const {
  return reshape_row_major(a_.coeffs().col(static_cast<Eigen::Index>(j)), n_x_, n_x_);
}
Eigen::MatrixXd ParametricLinearSystem::b_coeff(std::size_t j) const {
  return reshape_row_major(b_.coeffs().col(static_cast<Eigen::Index>(j)), n_x_, n_u_);
}
Eigen::MatrixXd ParametricLinearSystem::a_at(const Eigen::VectorXd& xi) const {
  return reshape_row_major(sample_eval(a_, xi), n_x_, n_x_);
}
Eigen::MatrixXd ParametricLinearSystem::b_at(const Eigen::VectorXd& xi) const {
  return reshape_row_major(sample_eval(b_, xi), n_x_, n_u_);
}

ExpandedLinearSystem expand_linear(const ParametricLinearSystem& sys,
                                   const TripleProductTensor& t) {
  const auto& basis = sys.basis();
  if (t.basis_id() != basis->id() || t.basis_size() != basis->size())
    throw InvalidArgument("triple-product tensor belongs to a different basis");
  const int nx = sys.n_x();
  const int nu = sys.n_u();
  const auto terms = static_cast<Eigen::Index>(basis->size());
  std::vector<Eigen::MatrixXd> a_j(terms);
  std::vector<Eigen::MatrixXd> b_j(terms);
  for (Eigen::Index j = 0; j < terms; ++j) {
    a_j[j] = sys.a_coeff(j);
    b_j[j] = sys.b_coeff(j);
  }
  ExpandedLinearSystem out;
  out.basis = basis;
  out.n_x = nx;
  out.n_u = nu;
  out.a_hat = Eigen::MatrixXd::Zero(nx * terms, nx * terms);
  out.b_full = Eigen::MatrixXd::Zero(nx * terms, nu * terms);
  // block (l, i) += T(i, j, l) * A_j
  for (const auto& e : t.entries()) {
    out.a_hat.block(e.l * nx, e.i * nx, nx, nx) += e.value * a_j[e.j];
    if (nu > 0) out.b_full.block(e.l * nx, e.i * nu, nx, nu) += e.value * b_j[e.j];
  }
  out.b_hat = out.b_full.leftCols(nu);
  return out;
}

Eigen::VectorXd step(const ExpandedLinearSystem& exp, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (x.size() != exp.a_hat.cols()) throw DimensionMismatch("stacked state has the wrong size");
  if (u.size() != exp.n_u) throw DimensionMismatch("input has the wrong size");
  return exp.a_hat * x + exp.b_hat * u;
}

Eigen::VectorXd stack(const PceVector& x) {
  return Eigen::Map<const Eigen::VectorXd>(x.coeffs().data(), x.coeffs().size());
}

PceVector unstack(BasisPtr basis, const Eigen::Ref<const Eigen::VectorXd>& stacked, int n_x) {
  const auto terms = static_cast<Eigen::Index>(basis->size());
  if (stacked.size() != n_x * terms) throw DimensionMismatch("stacked state has the wrong size");
  Eigen::MatrixXd c = Eigen::Map<const Eigen::MatrixXd>(stacked.data(), n_x, terms);
  return PceVector(std::move(basis), std::move(c));
}

GalerkinOde::GalerkinOde(PceVector rate, const TripleProductTensor& t) : rate_(std::move(rate)) {
  if (rate_.rows() != 1) throw DimensionMismatch("decay rate expansion must be scalar");
  if (t.basis_id() != rate_.basis()->id())
    throw InvalidArgument("triple-product tensor belongs to a different basis");
  const auto terms = rate_.terms();
  m_ = Eigen::MatrixXd::Zero(terms, terms);
  const auto v = rate_.coeffs().row(0);
  for (const auto& e : t.entries()) m_(e.l, e.i) += v[e.j] * e.value;
}

Eigen::MatrixXd GalerkinOde::derivative(const Eigen::MatrixXd& a) const {
  if (a.cols() != m_.cols()) throw DimensionMismatch("ODE state has the wrong number of terms");
  return -(a * m_.transpose());
}

Eigen::MatrixXd galerkin_ode_step(const GalerkinOde& ode, const Eigen::MatrixXd& a, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("ODE step needs dt > 0");
  const Eigen::MatrixXd k1 = ode.derivative(a);
  const Eigen::MatrixXd k2 = ode.derivative(a + 0.5 * dt * k1);
  const Eigen::MatrixXd k3 = ode.derivative(a + 0.5 * dt * k2);
  const Eigen::MatrixXd k4 = ode.derivative(a + dt * k3);
  Eigen::MatrixXd next = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericalError("Galerkin ODE state diverged");
  return next;
}

OdeTrajectory integrate_ode(const GalerkinOde& ode, const PceVector& initial,
                            const std::vector<double>& times, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("ODE integration needs dt > 0");
  OdeTrajectory out;
  Eigen::MatrixXd a = initial.coeffs();
  long done = 0;
  for (double t : times) {
    if (t < 0.0) throw InvalidArgument("output times must be nonnegative");
    const long target = std::lround(t / dt);
    if (target < done) throw InvalidArgument("output times must be nondecreasing");
    for (; done < target; ++done) a = galerkin_ode_step(ode, a, dt);
    out.times.push_back(static_cast<double>(target) * dt);
    out.states.emplace_back(initial.basis(), a);
  }
  return out;
}

McSummary mc_propagate(const ParametricLinearSystem& sys, const Eigen::VectorXd& x0,
                       const std::vector<Eigen::VectorXd>& inputs, std::size_t n_samples,
                       std::uint64_t seed) {
  if (x0.size() != sys.n_x()) throw DimensionMismatch("initial state has the wrong size");
  for (const auto& u : inputs)
    if (u.size() != sys.n_u()) throw DimensionMismatch("input has the wrong size");
  std::vector<double> times(inputs.size() + 1);
  for (std::size_t t = 0; t < times.size(); ++t) times[t] = static_cast<double>(t);
  const auto sampler = sys.sampler();
  return reduce_samples(n_samples, seed, sys.n_x(), std::move(times), [&](SplitMix64& rng) {
    const Eigen::VectorXd xi = sampler(rng);
    const Eigen::MatrixXd a = sys.a_at(xi);
    const Eigen::MatrixXd b = sys.b_at(xi);
    Eigen::MatrixXd traj(sys.n_x(), static_cast<Eigen::Index>(inputs.size()) + 1);
    traj.col(0) = x0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
      const auto k = static_cast<Eigen::Index>(t);
      traj.col(k + 1) = a * traj.col(k) + b * inputs[t];
    }
    return traj;
  });
}

McSummary mc_propagate(const GalerkinOde& ode, const PceVector& initial,
                       const std::vector<double>& times, std::size_t n_samples,
                       std::uint64_t seed) {
  const BasisSampler sampler(*ode.rate().basis());
  return reduce_samples(n_samples, seed, initial.rows(), times, [&](SplitMix64& rng) {
    const Eigen::VectorXd xi = sampler(rng);
    const double theta = sample_eval(ode.rate(), xi)[0];
    const Eigen::VectorXd y0 = sample_eval(initial, xi);
    Eigen::MatrixXd out(y0.size(), static_cast<Eigen::Index>(times.size()));
    for (std::size_t t = 0; t < times.size(); ++t)
      out.col(static_cast<Eigen::Index>(t)) = y0 * std::exp(-theta * times[t]);
    return out;
  });
}

void write_csv(std::ostream& os, const McSummary& s) {
  os << "time,output,mean,variance,stderr\n";
  for (std::size_t t = 0; t < s.times.size(); ++t) {
    const auto k = static_cast<Eigen::Index>(t);
    for (Eigen::Index r = 0; r < s.mean.rows(); ++r) {
      os << format_double(s.times[t]) << ',' << r << ',' << format_double(s.mean(r, k)) << ','
         << format_double(s.variance(r, k)) << ',' << format_double(s.stderr_mean(r, k)) << '\n';
    }
  }
}

}  // namespace polychaos
