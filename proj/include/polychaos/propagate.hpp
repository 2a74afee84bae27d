#pragma once

// Intrusive Galerkin propagation of linear parametric dynamics
//   x+ = A(theta) x + B(theta) u
// and of the decay-type coefficient ODE, plus the seeded Monte Carlo oracle
// both are checked against.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "polychaos/pce.hpp"
#include "polychaos/sampling.hpp"

namespace polychaos {

/// Linear system whose matrices are PCEs over a shared basis. Entry (r, c) of
/// A is row r * n_x + c of the A expansion (row-major), likewise for B.
class ParametricLinearSystem {
 public:
  using MatrixFunction = std::function<Eigen::MatrixXd(const Eigen::VectorXd& xi)>;

  ParametricLinearSystem(int n_x, int n_u, PceVector a, PceVector b);

  /// Projects germ callbacks onto the basis (quadrature exact to degree 2d).
  static ParametricLinearSystem from_functions(int n_x, int n_u, BasisPtr basis,
                                               const MatrixFunction& a_of_xi,
                                               const MatrixFunction& b_of_xi);
  /// Deterministic matrices on the given basis.
  static ParametricLinearSystem deterministic(BasisPtr basis, const Eigen::MatrixXd& a,
                                              const Eigen::MatrixXd& b);

  int n_x() const noexcept { return n_x_; }
  int n_u() const noexcept { return n_u_; }
  const BasisPtr& basis() const noexcept { return a_.basis(); }
  const PceVector& a_pce() const noexcept { return a_; }
  const PceVector& b_pce() const noexcept { return b_; }

  /// Coefficient matrix j of A(theta) / B(theta).
  Eigen::MatrixXd a_coeff(std::size_t j) const;
  Eigen::MatrixXd b_coeff(std::size_t j) const;
  Eigen::MatrixXd a_mean() const { return a_coeff(0); }
  Eigen::MatrixXd b_mean() const { return b_coeff(0); }

  /// Matrices at a germ realization.
  Eigen::MatrixXd a_at(const Eigen::VectorXd& xi) const;
  Eigen::MatrixXd b_at(const Eigen::VectorXd& xi) const;

  /// Germ sampler consistent with the basis measures.
  BasisSampler sampler() const { return BasisSampler(*basis()); }

 private:
  int n_x_;
  int n_u_;
  PceVector a_;
  PceVector b_;
};

/// Deterministic dynamics of stacked coefficients X = [x_0; x_1; ...; x_L].
struct ExpandedLinearSystem {
  Eigen::MatrixXd a_hat;   // n_x(L+1) x n_x(L+1)
  Eigen::MatrixXd b_hat;   // n_x(L+1) x n_u, deterministic input
  Eigen::MatrixXd b_full;  // n_x(L+1) x n_u(L+1), input with its own expansion
  BasisPtr basis;
  int n_x = 0;
  int n_u = 0;

  Eigen::Index terms() const noexcept { return static_cast<Eigen::Index>(basis->size()); }
};

ExpandedLinearSystem expand_linear(const ParametricLinearSystem& sys, const TripleProductTensor& t);

Eigen::VectorXd step(const ExpandedLinearSystem& exp, const Eigen::Ref<const Eigen::VectorXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& u);

/// Column-major stacking of a PCE state and its inverse.
Eigen::VectorXd stack(const PceVector& x);
PceVector unstack(BasisPtr basis, const Eigen::Ref<const Eigen::VectorXd>& stacked, int n_x);

/// Coefficient ODE da_l/dt = -sum_ij v_j a_i T(i, j, l) for a scalar rate
/// expansion v. The state is n_out x (L+1); every row obeys the same law.
class GalerkinOde {
 public:
  GalerkinOde(PceVector rate, const TripleProductTensor& t);

  const PceVector& rate() const noexcept { return rate_; }
  /// M(l, i) = sum_j v_j T(i, j, l).
  const Eigen::MatrixXd& rhs_matrix() const noexcept { return m_; }
  Eigen::MatrixXd derivative(const Eigen::MatrixXd& a) const;

 private:
  PceVector rate_;
  Eigen::MatrixXd m_;
};

/// One classical RK4 step. Throws NumericalError on a non-finite state.
Eigen::MatrixXd galerkin_ode_step(const GalerkinOde& ode, const Eigen::MatrixXd& a, double dt);

struct OdeTrajectory {
  std::vector<double> times;
  std::vector<PceVector> states;
};

/// Fixed-step integration from t = 0, recording at the requested times
/// (each rounded to the nearest multiple of dt).
OdeTrajectory integrate_ode(const GalerkinOde& ode, const PceVector& initial,
                            const std::vector<double>& times, double dt = 1e-3);

struct McSummary {
  std::vector<double> times;
  Eigen::MatrixXd mean;  // n_out x T
  Eigen::MatrixXd variance;
  Eigen::MatrixXd stderr_mean;
  Eigen::MatrixXd stderr_variance;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

/// Monte Carlo oracle for the linear system. Each sample draws one germ and
/// runs x_{t+1} = A x_t + B u_t for all inputs; times are 0..inputs.size().
McSummary mc_propagate(const ParametricLinearSystem& sys, const Eigen::VectorXd& x0,
                       const std::vector<Eigen::VectorXd>& inputs, std::size_t n_samples,
                       std::uint64_t seed);

/// Monte Carlo oracle for the decay ODE using the exact solution
/// y(t) = y0(xi) exp(-theta(xi) t).
McSummary mc_propagate(const GalerkinOde& ode, const PceVector& initial,
                       const std::vector<double>& times, std::size_t n_samples,
                       std::uint64_t seed);

/// CSV: time,output,mean,variance,stderr
void write_csv(std::ostream& os, const McSummary& summary);

}  // namespace polychaos
