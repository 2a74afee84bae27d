#pragma once

// Chance-constrained stochastic MPC on the Galerkin-expanded dynamics.
//
// Decision variables are the nominal inputs eta_0..eta_{N-1}. Under the
// prestabilized policy the applied input is u = eta - K (x - E[x]), so the
// input expansion has u_0 = eta and u_l = -K x_l for l >= 1.

#include <cstdint>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "polychaos/chance.hpp"
#include "polychaos/cone_solver.hpp"
#include "polychaos/propagate.hpp"

namespace polychaos {

enum class PolicyKind { open_loop, prestabilized };

struct SmpcProblem {
  int horizon = 1;
  Eigen::MatrixXd q;    // stage state weight
  Eigen::MatrixXd r;    // stage input weight
  Eigen::MatrixXd p_f;  // terminal weight
  Eigen::VectorXd u_lower;  // empty when the input is unbounded
  Eigen::VectorXd u_upper;
  Polytope state_polytope;  // zero rows: no state constraints
  ChanceSpec chance;        // one budget per polytope row
  PolicyKind policy = PolicyKind::open_loop;
  Eigen::MatrixXd k;  // prestabilizing gain, u = eta - K (x - E[x])

  void validate(int n_x, int n_u) const;
};

struct LqrResult {
  Eigen::MatrixXd k;  // u = -K x
  Eigen::MatrixXd p;  // Riccati fixed point
  int iterations = 0;
};

/// Discrete Riccati fixed-point iteration started from P = Q. Converged when
/// ||P_{k+1} - P_k||_max <= 1e-12 max(1, ||P_k||_max); at most 10^4 sweeps.
LqrResult lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                   const Eigen::MatrixXd& r);

/// Condensed surrogate plus the affine prediction maps it was built from:
/// stacked coefficients at step k are free[k] + forced[k] * eta.
struct Surrogate {
  ConeProgram program;
  std::vector<Eigen::VectorXd> free;
  std::vector<Eigen::MatrixXd> forced;
  /// Cantelli factor per polytope row.
  std::vector<double> factors;

  Eigen::VectorXd predicted(int k, const Eigen::Ref<const Eigen::VectorXd>& eta) const {
    return free.at(k) + forced.at(k) * eta;
  }
};

Surrogate build_surrogate(const SmpcProblem& prob, const ExpandedLinearSystem& exp,
                          const Eigen::Ref<const Eigen::VectorXd>& x0_stacked);

struct ClosedLoopTrace {
  std::uint64_t seed = 0;
  Eigen::VectorXd germ;                  // the run's fixed parameter draw
  std::vector<Eigen::VectorXd> inputs;   // applied u_t
  std::vector<Eigen::VectorXd> states;   // true x_0..x_T
  std::vector<Eigen::VectorXd> predicted;  // stacked one-step predicted coefficients
  std::vector<bool> violated;            // x_{t+1} outside the polytope
  std::vector<double> stage_cost;        // x_t'Q x_t + u_t'R u_t
  std::vector<SolveStatus> status;
  std::vector<bool> fallback;            // frozen-input fallback used
  std::vector<int> iterations;
  bool infeasible_start = false;

  std::size_t steps() const noexcept { return inputs.size(); }
  bool any_fallback() const;
};

/// Receding-horizon loop: each step re-initializes a deterministic PCE state
/// at the measured x_t, solves the surrogate and applies eta_0 to the true
/// plant, whose parameters are drawn once per run from `seed`.
ClosedLoopTrace receding_horizon(const SmpcProblem& prob, const ParametricLinearSystem& sys,
                                 const TripleProductTensor& t, const Eigen::VectorXd& x0,
                                 int steps, std::uint64_t seed,
                                 const SolverSettings& settings = {});

/// CSV: step,u0..,x0..,violated,stage_cost,status,fallback
void write_csv(std::ostream& os, const ClosedLoopTrace& trace, int run = 0, bool header = true);

}  // namespace polychaos
