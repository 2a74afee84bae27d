#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace polychaos {

/// s = f x + g must lie in the second-order cone s_0 >= ||s_{1:}||.
/// A block with a single row is a plain linear inequality f x + g >= 0.
struct SocBlock {
  Eigen::MatrixXd f;
  Eigen::VectorXd g;
};

/// minimize 0.5 x'Px + q'x + constant
/// subject to a_eq x = b_eq, lower <= x <= upper, every SocBlock.
struct ConeProgram {
  Eigen::MatrixXd p;
  Eigen::VectorXd q;
  double constant = 0.0;
  Eigen::MatrixXd a_eq;
  Eigen::VectorXd b_eq;
  Eigen::VectorXd lower;  // empty, or one entry per variable (+-inf allowed)
  Eigen::VectorXd upper;
  std::vector<SocBlock> cones;

  Eigen::Index variables() const noexcept { return q.size(); }
  double objective(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  /// Largest violation of any constraint at x (0 when feasible).
  double max_violation(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  void validate() const;
};

enum class SolveStatus { optimal, max_iter, infeasible };

std::string to_string(SolveStatus s);

struct Solution {
  Eigen::VectorXd x;
  Eigen::VectorXd y;  // stacked duals: equality, box, cone rows
  double objective = 0.0;
  SolveStatus status = SolveStatus::max_iter;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
};

struct SolverSettings {
  double tol = 1e-8;
  int max_iter = 50000;
  double rho = 1.0;
  double sigma = 1e-6;
  double alpha = 1.6;
  int check_every = 10;
  int infeasibility_window = 1000;
};

/// Operator-splitting (ADMM) solver over the product of the equality, box
/// and second-order cone sets. `warm` seeds x and the duals when its shape
/// matches.
Solution solve_cone(const ConeProgram& cp, const SolverSettings& settings = {},
                    const Solution* warm = nullptr);

inline Solution solve_cone(const ConeProgram& cp, double tol, int max_iter) {
  SolverSettings s;
  s.tol = tol;
  s.max_iter = max_iter;
  return solve_cone(cp, s);
}

}  // namespace polychaos
