#include "polychaos/smpc.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "polychaos/error.hpp"
#include "polychaos/io.hpp"

namespace polychaos {

namespace {
constexpr double kRiccatiTolerance = 1e-12;
constexpr int kRiccatiCap = 10000;

bool is_psd(const Eigen::MatrixXd& m, bool strict) {
  if (m.rows() != m.cols()) return false;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  return strict ? lo > 0.0 : lo >= -1e-12 * scale;
}

Eigen::MatrixXd block_diag(const Eigen::MatrixXd& m, Eigen::Index copies) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m.rows() * copies, m.cols() * copies);
  for (Eigen::Index i = 0; i < copies; ++i) out.block(i * m.rows(), i * m.cols(), m.rows(), m.cols()) = m;
  return out;
}
}  // namespace

void SmpcProblem::validate(int n_x, int n_u) const {
  if (horizon < 1) throw InvalidArgument("horizon must be >= 1");
  if (q.rows() != n_x || !is_psd(q, false)) throw InvalidArgument("Q must be n_x x n_x and PSD");
  if (p_f.rows() != n_x || !is_psd(p_f, false))
    throw InvalidArgument("terminal weight must be n_x x n_x and PSD");
  if (r.rows() != n_u || !is_psd(r, true)) throw InvalidArgument("R must be n_u x n_u and PD");
  if (u_lower.size() != u_upper.size() || (u_lower.size() != 0 && u_lower.size() != n_u))
    throw DimensionMismatch("input box must have n_u entries");
  if (u_lower.size() && (u_lower.array() > u_upper.array()).any())
    throw InvalidArgument("input box lower bound exceeds upper bound");
  if (state_polytope.rows() > 0) {
    if (state_polytope.dimension() != n_x) throw DimensionMismatch("polytope dimension != n_x");
    if (static_cast<Eigen::Index>(chance.eps.size()) != state_polytope.rows())
      throw DimensionMismatch("chance allocation must have one budget per polytope row");
  }
  if (policy == PolicyKind::prestabilized && (k.rows() != n_u || k.cols() != n_x))
    throw DimensionMismatch("prestabilizing gain must be n_u x n_x");
}

LqrResult lqr_gain(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const Eigen::MatrixXd& q,
                   const Eigen::MatrixXd& r) {
  const auto n = a.rows();
  if (a.cols() != n || b.rows() != n || q.rows() != n || q.cols() != n || r.rows() != b.cols() ||
      r.cols() != b.cols())
    throw DimensionMismatch("lqr_gain: inconsistent matrix shapes");
  Eigen::MatrixXd p = q;
  for (int it = 1; it <= kRiccatiCap; ++it) {
    const Eigen::MatrixXd btp = b.transpose() * p;
    const Eigen::MatrixXd gain = (r + btp * b).ldlt().solve(btp * a);
    Eigen::MatrixXd next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double diff = (next - p).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, p.cwiseAbs().maxCoeff());
    p = std::move(next);
    if (diff <= kRiccatiTolerance * scale) {
      const Eigen::MatrixXd btp2 = b.transpose() * p;
      return {(r + btp2 * b).ldlt().solve(btp2 * a), p, it};
    }
  }
  throw StabilizabilityError("Riccati iteration did not converge; (A, B) may not be stabilizable");
}

Surrogate build_surrogate(const SmpcProblem& prob, const ExpandedLinearSystem& exp,
                          const Eigen::Ref<const Eigen::VectorXd>& x0_stacked) {
  const int nx = exp.n_x;
  const int nu = exp.n_u;
  prob.validate(nx, nu);
  const Eigen::Index terms = exp.terms();
  const Eigen::Index nX = nx * terms;
  const int horizon = prob.horizon;
  const Eigen::Index nv = static_cast<Eigen::Index>(horizon) * nu;
  if (x0_stacked.size() != nX) throw DimensionMismatch("initial coefficient state has the wrong size");

  Eigen::MatrixXd a_cl = exp.a_hat;
  Eigen::MatrixXd kx = Eigen::MatrixXd::Zero(nu * terms, nX);  // maps X to the input's spread
  if (prob.policy == PolicyKind::prestabilized) {
    for (Eigen::Index l = 1; l < terms; ++l) kx.block(l * nu, l * nx, nu, nx) = prob.k;
    a_cl -= exp.b_full * kx;
  }

  Surrogate s;
  s.free.resize(horizon + 1);
  s.forced.resize(horizon + 1);
  s.free[0] = x0_stacked;
  s.forced[0] = Eigen::MatrixXd::Zero(nX, nv);
  for (int k = 0; k < horizon; ++k) {
    s.free[k + 1] = a_cl * s.free[k];
    s.forced[k + 1] = a_cl * s.forced[k];
    s.forced[k + 1].middleCols(static_cast<Eigen::Index>(k) * nu, nu) += exp.b_hat;
  }

  // E[x'Qx] = sum_l x_l' Q x_l; E[u'Ru] = eta'R eta + sum_{l>=1} (K x_l)' R (K x_l).
  Eigen::MatrixXd q_stage = block_diag(prob.q, terms);
  if (prob.policy == PolicyKind::prestabilized)
    q_stage += kx.transpose() * block_diag(prob.r, terms) * kx;
  const Eigen::MatrixXd q_term = block_diag(prob.p_f, terms);

  auto& cp = s.program;
  cp.p = Eigen::MatrixXd::Zero(nv, nv);
  cp.q = Eigen::VectorXd::Zero(nv);
  cp.constant = 0.0;
  for (int k = 0; k <= horizon; ++k) {
    const Eigen::MatrixXd& w = k < horizon ? q_stage : q_term;
    const Eigen::MatrixXd wg = w * s.forced[k];
    cp.p.noalias() += 2.0 * s.forced[k].transpose() * wg;
    cp.q.noalias() += 2.0 * wg.transpose() * s.free[k];
    cp.constant += s.free[k].dot(w * s.free[k]);
  }
  for (int k = 0; k < horizon; ++k)
    cp.p.block(static_cast<Eigen::Index>(k) * nu, static_cast<Eigen::Index>(k) * nu, nu, nu) +=
        2.0 * prob.r;
  cp.p = 0.5 * (cp.p + cp.p.transpose());

  if (prob.u_lower.size() == nu && nu > 0) {
    cp.lower = prob.u_lower.replicate(horizon, 1);
    cp.upper = prob.u_upper.replicate(horizon, 1);
  }

  const auto& poly = prob.state_polytope;
  s.factors.resize(poly.rows());
  for (Eigen::Index i = 0; i < poly.rows(); ++i) s.factors[i] = cantelli_factor(prob.chance.eps[i]);
  for (int k = 1; k <= horizon; ++k) {
    for (Eigen::Index i = 0; i < poly.rows(); ++i) {
      const Eigen::RowVectorXd gi = poly.g.row(i);
      SocBlock blk;
      blk.f.resize(terms, nv);
      blk.g.resize(terms);
      // t = d_i - g_i' v_0
      blk.f.row(0) = -gi * s.forced[k].middleRows(0, nx);
      blk.g[0] = poly.bounds[i] - gi.dot(s.free[k].segment(0, nx));
      for (Eigen::Index l = 1; l < terms; ++l) {
        blk.f.row(l) = s.factors[i] * gi * s.forced[k].middleRows(l * nx, nx);
        blk.g[l] = s.factors[i] * gi.dot(s.free[k].segment(l * nx, nx));
      }
      cp.cones.push_back(std::move(blk));
    }
  }
  return s;
}

bool ClosedLoopTrace::any_fallback() const {
  return std::any_of(fallback.begin(), fallback.end(), [](bool b) { return b; });
}

ClosedLoopTrace receding_horizon(const SmpcProblem& prob, const ParametricLinearSystem& sys,
                                 const TripleProductTensor& t, const Eigen::VectorXd& x0, int steps,
                                 std::uint64_t seed, const SolverSettings& settings) {
  if (steps < 0) throw InvalidArgument("steps must be nonnegative");
  if (x0.size() != sys.n_x()) throw DimensionMismatch("initial state has the wrong size");
  const auto exp = expand_linear(sys, t);
  const int nu = sys.n_u();
  const int nx = sys.n_x();
  const Eigen::Index terms = exp.terms();

  ClosedLoopTrace trace;
  trace.seed = seed;
  auto rng = substream(seed, 0);
  trace.germ = sys.sampler()(rng);
  const Eigen::MatrixXd a_true = sys.a_at(trace.germ);
  const Eigen::MatrixXd b_true = sys.b_at(trace.germ);

  Eigen::VectorXd x = x0;
  trace.states.push_back(x);
  Solution previous;
  bool have_previous = false;
  int plan_offset = 0;  // steps since `previous` was computed

  for (int step = 0; step < steps; ++step) {
    Eigen::VectorXd stacked = Eigen::VectorXd::Zero(nx * terms);
    stacked.head(nx) = x;
    const auto sur = build_surrogate(prob, exp, stacked);

    Solution warm;
    const Solution* warm_ptr = nullptr;
    if (have_previous) {
      // shift the previous plan by one step
      warm.x = previous.x;
      const Eigen::Index nv = warm.x.size();
      if (nv > nu) {
        warm.x.head(nv - nu) = previous.x.tail(nv - nu).eval();
      }
      warm_ptr = &warm;
    }
    const auto sol = solve_cone(sur.program, settings, warm_ptr);

    Eigen::VectorXd eta(nu);
    bool fallback = false;
    if (sol.status == SolveStatus::optimal) {
      eta = sol.x.head(nu);
      previous = sol;
      have_previous = true;
      plan_offset = 0;
    } else {
      if (!have_previous) {
        // nothing to fall back on: report and stop
        trace.infeasible_start = true;
        break;
      }
      fallback = true;
      ++plan_offset;
      const int idx = std::min(plan_offset, prob.horizon - 1);
      eta = previous.x.segment(static_cast<Eigen::Index>(idx) * nu, nu);
    }

    // E[x] equals the measured state, so the feedback term vanishes.
    const Eigen::VectorXd u = eta;
    const Eigen::VectorXd x_next = a_true * x + b_true * u;
    trace.inputs.push_back(u);
    trace.predicted.push_back(sur.predicted(1, fallback ? previous.x : sol.x));
    trace.stage_cost.push_back(x.dot(prob.q * x) + u.dot(prob.r * u));
    trace.violated.push_back(prob.state_polytope.rows() > 0 &&
                             !prob.state_polytope.contains(x_next));
    trace.status.push_back(sol.status);
    trace.fallback.push_back(fallback);
    trace.iterations.push_back(sol.iterations);
    x = x_next;
    trace.states.push_back(x);
  }
  return trace;
}

void write_csv(std::ostream& os, const ClosedLoopTrace& trace, int run, bool header) {
  const Eigen::Index nu = trace.inputs.empty() ? 0 : trace.inputs.front().size();
  const Eigen::Index nx = trace.states.empty() ? 0 : trace.states.front().size();
  if (header) {
    os << "run,step";
    for (Eigen::Index i = 0; i < nu; ++i) os << ",u" << i;
    for (Eigen::Index i = 0; i < nx; ++i) os << ",x" << i;
    os << ",violated,stage_cost,status,fallback\n";
  }
  for (std::size_t k = 0; k < trace.steps(); ++k) {
    os << run << ',' << k;
    for (Eigen::Index i = 0; i < nu; ++i) os << ',' << format_double(trace.inputs[k][i]);
    for (Eigen::Index i = 0; i < nx; ++i) os << ',' << format_double(trace.states[k][i]);
    os << ',' << (trace.violated[k] ? 1 : 0) << ',' << format_double(trace.stage_cost[k]) << ','
       << to_string(trace.status[k]) << ',' << (trace.fallback[k] ? 1 : 0) << '\n';
  }
}

}  // namespace polychaos
