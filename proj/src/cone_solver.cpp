#include "polychaos/cone_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "polychaos/error.hpp"

namespace polychaos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

enum class RowSet { equality, box, cone };

struct Segment {
  RowSet set;
  Eigen::Index start;
  Eigen::Index size;
  double scale;  // row-block equilibration factor
};

// Stacked constraint z = C x with z in a product set, after row-block scaling.
struct Layout {
  Eigen::MatrixXd c;
  Eigen::VectorXd lo;  // equality/box rows: bounds; cone rows: -inf
  Eigen::VectorXd hi;
  Eigen::VectorXd shift;  // cone rows: g (z + g in K)
  Eigen::VectorXd row_scale;
  std::vector<Segment> segments;
};

Layout build_layout(const ConeProgram& cp) {
  const Eigen::Index n = cp.variables();
  Eigen::Index m = cp.a_eq.rows();
  const bool has_box = cp.lower.size() == n && n > 0;
  if (has_box) m += n;
  for (const auto& b : cp.cones) m += b.f.rows();

  Layout out;
  out.c = Eigen::MatrixXd::Zero(m, n);
  out.lo = Eigen::VectorXd::Constant(m, -kInf);
  out.hi = Eigen::VectorXd::Constant(m, kInf);
  out.shift = Eigen::VectorXd::Zero(m);
  out.row_scale = Eigen::VectorXd::Ones(m);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < cp.a_eq.rows(); ++i, ++r) {
    const double nrm = cp.a_eq.row(i).lpNorm<Eigen::Infinity>();
    const double s = nrm > 0.0 ? 1.0 / nrm : 1.0;
    out.c.row(r) = s * cp.a_eq.row(i);
    out.lo[r] = out.hi[r] = s * cp.b_eq[i];
    out.row_scale[r] = s;
    out.segments.push_back({RowSet::equality, r, 1, s});
  }
  if (has_box) {
    out.c.block(r, 0, n, n).setIdentity();
    out.lo.segment(r, n) = cp.lower;
    out.hi.segment(r, n) = cp.upper;
    out.segments.push_back({RowSet::box, r, n, 1.0});
    r += n;
  }
  for (const auto& b : cp.cones) {
    const Eigen::Index k = b.f.rows();
    double nrm = 0.0;
    for (Eigen::Index i = 0; i < k; ++i) nrm = std::max(nrm, b.f.row(i).lpNorm<Eigen::Infinity>());
    const double s = nrm > 0.0 ? 1.0 / nrm : 1.0;
    out.c.block(r, 0, k, n) = s * b.f;
    out.shift.segment(r, k) = s * b.g;
    out.row_scale.segment(r, k).setConstant(s);
    out.segments.push_back({RowSet::cone, r, k, s});
    r += k;
  }
  return out;
}

void project_soc(Eigen::Ref<Eigen::VectorXd> v) {
  const double t = v[0];
  if (v.size() == 1) {
    v[0] = std::max(t, 0.0);
    return;
  }
  const double nz = v.tail(v.size() - 1).norm();
  if (nz <= t) return;
  if (nz <= -t) {
    v.setZero();
    return;
  }
  const double a = 0.5 * (nz + t);
  v[0] = a;
  v.tail(v.size() - 1) *= a / nz;
}

void project(const Layout& lay, Eigen::Ref<Eigen::VectorXd> z) {
  for (const auto& seg : lay.segments) {
    auto zs = z.segment(seg.start, seg.size);
    if (seg.set == RowSet::cone) {
      zs += lay.shift.segment(seg.start, seg.size);
      project_soc(zs);
      zs -= lay.shift.segment(seg.start, seg.size);
    } else {
      zs = zs.cwiseMax(lay.lo.segment(seg.start, seg.size))
               .cwiseMin(lay.hi.segment(seg.start, seg.size));
    }
  }
}

// Support function of the (scaled) constraint set at direction dy; +inf when
// unbounded in that direction.
double support(const Layout& lay, const Eigen::VectorXd& dy, double tol) {
  double s = 0.0;
  for (const auto& seg : lay.segments) {
    if (seg.set == RowSet::cone) {
      const auto d = dy.segment(seg.start, seg.size);
      // dy must lie in the polar cone -K
      const double head = -d[0];
      const double tail = seg.size > 1 ? d.tail(seg.size - 1).norm() : 0.0;
      if (tail > head + tol) return kInf;
      s -= d.dot(lay.shift.segment(seg.start, seg.size));
      continue;
    }
    for (Eigen::Index i = seg.start; i < seg.start + seg.size; ++i) {
      if (dy[i] > tol) {
        if (!std::isfinite(lay.hi[i])) return kInf;
        s += lay.hi[i] * dy[i];
      } else if (dy[i] < -tol) {
        if (!std::isfinite(lay.lo[i])) return kInf;
        s += lay.lo[i] * dy[i];
      }
    }
  }
  return s;
}

}  // namespace

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::optimal:
      return "optimal";
    case SolveStatus::max_iter:
      return "max_iter";
    case SolveStatus::infeasible:
      return "infeasible";
  }
  return "unknown";
}

double ConeProgram::objective(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return 0.5 * x.dot(p * x) + q.dot(x) + constant;
}

double ConeProgram::max_violation(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double v = 0.0;
  if (a_eq.rows() > 0) v = std::max(v, (a_eq * x - b_eq).cwiseAbs().maxCoeff());
  if (lower.size() == x.size() && x.size() > 0) {
    v = std::max(v, (lower - x).maxCoeff());
    v = std::max(v, (x - upper).maxCoeff());
  }
  for (const auto& b : cones) {
    const Eigen::VectorXd s = b.f * x + b.g;
    const double tail = s.size() > 1 ? s.tail(s.size() - 1).norm() : 0.0;
    v = std::max(v, tail - s[0]);
  }
  return v;
}

void ConeProgram::validate() const {
  const Eigen::Index n = variables();
  if (p.rows() != n || p.cols() != n) throw DimensionMismatch("objective matrix shape mismatch");
  if (a_eq.rows() != b_eq.size() || (a_eq.rows() > 0 && a_eq.cols() != n))
    throw DimensionMismatch("equality block shape mismatch");
  if (lower.size() != upper.size() || (lower.size() != 0 && lower.size() != n))
    throw DimensionMismatch("box bounds shape mismatch");
  if (lower.size() == n && (lower.array() > upper.array()).any())
    throw InvalidArgument("box lower bound exceeds upper bound");
  for (const auto& b : cones)
    if (b.f.cols() != n || b.f.rows() != b.g.size() || b.f.rows() < 1)
      throw DimensionMismatch("cone block shape mismatch");
}

Solution solve_cone(const ConeProgram& cp, const SolverSettings& st, const Solution* warm) {
  cp.validate();
  const Eigen::Index n = cp.variables();
  const Layout lay = build_layout(cp);
  const Eigen::Index m = lay.c.rows();

  // cost scaling
  double cost_norm = std::max(cp.p.cwiseAbs().maxCoeff(), cp.q.size() ? cp.q.cwiseAbs().maxCoeff() : 0.0);
  const double cs = 1.0 / std::clamp(cost_norm, 1e-4, 1e4);
  const Eigen::MatrixXd p = cs * cp.p;
  const Eigen::VectorXd q = cs * cp.q;

  const double rho = st.rho;
  const double sigma = st.sigma;
  const double alpha = st.alpha;
  Eigen::MatrixXd kkt = p + sigma * Eigen::MatrixXd::Identity(n, n);
  if (m > 0) kkt.noalias() += rho * lay.c.transpose() * lay.c;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(kkt);
  if (ldlt.info() != Eigen::Success) throw NumericalError("cone solver KKT factorization failed");

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (warm && warm->x.size() == n) {
    x = warm->x;
    if (warm->y.size() == m) y = warm->y.cwiseQuotient(lay.row_scale) * cs;
  }
  Eigen::VectorXd z = lay.c * x;
  project(lay, z);

  Solution sol;
  Eigen::VectorXd y_window = y;
  Eigen::VectorXd x_tilde(n), z_tilde(m), z_relax(m), z_prev(m), rhs(n);
  const auto unscaled_primal = [&]() {
    if (m == 0) return 0.0;
    return ((lay.c * x - z).cwiseQuotient(lay.row_scale)).lpNorm<Eigen::Infinity>();
  };
  const auto unscaled_dual = [&]() {
    Eigen::VectorXd r = p * x + q;
    if (m > 0) r.noalias() += lay.c.transpose() * y;
    return r.lpNorm<Eigen::Infinity>() / cs;
  };

  int it = 0;
  for (it = 1; it <= st.max_iter; ++it) {
    rhs = sigma * x - q;
    if (m > 0) rhs.noalias() += lay.c.transpose() * (rho * z - y);
    x_tilde = ldlt.solve(rhs);
    z_tilde.noalias() = lay.c * x_tilde;
    x = alpha * x_tilde + (1.0 - alpha) * x;
    z_relax = alpha * z_tilde + (1.0 - alpha) * z;
    z_prev = z;
    z = z_relax + y / rho;
    project(lay, z);
    y += rho * (z_relax - z);

    if (it % st.check_every == 0 || it == st.max_iter) {
      sol.primal_residual = unscaled_primal();
      sol.dual_residual = unscaled_dual();
      if (sol.primal_residual <= st.tol && sol.dual_residual <= st.tol) {
        sol.status = SolveStatus::optimal;
        break;
      }
    }
    if (m > 0 && it % st.infeasibility_window == 0) {
      const Eigen::VectorXd dy = y - y_window;
      const double dy_norm = dy.lpNorm<Eigen::Infinity>();
      if (dy_norm > 1e-3) {
        const double ct = (lay.c.transpose() * dy).lpNorm<Eigen::Infinity>();
        const double eps = 1e-5 * dy_norm;
        if (ct <= eps && support(lay, dy, eps) < -eps) {
          sol.status = SolveStatus::infeasible;
          break;
        }
      }
      y_window = y;
    }
  }
  sol.iterations = std::min(it, st.max_iter);
  sol.x = x;
  sol.y = (y / cs).cwiseProduct(lay.row_scale);
  sol.objective = cp.objective(x);
  if (sol.status != SolveStatus::optimal && sol.status != SolveStatus::infeasible) {
    sol.primal_residual = unscaled_primal();
    sol.dual_residual = unscaled_dual();
    sol.status = SolveStatus::max_iter;
  }
  return sol;
}

}  // namespace polychaos
