#include <cmath>
#include <cstdlib>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "polychaos/error.hpp"
#include "polychaos/propagate.hpp"

using namespace polychaos;

namespace {

BasisPtr make_basis(std::vector<MeasureDescriptor> ms, int d) {
  std::vector<PolynomialFamily> fams;
  for (const auto& m : ms) fams.push_back(build_family(m, d));
  return std::make_shared<const TotalDegreeBasis>(std::move(fams), d);
}

PceVector scalar(const BasisPtr& b, std::vector<double> c) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(b->size()));
  for (std::size_t i = 0; i < c.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = c[i];
  return PceVector(b, m);
}

const double kDecayMean = std::exp(-0.5) - std::exp(-1.5);
const double kDecayVar = 0.5 * (std::exp(-1.0) - std::exp(-3.0)) - kDecayMean * kDecayMean;

struct Decay {
  BasisPtr basis;
  TripleProductTensor t;
  GalerkinOde ode;
  PceVector y0;
};

Decay decay(int d) {
  auto b = make_basis({MeasureDescriptor::uniform(0.5, 1.5)}, d);
  auto t = triple_products(*b);
  // theta = 1 + 0.5 xi  ->  (1, 0.5/sqrt(3))
  auto rate = scalar(b, {1.0, 0.5 / std::sqrt(3.0)});
  GalerkinOde ode(rate, t);
  return Decay{b, t, ode, scalar(b, {1.0})};
}

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* v) {
    const char* old = std::getenv("POLYCHAOS_THREADS");
    had_ = old != nullptr;
    if (had_) old_ = old;
    setenv("POLYCHAOS_THREADS", v, 1);
  }
  ~ThreadsEnv() {
    if (had_) setenv("POLYCHAOS_THREADS", old_.c_str(), 1);
    else unsetenv("POLYCHAOS_THREADS");
  }

 private:
  bool had_ = false;
  std::string old_;
};

}  // namespace

TEST(ExpandLinear, DeterministicIsBlockDiagonal) {
  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0), MeasureDescriptor::uniform(-1.0, 1.0)}, 2);
  Eigen::Matrix2d a;
  a << 0.9, 0.2, -0.1, 0.7;
  Eigen::Vector2d bb(0.0, 1.0);
  const auto sys = ParametricLinearSystem::deterministic(b, a, bb);
  const auto exp = expand_linear(sys, triple_products(*b));
  const auto terms = exp.terms();
  for (Eigen::Index i = 0; i < terms; ++i)
    for (Eigen::Index l = 0; l < terms; ++l) {
      const Eigen::MatrixXd blk = exp.a_hat.block(l * 2, i * 2, 2, 2);
      EXPECT_LE((blk - (i == l ? Eigen::MatrixXd(a) : Eigen::MatrixXd::Zero(2, 2))).cwiseAbs().maxCoeff(), 1e-14);
    }
  EXPECT_LE((exp.b_hat.topRows(2) - bb).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE(exp.b_hat.bottomRows(2 * (terms - 1)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ExpandLinear, ScalarHermiteTwoSteps) {
  const double mu = 1.0, sigma = 0.5;
  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 2);
  const ParametricLinearSystem sys(1, 1, scalar(b, {mu, sigma}), scalar(b, {0.0}));
  const auto exp = expand_linear(sys, triple_products(*b));
  const Eigen::Vector3d x0(1.0, 0.0, 0.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  const Eigen::VectorXd x1 = step(exp, x0, u);
  EXPECT_NEAR(x1[0], mu, 1e-14);
  EXPECT_NEAR(x1[1], sigma, 1e-14);
  EXPECT_NEAR(x1[2], 0.0, 1e-14);
  const Eigen::VectorXd x2 = step(exp, x1, u);
  EXPECT_NEAR(x2[0], mu * mu + sigma * sigma, 1e-14);
  EXPECT_NEAR(x2[0], 1.25, 1e-14);
}

TEST(ExpandLinear, TensorBasisMismatch) {
  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 2);
  const auto other = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 3);
  const ParametricLinearSystem sys(1, 1, scalar(b, {1.0}), scalar(b, {1.0}));
  EXPECT_THROW(expand_linear(sys, triple_products(*other)), InvalidArgument);
}

TEST(Step, ZeroAndDeterministic) {
  const auto b = make_basis({MeasureDescriptor::uniform(-1.0, 1.0)}, 3);
  Eigen::Matrix2d a;
  a << 1.0, 0.1, 0.0, 1.0;
  const auto sys = ParametricLinearSystem::deterministic(b, a, Eigen::Vector2d(0.005, 0.1));
  const auto exp = expand_linear(sys, triple_products(*b));
  const auto n = exp.a_hat.rows();
  EXPECT_EQ(step(exp, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(1)).cwiseAbs().maxCoeff(), 0.0);

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  x.head(2) << 1.0, -0.5;
  Eigen::Vector2d nominal(1.0, -0.5);
  for (int k = 0; k < 5; ++k) {
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.3 * k);
    x = step(exp, x, u);
    nominal = a * nominal + Eigen::Vector2d(0.005, 0.1) * u[0];
    EXPECT_LE((x.head(2) - nominal).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_EQ(x.tail(n - 2).cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_THROW(step(exp, Eigen::VectorXd::Zero(n - 1), Eigen::VectorXd::Zero(1)), DimensionMismatch);
  EXPECT_THROW(step(exp, Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(2)), DimensionMismatch);
}

TEST(Step, Linearity) {
  const auto b = make_basis({MeasureDescriptor::uniform(-0.1, 0.1), MeasureDescriptor::gaussian(0.0, 0.05)}, 2);
  const auto tr = tensor_rule_for_degree(*b, 4);
  const auto sys = ParametricLinearSystem::from_functions(
      2, 1, b,
      [&](const Eigen::VectorXd& xi) {
        Eigen::MatrixXd a(2, 2);
        a << 1.0, 0.1, b->families()[0].measure().to_parameter(xi[0]), 1.0 + b->families()[1].measure().to_parameter(xi[1]);
        return a;
      },
      [](const Eigen::VectorXd&) { return Eigen::MatrixXd(Eigen::Vector2d(0.0, 0.1)); });
  const auto exp = expand_linear(sys, triple_products(*b));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd;
  const auto n = exp.a_hat.rows();
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd x1(n), x2(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      x1[i] = nd(rng);
      x2[i] = nd(rng);
    }
    const Eigen::VectorXd u1 = Eigen::VectorXd::Constant(1, nd(rng));
    const Eigen::VectorXd u2 = Eigen::VectorXd::Constant(1, nd(rng));
    const Eigen::VectorXd lhs = step(exp, x1 + x2, u1 + u2);
    const Eigen::VectorXd rhs = step(exp, x1, u1) + step(exp, x2, u2);
    EXPECT_LE((lhs - rhs).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Step, BlockZeroIsMean) {
  const auto b = make_basis({MeasureDescriptor::uniform(-1.0, 1.0)}, 3);
  const ParametricLinearSystem sys(1, 1, scalar(b, {0.8, 0.1}), scalar(b, {1.0, 0.0, 0.05}));
  const auto exp = expand_linear(sys, triple_products(*b));
  const auto rule = tensor_rule_for_degree(*b, 6);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  x[0] = 2.0;
  for (int k = 0; k < 4; ++k) {
    x = step(exp, x, Eigen::VectorXd::Constant(1, 0.5));
    const auto p = unstack(b, x, 1);
    EXPECT_NEAR(x[0], raw_moment(p, 1, rule)[0], 1e-12);
  }
}

TEST(StackUnstack, RoundTrip) {
  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 2);
  Eigen::MatrixXd c(2, 3);
  c << 1, 2, 3, 4, 5, 6;
  const PceVector p(b, c);
  const Eigen::VectorXd s = stack(p);
  EXPECT_EQ(s[0], 1);
  EXPECT_EQ(s[1], 4);
  EXPECT_EQ(s[2], 2);
  EXPECT_EQ(unstack(b, s, 2).coeffs(), c);
}

TEST(GalerkinOde, DeterministicRate) {
  const auto b = make_basis({MeasureDescriptor::uniform(-1.0, 1.0)}, 3);
  const double c = 0.7;
  const GalerkinOde ode(scalar(b, {c}), triple_products(*b));
  const auto traj = integrate_ode(ode, scalar(b, {2.0}), {0.5, 1.0, 2.0}, 1e-3);
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    EXPECT_NEAR(traj.states[k].coeffs()(0, 0), 2.0 * std::exp(-c * traj.times[k]), 1e-12);
    EXPECT_NEAR(traj.states[k].coeffs().rightCols(3).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  }
}

TEST(GalerkinOde, DecayExample) {
  const auto d = decay(6);
  const auto traj = integrate_ode(d.ode, d.y0, {1.0});
  EXPECT_NEAR(mean(traj.states[0])[0], kDecayMean, 1e-6);
  EXPECT_NEAR(mean(traj.states[0])[0], 0.3834005, 1e-6);
  EXPECT_NEAR(variance(traj.states[0])[0], kDecayVar, 1e-5);
  EXPECT_NEAR(variance(traj.states[0])[0], 0.0120497, 1e-5);
}

TEST(GalerkinOde, Rk4Order) {
  // oracle: exact flow of the coefficient ODE, a(t) = a(0) exp(-M^T t)
  const auto d = decay(6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.ode.rhs_matrix());
  ASSERT_LE((d.ode.rhs_matrix() - d.ode.rhs_matrix().transpose()).cwiseAbs().maxCoeff(), 1e-14);
  const Eigen::MatrixXd flow =
      es.eigenvectors() * (-es.eigenvalues().array()).exp().matrix().asDiagonal() * es.eigenvectors().transpose();
  const Eigen::RowVectorXd exact = d.y0.coeffs() * flow;
  const auto err = [&](double dt) {
    const auto traj = integrate_ode(d.ode, d.y0, {1.0}, dt);
    return (traj.states[0].coeffs().row(0) - exact).cwiseAbs().maxCoeff();
  };
  const double ratio = err(0.1) / err(0.05);
  EXPECT_GE(ratio, 12.0);
  EXPECT_LE(ratio, 20.0);
}

TEST(GalerkinOde, Divergence) {
  const auto b = make_basis({MeasureDescriptor::uniform(-1.0, 1.0)}, 1);
  const GalerkinOde ode(scalar(b, {-1e300}), triple_products(*b));
  EXPECT_THROW(galerkin_ode_step(ode, scalar(b, {1e10}).coeffs(), 1.0), NumericalError);
}

TEST(GalerkinOde, ErrorDecreasesWithDegree) {
  double previous = std::numeric_limits<double>::infinity();
  for (int deg : {2, 4, 6}) {
    const auto d = decay(deg);
    const auto s = integrate_ode(d.ode, d.y0, {1.0}).states[0];
    const double e = std::abs(mean(s)[0] - kDecayMean) + std::abs(variance(s)[0] - kDecayVar);
    EXPECT_LT(e, previous) << "d=" << deg;
    previous = e;
  }
}

TEST(MonteCarlo, DeterministicSystem) {
  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 2);
  Eigen::Matrix2d a;
  a << 0.9, 0.1, 0.0, 0.8;
  const auto sys = ParametricLinearSystem::deterministic(b, a, Eigen::Vector2d(0.0, 1.0));
  const std::vector<Eigen::VectorXd> u(4, Eigen::VectorXd::Constant(1, 0.2));
  for (std::size_t n : {2u, 17u, 3000u}) {
    const auto mc = mc_propagate(sys, Eigen::Vector2d(1.0, -1.0), u, n, 3);
    Eigen::Vector2d x(1.0, -1.0);
    for (int t = 0; t <= 4; ++t) {
      EXPECT_LE((mc.mean.col(t) - x).cwiseAbs().maxCoeff(), 1e-14);
      EXPECT_LE(mc.variance.col(t).cwiseAbs().maxCoeff(), 1e-24);
      if (t < 4) x = a * x + Eigen::Vector2d(0.0, 1.0) * 0.2;
    }
  }
}

TEST(MonteCarlo, DecayExample) {
  const auto d = decay(6);
  const auto mc = mc_propagate(d.ode, d.y0, {1.0}, 100000, 17);
  EXPECT_LE(std::abs(mc.mean(0, 0) - kDecayMean), 3.0 * mc.stderr_mean(0, 0));
  EXPECT_LE(std::abs(mc.variance(0, 0) - kDecayVar), 4.0 * mc.stderr_variance(0, 0));
}

TEST(MonteCarlo, GalerkinAgreementAtEveryTime) {
  const auto d = decay(6);
  const std::vector<double> times = {0.1, 0.25, 0.5, 1.0, 2.0};
  const auto mc = mc_propagate(d.ode, d.y0, times, 100000, 5);
  const auto traj = integrate_ode(d.ode, d.y0, times);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto K = static_cast<Eigen::Index>(k);
    EXPECT_LE(std::abs(mean(traj.states[k])[0] - mc.mean(0, K)), 4.0 * mc.stderr_mean(0, K));
    EXPECT_LE(std::abs(variance(traj.states[k])[0] - mc.variance(0, K)), 4.0 * mc.stderr_variance(0, K));
  }

  const auto b = make_basis({MeasureDescriptor::gaussian(0.0, 1.0)}, 2);
  const ParametricLinearSystem sys(1, 1, scalar(b, {1.0, 0.5}), scalar(b, {0.0}));
  const auto exp = expand_linear(sys, triple_products(*b));
  const std::vector<Eigen::VectorXd> u(2, Eigen::VectorXd::Zero(1));
  const auto lm = mc_propagate(sys, Eigen::VectorXd::Ones(1), u, 100000, 6);
  Eigen::VectorXd x = Eigen::Vector3d(1.0, 0.0, 0.0);
  for (int t = 0; t <= 2; ++t) {
    const auto p = unstack(b, x, 1);
    if (t > 0) {
      EXPECT_LE(std::abs(mean(p)[0] - lm.mean(0, t)), 4.0 * lm.stderr_mean(0, t));
      EXPECT_LE(std::abs(variance(p)[0] - lm.variance(0, t)), 4.0 * lm.stderr_variance(0, t));
    }
    if (t < 2) x = step(exp, x, u[0]);
  }
}

TEST(MonteCarlo, SeedDeterminismAndWorkerIndependence) {
  const auto d = decay(4);
  McSummary one, many, again;
  {
    ThreadsEnv env("1");
    one = mc_propagate(d.ode, d.y0, {0.5, 1.0}, 5000, 42);
  }
  {
    ThreadsEnv env("7");
    many = mc_propagate(d.ode, d.y0, {0.5, 1.0}, 5000, 42);
    again = mc_propagate(d.ode, d.y0, {0.5, 1.0}, 5000, 42);
  }
  EXPECT_EQ(one.mean, many.mean);
  EXPECT_EQ(one.variance, many.variance);
  EXPECT_EQ(one.stderr_variance, many.stderr_variance);
  EXPECT_EQ(many.mean, again.mean);
  const auto other = mc_propagate(d.ode, d.y0, {0.5, 1.0}, 5000, 43);
  EXPECT_NE(other.mean, one.mean);
}

TEST(MonteCarlo, CsvLayout) {
  const auto d = decay(2);
  const auto mc = mc_propagate(d.ode, d.y0, {0.0, 1.0}, 100, 1);
  std::ostringstream os;
  write_csv(os, mc);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "time,output,mean,variance,stderr");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  EXPECT_EQ(rows, 2);
}
