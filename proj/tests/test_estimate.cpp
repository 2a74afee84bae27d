#include <cmath>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "polychaos/error.hpp"
#include "polychaos/estimate.hpp"

using namespace polychaos;

namespace {

BasisPtr make_basis(const MeasureDescriptor& m, int d) {
  return std::make_shared<const TotalDegreeBasis>(std::vector<PolynomialFamily>{build_family(m, d)}, d);
}

BasisPtr hermite(int d) { return make_basis(MeasureDescriptor::gaussian(0.0, 1.0), d); }

PceVector scalar(const BasisPtr& b, std::vector<double> c) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(b->size()));
  for (std::size_t i = 0; i < c.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = c[i];
  return PceVector(b, m);
}

LikelihoodModel identity(double noise) { return LikelihoodModel{[](double t) { return t; }, noise}; }

MomentTargets targets(std::vector<double> b) {
  MomentTargets t;
  t.b = std::move(b);
  t.samples = 1;
  t.effective_sample_size = 1.0;
  return t;
}

double raw(const PceVector& p, int m) {
  const auto rule = tensor_rule_for_degree(*p.basis(), m * p.basis()->degree());
  return raw_moment(p, m, rule)[0];
}

// Gaussian prior N(m0, s0^2), y = theta + N(0, s^2).
struct Conjugate {
  double mean;
  double variance;
};

Conjugate conjugate(double m0, double s0, double s, double y) {
  const double v = 1.0 / (1.0 / (s0 * s0) + 1.0 / (s * s));
  return {v * (m0 / (s0 * s0) + y / (s * s)), v};
}

}  // namespace

TEST(PosteriorMoments, ConjugateGaussianExample) {
  const auto b = hermite(1);
  const auto t = posterior_moments(scalar(b, {0.0, 1.0}), 1.0, identity(1.0), 2, 10000, 1);
  EXPECT_NEAR(t.mean(), 0.5, 0.02);
  EXPECT_NEAR(t.variance(), 0.5, 0.03);
  EXPECT_EQ(t.samples, 10000u);
  EXPECT_GT(t.effective_sample_size, 0.0);
  EXPECT_LE(t.effective_sample_size, 10000.0 + 1e-9);
}

TEST(PosteriorMoments, ConstantLikelihoodGivesPriorMoments) {
  const auto b = make_basis(MeasureDescriptor::uniform(-1.0, 1.0), 2);
  const auto prior = scalar(b, {1.0, 0.5, 0.1});
  const LikelihoodModel flat{[](double) { return 3.0; }, 0.7};
  const std::size_t k = 20000;
  const auto t = posterior_moments(prior, 3.0, flat, 4, k, 9);
  ASSERT_EQ(t.order(), 4);
  for (int m = 1; m <= 4; ++m) {
    const double want = raw(prior, m);
    // plain MC standard error of theta^m is an upper bound for stratified draws
    const double spread = std::sqrt(std::max(raw(prior, 2 * m) - want * want, 0.0));
    EXPECT_NEAR(t.b[static_cast<std::size_t>(m - 1)], want, 4.0 * spread / std::sqrt(static_cast<double>(k)))
        << "m = " << m;
  }
  EXPECT_NEAR(t.effective_sample_size, static_cast<double>(k), 1e-6 * k);
}

TEST(PosteriorMoments, TailMeasurementCollapses) {
  const auto b = hermite(1);
  EXPECT_THROW(posterior_moments(scalar(b, {0.0, 1.0}), 100.0, identity(1.0), 2, 10000, 1), LikelihoodCollapse);
}

TEST(PosteriorMoments, Preconditions) {
  const auto b = hermite(1);
  const auto prior = scalar(b, {0.0, 1.0});
  EXPECT_THROW(posterior_moments(prior, 0.0, identity(1.0), 2, 99, 1), InvalidArgument);
  EXPECT_THROW(posterior_moments(prior, 0.0, identity(1.0), 1, 1000, 1), InvalidArgument);
  EXPECT_THROW(posterior_moments(prior, 0.0, identity(0.0), 2, 1000, 1), InvalidArgument);
  EXPECT_THROW(posterior_moments(PceVector::zero(b, 2), 0.0, identity(1.0), 2, 1000, 1), DimensionMismatch);
}

TEST(PosteriorMoments, SeedDeterminism) {
  const auto b = hermite(2);
  const auto prior = scalar(b, {0.2, 0.8, 0.1});
  const auto one = posterior_moments(prior, 0.4, identity(0.5), 3, 5000, 17);
  const auto two = posterior_moments(prior, 0.4, identity(0.5), 3, 5000, 17);
  EXPECT_EQ(one.b, two.b);
  EXPECT_EQ(one.effective_sample_size, two.effective_sample_size);
}

TEST(RefitPce, HermiteClosedForm) {
  const auto b = hermite(1);
  const double mu = 0.3, sigma = 0.8;
  const auto res = refit_pce(b, targets({mu, mu * mu + sigma * sigma}), scalar(b, {0.0, 1.0}));
  EXPECT_TRUE(res.converged);
  EXPECT_NEAR(res.pce.coeffs()(0, 0), mu, 1e-8);
  EXPECT_NEAR(res.pce.coeffs()(0, 1), sigma, 1e-8);
}

TEST(RefitPce, AlreadyOptimalTakesNoIterations) {
  const auto b = hermite(1);
  const auto prior = scalar(b, {0.3, 0.8});
  const auto res = refit_pce(b, targets({raw(prior, 1), raw(prior, 2)}), prior);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 0);
  EXPECT_EQ(res.pce.coeffs(), prior.coeffs());
}

TEST(RefitPce, HalfAndHalf) {
  const auto b = hermite(1);
  for (double c1 : {1.0, -1.0, 0.2}) {
    const auto res = refit_pce(b, targets({0.5, 0.25 + 0.25}), scalar(b, {0.0, c1}));
    EXPECT_TRUE(res.converged);
    EXPECT_NEAR(res.pce.coeffs()(0, 0), 0.5, 1e-8);
    EXPECT_NEAR(std::abs(res.pce.coeffs()(0, 1)), 0.5, 1e-8);
    EXPECT_GE(res.pce.coeffs()(0, 1), 0.0);
  }
}

TEST(RefitPce, MomentFeasibility) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> mean_d(-2.0, 2.0), var_d(0.05, 3.0);
  for (const auto& b : {hermite(1), hermite(2), make_basis(MeasureDescriptor::uniform(-1.0, 1.0), 1),
                        make_basis(MeasureDescriptor::uniform(0.0, 4.0), 2)}) {
    for (int inst = 0; inst < 20; ++inst) {
      const double m1 = mean_d(rng);
      const double m2 = m1 * m1 + var_d(rng);
      PceVector init = PceVector::zero(b, 1);
      init.coeffs()(0, 1) = 1.0;
      const auto res = refit_pce(b, targets({m1, m2}), init);
      if (!res.converged) continue;
      EXPECT_LE(std::abs(raw(res.pce, 1) - m1), 1e-8);
      EXPECT_LE(std::abs(raw(res.pce, 2) - m2), 1e-6);
    }
  }
}

TEST(RefitPce, Preconditions) {
  const auto b = hermite(4);
  EXPECT_THROW(refit_pce(b, targets({0.0, 1.0}), scalar(b, {0.0, 1.0})), InvalidArgument);
  const auto b2 = std::make_shared<const TotalDegreeBasis>(
      std::vector<PolynomialFamily>{build_family(MeasureDescriptor::gaussian(0.0, 1.0), 1),
                                    build_family(MeasureDescriptor::gaussian(0.0, 1.0), 1)},
      1);
  EXPECT_THROW(refit_pce(b2, targets({0.0, 1.0}), PceVector::zero(b2, 1)), InvalidArgument);
  EXPECT_THROW(refit_pce(hermite(1), targets({0.0, 1.0}), scalar(hermite(2), {0.0, 1.0})), DimensionMismatch);
}

TEST(FilterStep, UninformativeMeasurement) {
  const auto b = hermite(2);
  const auto prior = scalar(b, {0.4, 0.9, 0.0});
  FilterConfig cfg;
  cfg.seed = 3;
  const auto res = filter_step(prior, 1.5, identity(1e6), cfg);
  EXPECT_LE((res.posterior.coeffs() - prior.coeffs()).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(FilterStep, ConjugateMeanLargeSample) {
  const auto b = hermite(1);
  FilterConfig cfg;
  cfg.samples = 100000;
  cfg.seed = 5;
  const auto res = filter_step(scalar(b, {0.0, 1.0}), 1.0, identity(1.0), cfg);
  const auto want = conjugate(0.0, 1.0, 1.0, 1.0);
  EXPECT_NEAR(mean(res.posterior)[0], want.mean, 0.01 * std::abs(want.mean));
}

TEST(FilterStep, ConjugateAgreement) {
  const auto b = hermite(1);
  struct Case {
    double m0, s0, s, y;
  };
  for (const auto& c : {Case{0.0, 1.0, 1.0, 1.0}, Case{1.0, 0.5, 0.8, 0.2}, Case{-2.0, 2.0, 1.5, 1.0}}) {
    FilterConfig cfg;
    cfg.samples = 10000;
    cfg.seed = 11;
    const auto res = filter_step(scalar(b, {c.m0, c.s0}), c.y, identity(c.s), cfg);
    const auto want = conjugate(c.m0, c.s0, c.s, c.y);
    EXPECT_NEAR(mean(res.posterior)[0], want.mean, 0.02 * std::abs(want.mean));
    EXPECT_NEAR(variance(res.posterior)[0], want.variance, 0.02 * want.variance);
    EXPECT_GE(res.posterior.coeffs()(0, 1), 0.0);
  }
}

TEST(FilterStep, FiftyStepConsistency) {
  const auto b = hermite(1);
  const double truth = 0.7, noise = 0.25;
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> nd(0.0, noise);
  auto theta = scalar(b, {0.0, 1.0});
  Conjugate exact{0.0, 1.0};
  std::vector<double> vars;
  for (int t = 0; t < 50; ++t) {
    const double y = truth + nd(rng);
    FilterConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(100 + t);
    theta = filter_step(theta, y, identity(noise), cfg).posterior;
    exact = conjugate(exact.mean, std::sqrt(exact.variance), noise, y);
    vars.push_back(variance(theta)[0]);
    EXPECT_GE(theta.coeffs()(0, 1), 0.0);
  }
  EXPECT_NEAR(mean(theta)[0], truth, 0.1);
  EXPECT_NEAR(mean(theta)[0], exact.mean, 0.02 * std::abs(exact.mean));
  EXPECT_NEAR(variance(theta)[0], exact.variance, 0.05 * exact.variance);
  double last = INFINITY;
  for (int w = 0; w < 5; ++w) {
    double avg = 0.0;
    for (int i = 0; i < 10; ++i) avg += vars[static_cast<std::size_t>(10 * w + i)] / 10.0;
    EXPECT_LT(avg, last) << "window " << w;
    last = avg;
  }
}

TEST(FilterTrace, CsvHeader) {
  std::ostringstream os;
  write_csv(os, {FilterTraceRow{0, NAN, 0.0, 1.0, 100.0}, FilterTraceRow{1, 0.5, 0.25, 0.5, 80.0}});
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,y,posterior_mean,posterior_variance,ess");
  std::getline(is, line);
  EXPECT_EQ(line.rfind("0,", 0), 0u);
}
