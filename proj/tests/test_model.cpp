#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "nearcrit/model.hpp"
#include "test_support.hpp"

using namespace nearcrit;
using namespace nearcrit::testing;

namespace {

SpectralData scalar_sd() {
  Matrix one(1, 1);
  one << 1.0;
  return perron_decompose(one);
}

Vector v1(double a) {
  Vector x(1);
  x << a;
  return x;
}

Vector v2(double a, double b) {
  Vector x(2);
  x << a, b;
  return x;
}

// Deterministic model: X' = M X.
ModelSpec linear_model(const SpectralData& sd) {
  ModelSpec m;
  m.name = "linear";
  m.sd = sd;
  m.g = [d = sd.dim()](const Vector&) { return Vector::Zero(d); };
  m.sigma = [](const Vector&) { return 0.0; };
  m.noise = [d = sd.dim()](const Vector&, Rng&) { return Vector::Zero(d); };
  return m;
}

}  // namespace

TEST(SigmaProfile, Values) {
  EXPECT_DOUBLE_EQ(SigmaProfile::power(0.5)(16.0), 4.0);
  EXPECT_DOUBLE_EQ(SigmaProfile::power(0.5, 3.0)(4.0), 6.0);
  EXPECT_DOUBLE_EQ(SigmaProfile::log_decay(1.0)(std::exp(2.0) - 1.0), (std::exp(2.0) - 1.0) / 4.0);
  EXPECT_EQ(SigmaProfile::power(0.5)(0.0), 0.0);
  EXPECT_EQ(SigmaProfile::power(0.5)(-1.0), 0.0);
}

TEST(SmallO, RejectsLinearAndAcceptsSublinearProfiles) {
  EXPECT_NO_THROW(require_small_o([](double t) { return std::sqrt(t); }));
  EXPECT_NO_THROW(require_small_o([](double t) { return t / (2.0 + std::log1p(t)); }));
  EXPECT_THROW(require_small_o([](double t) { return 0.3 * t; }), ProfileViolatesSmallO);
  EXPECT_THROW(require_small_o([](double t) { return t * t; }), ProfileViolatesSmallO);
  EXPECT_THROW(make_lamperti_model(scalar_sd(), 1.0, SigmaProfile::power(1.0)), ProfileViolatesSmallO);
}

TEST(Lamperti, ThetaZeroHasNoDrift) {
  const ModelSpec m = make_lamperti_model(scalar_sd(), 0.0, SigmaProfile::power(0.5));
  for (double t : {1.0, 50.0, 1e6}) EXPECT_EQ(m.g(v1(t))(0), 0.0);
}

TEST(Lamperti, DriftSatisfiesTheProductIdentity) {
  // ell x * ell g = theta sigma^2 / 2, so theta = 4 gives x g = 2 sigma^2
  const ModelSpec m = make_lamperti_model(scalar_sd(), 4.0, SigmaProfile::power(0.5));
  for (double t : {4.0, 100.0, 1e5}) {
    const Vector x = v1(t);
    const double s = m.sigma(x);
    EXPECT_DOUBLE_EQ(s, std::sqrt(t));
    EXPECT_NEAR(t * m.g(x)(0), 2.0 * s * s, 1e-12 * s * s);
  }
  const SpectralData sd = perron_decompose(half_ones());
  const ModelSpec m2 = make_lamperti_model(sd, 0.5, SigmaProfile::power(0.5));
  const Vector x = v2(30.0, 10.0);
  const double s = m2.sigma(x);
  EXPECT_NEAR(ell_dot(sd, x) * ell_dot(sd, m2.g(x)), 0.25 * s * s, 1e-12 * s * s);
}

TEST(Lamperti, ScalarStepIsTwoPoint) {
  const ModelSpec m = make_lamperti_model(scalar_sd(), 0.5, SigmaProfile::power(0.5));
  const Vector x = v1(64.0);
  const double g = 0.5 * 64.0 / (2.0 * 64.0);
  std::set<double> seen;
  Rng rng(1);
  for (int k = 0; k < 200; ++k) seen.insert(step(m, x, rng)(0));
  ASSERT_EQ(seen.size(), 2u);
  EXPECT_DOUBLE_EQ(*seen.begin(), 64.0 + g - 8.0);
  EXPECT_DOUBLE_EQ(*seen.rbegin(), 64.0 + g + 8.0);
}

TEST(Lamperti, NoiseIsMeanZeroWithExactEllVariance) {
  const SpectralData sd = normalize_to_critical(fibonacci()).second;
  const ModelSpec m = make_lamperti_model(sd, 1.0, SigmaProfile::power(0.5));
  const Vector x = 40.0 * sd.r + Vector::Unit(2, 0);
  const double s = m.sigma(x);
  Rng rng(2);
  for (int k = 0; k < 100; ++k) {
    const Vector xi = m.noise(x, rng);
    EXPECT_NEAR(std::abs(ell_dot(sd, xi)), s, 1e-12 * s);
  }
}

TEST(Lamperti, OrthantInvarianceOverManySteps) {
  Rng mrng(6);
  const std::vector<SpectralData> sds = {scalar_sd(), perron_decompose(half_ones()),
                                         normalize_to_critical(fibonacci()).second,
                                         normalize_to_critical(random_primitive(4, mrng)).second};
  for (const SpectralData& sd : sds) {
    for (const SigmaProfile& prof : {SigmaProfile::power(0.5), SigmaProfile::log_decay(1.0)}) {
      const ModelSpec m = make_lamperti_model(sd, 2.0, prof);
      Rng rng(7);
      Vector x = 5.0 * sd.r;
      for (int n = 0; n < 50000; ++n) {
        x = step(m, x, rng);
        ASSERT_TRUE(in_orthant(x)) << m.name << " step " << n;
        if (ell_dot(sd, x) > 1e7 || !(ell_dot(sd, x) > 0.0)) x = 5.0 * sd.r;
      }
    }
  }
}

TEST(Lamperti, SameThetaSameSeedIsBitIdentical) {
  const SpectralData sd = perron_decompose(half_ones());
  const ModelSpec a = make_lamperti_model(sd, 1.25, SigmaProfile::power(0.5));
  const ModelSpec b = make_lamperti_model(sd, 1.25, SigmaProfile::power(0.5));
  Rng ra(42), rb(42);
  Vector x = 20.0 * sd.r, y = x;
  for (int n = 0; n < 10000; ++n) {
    x = step(a, x, ra);
    y = step(b, y, rb);
    ASSERT_EQ(x, y);
    if (ell_dot(sd, x) < 2.0) x = y = 20.0 * sd.r;
  }
}

TEST(Lamperti, AbsorbingAtTheOrigin) {
  const ModelSpec m = make_lamperti_model(scalar_sd(), 0.5, SigmaProfile::power(0.5));
  Rng rng(1);
  EXPECT_EQ(step(m, v1(0.0), rng)(0), 0.0);
}

TEST(CustomModel, ExpressionsDriveGAndSigma) {
  const SpectralData sd = perron_decompose(half_ones());
  const ModelSpec m = make_custom_model(sd, {"0.25 * sqrt(lx) / lx"}, "sqrt(lx)");
  const Vector x = v2(9.0, 7.0);  // lx = 8
  EXPECT_NEAR(m.sigma(x), std::sqrt(8.0), 1e-15);
  EXPECT_NEAR(m.g(x)(0), 0.25 * std::sqrt(8.0) / 8.0, 1e-15);
  const ModelSpec c = make_custom_model(sd, {"x1 / 100", "x2 / 100"}, "min(sqrt(lx), 2)");
  const Vector gc = c.g(x);
  EXPECT_NEAR(gc(0), 0.09, 1e-15);
  EXPECT_NEAR(gc(1), 0.07, 1e-15);
  EXPECT_NEAR(c.sigma(x), 2.0, 1e-15);
  const ModelSpec neg = make_custom_model(sd, {"-1"}, "1");
  EXPECT_THROW(neg.g(x), OrthantViolation);
  EXPECT_THROW(make_custom_model(sd, {"1", "2", "3"}, "1"), InvalidArgument);
  EXPECT_THROW(make_custom_model(sd, {"x3"}, "1"), InvalidArgument);
}

TEST(Expression, GrammarAndErrors) {
  Vector x = v2(2.0, 5.0);
  auto eval = [&](const std::string& s) { return Expression::parse(s, 2)(ExprContext{3.0, &x}); };
  EXPECT_DOUBLE_EQ(eval("1 + 2 * 3"), 7.0);
  EXPECT_DOUBLE_EQ(eval("(1 + 2) * 3"), 9.0);
  EXPECT_DOUBLE_EQ(eval("2 ^ 3 ^ 2"), 512.0);
  EXPECT_DOUBLE_EQ(eval("-2 ^ 2"), -4.0);
  EXPECT_DOUBLE_EQ(eval("lx * x2 - x1"), 13.0);
  EXPECT_DOUBLE_EQ(eval("pow(x1, 3) + max(1, x2) + min(1, x2)"), 14.0);
  EXPECT_DOUBLE_EQ(eval("abs(-4) + sqrt(9) + exp(0) + log(e)"), 9.0);
  EXPECT_NEAR(eval("pi"), std::acos(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(eval("1e2 / 4"), 25.0);
  for (const char* bad : {"", "1 +", "foo", "log(1, 2)", "pow(1)", "x0", "(1", "1 2", "@"}) {
    EXPECT_THROW(Expression::parse(bad, 2), InvalidArgument) << bad;
  }
}

TEST(CounterexampleParams, DefaultsSatisfyTheContract) {
  EXPECT_NO_THROW(validate_counterexample_params(CounterexampleParams::defaults()));
  const CounterexampleParams p = CounterexampleParams::defaults();
  for (double t : {1.0, 10.0, 1e3, 1e6}) {
    const double h = 1e-5 * t;
    EXPECT_NEAR(p.derivative(t), (p.sigma_bar(t + h) - p.sigma_bar(t - h)) / (2.0 * h), 1e-6);
  }
}

TEST(CounterexampleParams, ViolationsAreReported) {
  CounterexampleParams wide = CounterexampleParams::defaults();
  wide.sigma_bar = [](double t) { return 0.6 * t; };
  wide.sigma_bar_prime = {};
  EXPECT_THROW(validate_counterexample_params(wide), ParamContractViolation);
  CounterexampleParams big_g = CounterexampleParams::defaults();
  big_g.g_bar = [](double t) { return t; };
  EXPECT_THROW(validate_counterexample_params(big_g), ParamContractViolation);
  CounterexampleParams no_decay = CounterexampleParams::defaults();
  no_decay.sigma_bar = [](double t) { return t / 2.5; };  // derivative stays at 0.4
  no_decay.sigma_bar_prime = {};
  no_decay.g_bar = [](double t) { return 0.1 * t / 2.5; };
  EXPECT_THROW(validate_counterexample_params(no_decay), ParamContractViolation);
  EXPECT_THROW(make_counterexample_model(big_g), ParamContractViolation);
}

TEST(CounterexampleModel, StepFromTheRay) {
  const CounterexampleParams p = CounterexampleParams::defaults();
  const ModelSpec m = make_counterexample_model(p);
  const double s = p.sigma_bar(1.0), g = p.g_bar(1.0);
  Rng rng(3);
  std::set<std::pair<double, double>> outcomes;
  for (int k = 0; k < 400; ++k) {
    const Vector next = step(m, m.sd.r, rng);
    const Projection pr = project(next, m.sd);
    const double t = ell_dot(m.sd, next);
    EXPECT_TRUE(std::abs(t - (1.0 + g + s)) < 1e-15 || std::abs(t - (1.0 + g - s)) < 1e-15);
    EXPECT_NEAR(pr.check.lpNorm<1>(), 2.0 * s, 1e-15);
    EXPECT_NEAR(std::abs(pr.check(0)), s, 1e-15);
    EXPECT_NEAR(pr.check(0), -pr.check(1), 1e-15);
    outcomes.insert({t, pr.check(0)});
  }
  EXPECT_EQ(outcomes.size(), 4u);
}

TEST(CounterexampleModel, OffBandStateHasNoDriftAndNoZeta) {
  const CounterexampleParams p = CounterexampleParams::defaults();
  const ModelSpec m = make_counterexample_model(p);
  const Vector x = v2(15.0, 5.0);  // lx = 10, |check|_1 = 10 > sigma_bar(10)
  EXPECT_EQ(m.g(x), Vector::Zero(2));
  Rng rng(4);
  for (int k = 0; k < 100; ++k) {
    const Vector xi = m.noise(x, rng);
    EXPECT_EQ(xi(0), xi(1));
    EXPECT_EQ(std::abs(xi(0)), p.sigma_bar(10.0));
  }
}

TEST(CounterexampleModel, EllOfChiAndZetaIsExact) {
  const SpectralData sd = perron_decompose(counterexample_matrix());
  EXPECT_EQ(ell_dot(sd, v2(1.0, -1.0)), 0.0);
  EXPECT_EQ(ell_dot(sd, v2(1.0, 1.0)), 1.0);
  EXPECT_EQ(ell_dot(sd, v2(-1.0, -1.0)), -1.0);
}

TEST(Step, DeterministicLinearPart) {
  Rng mrng(12);
  const SpectralData sd = normalize_to_critical(random_primitive(3, mrng)).second;
  const ModelSpec m = linear_model(sd);
  Rng rng(1);
  const Vector x = random_orthant(3, mrng, 10.0);
  EXPECT_EQ(step(m, x, rng), sd.M * x);
}

TEST(Step, LeavingTheOrthantThrows) {
  ModelSpec m = linear_model(scalar_sd());
  m.noise = [](const Vector&, Rng&) { return v1(-10.0); };
  Rng rng(1);
  EXPECT_THROW(step(m, v1(1.0), rng), OrthantViolation);
}

TEST(NoiseMoments, ScalarTwoPointIsExact) {
  const ModelSpec m = make_lamperti_model(scalar_sd(), 0.5, SigmaProfile::power(0.5));
  Rng rng(5);
  const NoiseMomentsReport r = noise_moments_check(m, v1(100.0), 20000, rng);
  EXPECT_NEAR(r.variance_ratio, 1.0, 1e-12);
  EXPECT_NEAR(r.p_moment_ratio, 1.0, 1e-12);
  EXPECT_EQ(m.c_moment, 1.0);
  EXPECT_TRUE(r.ok());
  EXPECT_LT(std::abs(r.mean_ell_xi), 4.0 * r.mean_se + 1e-12);
}

TEST(NoiseMoments, CounterexampleOnTheRay) {
  const ModelSpec m = make_counterexample_model(CounterexampleParams::defaults());
  Rng rng(6);
  const NoiseMomentsReport r = noise_moments_check(m, v2(50.0, 50.0), 20000, rng);
  EXPECT_NEAR(r.variance_ratio, 1.0, 1e-12);  // only chi reaches ell xi
  EXPECT_EQ(m.c_moment, std::pow(4.0, 3.0));
  EXPECT_LE(r.p_moment_ratio, m.c_moment);
  EXPECT_TRUE(r.ok());
}

TEST(NoiseMoments, FlagsBrokenNoise) {
  ModelSpec m = make_lamperti_model(scalar_sd(), 0.5, SigmaProfile::power(0.5));
  m.noise = [](const Vector& x, Rng& rng) { return v1(std::sqrt(x(0)) * (rng.sign() + 0.5)); };
  Rng rng(7);
  const NoiseMomentsReport r = noise_moments_check(m, v1(100.0), 20000, rng);
  EXPECT_TRUE(r.mean_flag);
  EXPECT_FALSE(r.ok());
  Rng rng2(7);
  EXPECT_THROW(noise_moments_check(m, v1(100.0), 10, rng2), InvalidArgument);
}
