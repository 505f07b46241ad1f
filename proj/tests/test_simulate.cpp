#include <gtest/gtest.h>

#include <cmath>

#include "nearcrit/counterexample.hpp"
#include "nearcrit/simulate.hpp"
#include "test_support.hpp"

using namespace nearcrit;
using namespace nearcrit::testing;

namespace {

ModelSpec linear_model(const SpectralData& sd) {
  ModelSpec m;
  m.name = "linear";
  m.sd = sd;
  m.g = [d = sd.dim()](const Vector&) { return Vector::Zero(d); };
  m.sigma = [](const Vector&) { return 0.0; };
  m.noise = [d = sd.dim()](const Vector&, Rng&) { return Vector::Zero(d); };
  return m;
}

ModelSpec lamperti2(double theta) {
  return make_lamperti_model(perron_decompose(half_ones()), theta, SigmaProfile::power(0.5));
}

}  // namespace

TEST(Trajectory, ZeroNoiseOnTheRayIsUndecided) {
  const SpectralData sd = normalize_to_critical(fibonacci()).second;
  const TrajectoryRecord r = run_trajectory(linear_model(sd), 100.0 * sd.r, 10.0, 1e4, 5000, 1);
  EXPECT_EQ(r.outcome, Outcome::undecided);
  EXPECT_FALSE(r.first_passage.has_value());
  EXPECT_EQ(r.steps, 5000u);
  EXPECT_LT(r.final_angle, 1e-12);
  EXPECT_EQ(r.series.back().n, 5000u);
}

TEST(Trajectory, StrideAndSeriesBookkeeping) {
  const ModelSpec m = lamperti2(0.5);
  TrajectoryOptions opt;
  opt.norm = Norm::l1();
  opt.stride = 10;
  const TrajectoryRecord r = run_trajectory(m, 100.0 * m.sd.r, 10.0, 1e4, 1000, 3, opt);
  for (std::size_t i = 1; i + 1 < r.series.size(); ++i) EXPECT_EQ(r.series[i].n % 10, 0u);
  EXPECT_EQ(r.series.back().n, r.steps);
  opt.keep_series = false;
  const TrajectoryRecord q = run_trajectory(m, 100.0 * m.sd.r, 10.0, 1e4, 1000, 3, opt);
  EXPECT_TRUE(q.series.empty());
  EXPECT_EQ(q.final_state, r.final_state);
  EXPECT_EQ(q.half_angle, r.half_angle);
}

TEST(Trajectory, DefaultStride) {
  const ModelSpec m = lamperti2(0.5);
  TrajectoryOptions opt;
  opt.keep_series = false;
  EXPECT_EQ(run_trajectory(m, 100.0 * m.sd.r, 1.0, 1e30, 50000, 1, opt).stride, 5u);
  EXPECT_EQ(run_trajectory(m, 100.0 * m.sd.r, 1.0, 1e30, 500, 1, opt).stride, 1u);
}

TEST(Trajectory, InputChecks) {
  const ModelSpec m = lamperti2(0.5);
  Vector neg(2);
  neg << -1.0, 300.0;
  EXPECT_THROW(run_trajectory(m, neg, 10.0, 1e4, 10, 1), InvalidArgument);
  EXPECT_THROW(run_trajectory(m, 5.0 * m.sd.r, 10.0, 1e4, 10, 1), InvalidArgument);
  EXPECT_THROW(run_trajectory(m, Vector::Ones(3), 0.1, 1e4, 10, 1), InvalidArgument);
}

TEST(Trajectory, ScalarAngleIsZero) {
  Matrix one(1, 1);
  one << 1.0;
  const ModelSpec m = make_lamperti_model(perron_decompose(one), 2.0, SigmaProfile::power(0.5));
  Vector x0(1);
  x0 << 50.0;
  const TrajectoryRecord r = run_trajectory(m, x0, 10.0, 1e4, 10000, 4);
  for (const auto& p : r.series) EXPECT_EQ(p.angle, 0.0);
}

TEST(Trajectory, DeterministicOffRayDecayIsGeometric) {
  const SpectralData sd = normalize_to_critical(fibonacci()).second;
  const NormBasis nb = build_contraction_norm(sd);
  const Vector w = project(Vector::Unit(2, 0), sd).check;
  const Vector x0 = 100.0 * sd.r + 20.0 * w / (w.cwiseAbs().array() / sd.r.array()).maxCoeff();
  ASSERT_TRUE(in_orthant(x0));
  TrajectoryOptions opt;
  opt.stride = 1;
  const TrajectoryRecord r = run_trajectory(linear_model(sd), x0, 1.0, 1e6, 30, 1, opt);
  ASSERT_EQ(r.series.size(), 31u);
  const double c0 = r.series.front().check_norm;
  ASSERT_GT(c0, 0.0);
  // M x preserves ell x only up to rounding, which feeds ~eps |x| into check each step
  const double floor = 1e-12 * x0.lpNorm<1>();
  for (const auto& p : r.series) {
    EXPECT_LE(p.check_norm, c0 * std::pow(nb.rho_certified, static_cast<double>(p.n)) * (1.0 + 1e-6) + floor)
        << "n=" << p.n;
  }
  EXPECT_LT(r.final_angle, 1e-9);
}

TEST(Trajectory, TransverseBoundHoldsAlongNoisyPaths) {
  Rng mrng(21);
  for (const Matrix& A : {fibonacci(), half_ones(), random_primitive(4, mrng)}) {
    const SpectralData sd = normalize_to_critical(A).second;
    const ModelSpec m = make_lamperti_model(sd, 2.0, SigmaProfile::power(0.5));
    TrajectoryOptions opt;
    opt.check_transverse_bound = true;
    opt.keep_series = false;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const TrajectoryRecord r = run_trajectory(m, 50.0 * sd.r, 2.0, 1e6, 20000, seed, opt);
      EXPECT_GT(r.bound_checks, 0);
      EXPECT_EQ(r.bound_violations, 0) << "max excess " << r.max_bound_excess;
    }
  }
}

TEST(Ensemble, LampertiMajorities) {
  const Vector x0 = 100.0 * lamperti2(0.0).sd.r;
  const EnsembleResult up = classify_ensemble(lamperti2(4.0), x0, 10.0, 1e4, 1000000, 100, 1);
  EXPECT_GT(up.summary.escape_fraction, 0.9);
  const EnsembleResult down = classify_ensemble(lamperti2(0.2), x0, 10.0, 1e4, 1000000, 100, 1);
  EXPECT_GT(down.summary.return_fraction, 0.8);
  for (const auto* r : {&up, &down}) {
    const auto& s = r->summary;
    EXPECT_EQ(s.escaped + s.returned + s.undecided, 100);
    EXPECT_NEAR(s.escape_fraction + s.return_fraction + s.undecided_fraction, 1.0, 1e-15);
    EXPECT_LE(s.escape_ci.lo, s.escape_fraction);
    EXPECT_GE(s.escape_ci.hi, s.escape_fraction);
  }
}

TEST(Ensemble, RequiresAHundredTrajectories) {
  const ModelSpec m = lamperti2(1.0);
  EXPECT_THROW(classify_ensemble(m, 100.0 * m.sd.r, 10.0, 1e4, 100, 99, 1), InvalidArgument);
}

TEST(Ensemble, IndependentOfWorkerCount) {
  const ModelSpec m = lamperti2(1.5);
  TrajectoryOptions opt;
  opt.keep_series = false;
  const auto a = classify_ensemble(m, 30.0 * m.sd.r, 10.0, 1e3, 20000, 100, 77, opt, 1);
  const auto b = classify_ensemble(m, 30.0 * m.sd.r, 10.0, 1e3, 20000, 100, 77, opt, 4);
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    EXPECT_EQ(a.records[i].seed, 77 + i);
    EXPECT_EQ(a.records[i].outcome, b.records[i].outcome);
    EXPECT_EQ(a.records[i].final_state, b.records[i].final_state);
  }
  EXPECT_EQ(a.summary.escaped, b.summary.escaped);
}

TEST(Ensemble, RayDiagnosticNeedsEscapers) {
  std::vector<TrajectoryRecord> recs(3);
  EXPECT_THROW(ray_diagnostic(recs), NoEscapers);
  recs[0].outcome = Outcome::exceeded_K;
  recs[0].final_angle = 0.1;
  recs[0].half_angle = 0.2;
  recs[1].outcome = Outcome::exceeded_K;
  recs[1].final_angle = 0.3;
  recs[1].half_angle = 0.2;
  const RayDiagnostic d = ray_diagnostic(recs);
  EXPECT_EQ(d.n_escapers, 2);
  EXPECT_DOUBLE_EQ(d.median_final, 0.2);
  EXPECT_DOUBLE_EQ(d.fraction_decreasing, 0.5);
}

TEST(Statistics, WilsonMedianQuantile) {
  const Interval z = wilson_interval(0, 10);
  EXPECT_EQ(z.lo, 0.0);
  EXPECT_GT(z.hi, 0.2);
  const Interval h = wilson_interval(50, 100);
  EXPECT_NEAR(0.5 - h.lo, h.hi - 0.5, 1e-15);
  EXPECT_NEAR(h.hi, 0.5961, 1e-4);
  EXPECT_DOUBLE_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_DOUBLE_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
  EXPECT_DOUBLE_EQ(quantile({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}, 0.9), 9.0);
  EXPECT_DOUBLE_EQ(quantile({5.0}, 0.0), 5.0);
}

TEST(Counterexample, SingleStepFromTheRay) {
  const CounterexampleParams p = CounterexampleParams::defaults();
  Rng rng(5);
  for (int k = 0; k < 50; ++k) {
    const UVStep st = uv_step(p, {1.0, 0.0}, rng);
    EXPECT_TRUE(st.band);
    EXPECT_EQ(st.next.u, 1.0 + p.g_bar(1.0) + st.chi * p.sigma_bar(1.0));
    EXPECT_EQ(st.next.v, st.zeta * p.sigma_bar(1.0));
    // the next state is off the band, so the following step has no drift
    const UVStep st2 = uv_step(p, st.next, rng);
    EXPECT_FALSE(st2.band);
    EXPECT_EQ(st2.next.v, 0.0);
  }
}

TEST(Counterexample, StructureIdentitiesHold) {
  const StructureReport r = verify_counterexample_structure(CounterexampleParams::defaults(), 30000, 7);
  EXPECT_TRUE(r.violations.empty());
  EXPECT_TRUE(r.cross_check_ok);
  EXPECT_LE(r.cross_check_max_dev, 1e-9);
  EXPECT_EQ(r.episodes, static_cast<long>(r.absorbed_at.size()) + 1);
  EXPECT_NO_THROW(r.require_ok());
  StructureReport bad = r;
  bad.violations.push_back({3, "ii", "manufactured"});
  EXPECT_FALSE(bad.ok());
  EXPECT_THROW(bad.require_ok(), StructureViolation);
}

TEST(Counterexample, EmbeddedVarianceMatchesClosedForm) {
  const CounterexampleParams p = CounterexampleParams::defaults();
  const auto pts = embedded_chain_stats(p, {1e2, 1e4, 1e6}, 40000, 3);
  ASSERT_EQ(pts.size(), 3u);
  for (const auto& pt : pts) {
    EXPECT_LT(std::abs(pt.tau2_mc - pt.tau2_closed), 4.0 * pt.tau2_se) << "t=" << pt.t;
    EXPECT_LT(std::abs(pt.mean), 4.0 * pt.mean_se + 1e-9 * pt.t);
    EXPECT_GT(pt.ratio_closed, 1.9);
    EXPECT_LT(pt.ratio_closed, 2.2);
  }
  EXPECT_NEAR(pts.back().ratio_closed, 2.0, 0.02);
  EXPECT_THROW(embedded_chain_stats(p, {-1.0}, 100, 1), InvalidArgument);
}

TEST(Counterexample, DichotomyDemoSmall) {
  DichotomySpec spec;
  spec.n_traj = 100;
  spec.n_max = 100000;
  spec.K = 2e3;
  const DichotomyReport a = counterexample_dichotomy_demo(CounterexampleParams::defaults(1.5), spec);
  EXPECT_EQ(a.theta, 1.5);
  EXPECT_EQ(a.full_chain.n_traj, 100);
  EXPECT_EQ(a.embedded_chain.n_traj, 100);
  spec.workers = 3;
  const DichotomyReport b = counterexample_dichotomy_demo(CounterexampleParams::defaults(1.5), spec);
  EXPECT_EQ(a.full_chain.escaped, b.full_chain.escaped);
  EXPECT_EQ(a.embedded_chain.returned, b.embedded_chain.returned);
  spec.n_traj = 50;
  EXPECT_THROW(counterexample_dichotomy_demo(CounterexampleParams::defaults(), spec), InvalidArgument);
}

TEST(Counterexample, BandConditionOnlyInsideTheBand) {
  SamplerSpec sampler;
  sampler.levels = 10;
  sampler.per_level = 10;
  EXPECT_TRUE(counterexample_band_condition(CounterexampleParams::defaults(), 0.4, 1.0, sampler).holds_on_sample());
  EXPECT_FALSE(counterexample_band_condition(CounterexampleParams::defaults(), 0.4, 2.0, sampler).holds_on_sample());
}
