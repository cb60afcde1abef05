#include "jumpent/phi_entropy.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace jumpent;

namespace {

Vec scalar(double v) {
  Vec x(1);
  x(0) = v;
  return x;
}

const std::vector<PhiSpec>& all_phis() {
  static const std::vector<PhiSpec> phis{PhiSpec::xlogx(), PhiSpec::power(1.3),
                                         PhiSpec::power(2.0)};
  return phis;
}

// 2 int_0^inf tanh(z)^2 z^-2 dz
double tanh_energy_1d() {
  return 2.0 * oracle::radial([](double r) { return std::pow(std::tanh(r) / r, 2); }, 1e-12,
                              kInf, 1e-13, 60.0);
}

}  // namespace

TEST(Psi, Examples) {
  const auto x = PhiSpec::xlogx();
  EXPECT_NEAR(psi(x, 2.0, 1.0), 2.0 * std::log(2.0) - 1.0, 1e-15);
  EXPECT_NEAR(psi(x, 2.0, 1.0), 0.386294361119891, 1e-12);
  EXPECT_EQ(psi(PhiSpec::power(2), 3.5, 1.25), 2.25 * 2.25);
  for (const auto& phi : all_phis()) {
    EXPECT_EQ(psi(phi, 1.7, 1.7), 0.0) << phi.name();
    EXPECT_EQ(phi(0.0), 0.0);
    EXPECT_THROW(psi(phi, 1.0, 0.0), NonPositiveInput);
    EXPECT_THROW(psi(phi, 1.0, -1.0), NonPositiveInput);
  }
  // u = 0 through Phi(0) = 0.
  EXPECT_NEAR(psi(x, 0.0, 2.0), 2.0, 1e-15);
  EXPECT_NEAR(psi(PhiSpec::power(1.3), 0.0, 2.0), 0.3 * std::pow(2.0, 1.3), 1e-14);
  EXPECT_EQ(PhiSpec::power(1.3).name(), "power(1.3)");
  EXPECT_THROW(PhiSpec::power(2.5), InvalidArgument);
  EXPECT_THROW(PhiSpec::power(0.5), InvalidArgument);
}

TEST(Psi, SeriesBranchAgreesWithDirectFormula) {
  for (const auto& phi : all_phis()) {
    for (double t : {-0.0999, -9e-4, -1e-5, 3e-7, 2e-4, 0.0999, 0.1001}) {
      const double ud = 1.0 + t;
      const long double tt = static_cast<long double>(ud) - 1.0L;
      // Long-double Taylor series around u = v = 1.
      long double direct = 0.0L;
      long double term = tt * tt;
      long double coef = phi.kind() == PhiSpec::Kind::xlogx ? 0.5L : phi.p() * (phi.p() - 1.0L) / 2;
      for (int k = 2; k < 40; ++k) {
        direct += coef * term;
        term *= tt;
        coef = phi.kind() == PhiSpec::Kind::xlogx
                   ? -coef * (k - 1.0L) / (k + 1.0L)
                   : coef * (phi.p() - k) / (k + 1.0L);
      }
      EXPECT_NEAR(psi(phi, ud, 1.0), static_cast<double>(direct),
                  1e-12 * static_cast<double>(direct))
          << phi.name() << " t " << t;
    }
  }
}

TEST(Psi, NonNegativeAndJointlyConvex) {
  const auto start = std::chrono::steady_clock::now();
  Stream rng(1, 0);
  for (const auto& phi : all_phis()) {
    for (int i = 0; i < 10000; ++i) {
      const double u1 = std::exp(4.0 * rng.normal());
      const double v1 = std::exp(4.0 * rng.normal());
      const double u2 = std::exp(4.0 * rng.normal());
      const double v2 = std::exp(4.0 * rng.normal());
      const double a = psi(phi, u1, v1);
      const double b = psi(phi, u2, v2);
      const double mid = psi(phi, 0.5 * (u1 + u2), 0.5 * (v1 + v2));
      ASSERT_GE(a, 0.0);
      ASSERT_LE(mid, 0.5 * (a + b) * (1.0 + 1e-12) + 1e-300)
          << phi.name() << " " << u1 << " " << v1 << " " << u2 << " " << v2;
    }
  }
  EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 1.0);
}

TEST(Psi, LogEntropyBelowSymmetrisedForm) {
  const auto x = PhiSpec::xlogx();
  for (double u = 0.01; u < 100.0; u *= 1.37)
    for (double v = 0.01; v < 100.0; v *= 1.41)
      EXPECT_LE(psi(x, u, v), (u - v) * std::log(u / v) + 1e-14);
}

TEST(Phi, ConvexOnGrid) {
  for (const auto& phi : all_phis()) {
    for (double u = 0.001; u < 1000.0; u *= 1.3) {
      const double h = 0.1 * u;
      EXPECT_GE(phi(u + h) + phi(u - h) - 2.0 * phi(u), -1e-12 * std::abs(phi(u)));
      EXPECT_GT(phi.d2(u), 0.0);
    }
  }
  EXPECT_THROW(PhiSpec::xlogx().d1(0.0), NonPositiveInput);
}

TEST(TestFunctionTest, DeclaredBoundsHold) {
  EXPECT_NO_THROW(TestFunction::tanh_shift(2).check_bounds());
  EXPECT_NO_THROW(TestFunction::inverse_quadratic(3).check_bounds());
  EXPECT_NO_THROW(TestFunction::gaussian_bump(2).check_bounds());
  EXPECT_NO_THROW(TestFunction::cosine(1).check_bounds());
  TestFunction liar = TestFunction::tanh_shift(1);
  liar.sup_bound = 2.0;
  EXPECT_THROW(liar.check_bounds(), InvalidArgument);
  EXPECT_THROW(TestFunction::tanh_shift(1, 0.5), InvalidArgument);
}

TEST(TestFunctionTest, FiniteDifferenceDerivatives) {
  for (const auto& f : {TestFunction::inverse_quadratic(2), TestFunction::gaussian_bump(2)}) {
    TestFunction g = f;
    g.gradient = nullptr;
    g.hessian = nullptr;
    Vec x(2);
    x << 0.3, -0.8;
    EXPECT_LT((f.grad(x) - g.grad(x)).norm(), 1e-8) << f.name;
    EXPECT_LT((f.hess(x) - g.hess(x)).norm(), 1e-5) << f.name;
  }
}

TEST(GammaPhi, ConstantIsZero) {
  for (int d : {1, 2, 3}) {
    const RadialLevyMeasure nu(d, 1.2, 1.0, 1.0);
    const auto g = gamma_phi(PhiSpec::xlogx(), TestFunction::constant(d, 2.0), zeros(d), nu,
                             identity(d));
    EXPECT_EQ(g.value, 0.0) << d;
  }
}

TEST(GammaPhi, MatchesQuadratureOracle1d) {
  const RadialLevyMeasure nu(1, 1.0, 1.0, 1.0);
  const auto f = TestFunction::tanh_shift(1, 2.0);
  const auto g = gamma_phi(PhiSpec::power(2), f, scalar(0.0), nu, identity(1));
  const double want = tanh_energy_1d();
  EXPECT_NEAR(g.value, want, 0.01 * want);
  EXPECT_NEAR(g.value, want, 1e-5 * want);
  EXPECT_LT(g.error, 1e-4 * want);
}

TEST(GammaPhi, MatchesQuadratureOracle2d) {
  // int tanh(z1)^2 |z|^-3 dz in polar coordinates.
  const RadialLevyMeasure nu(2, 1.0, 1.0, 1.0);
  const auto g = gamma_phi(PhiSpec::power(2), TestFunction::tanh_shift(2, 2.0), zeros(2), nu,
                           identity(2));
  const double want = oracle::radial(
      [](double r) {
        return oracle::simpson(
                   [r](double th) { return std::pow(std::tanh(r * std::cos(th)), 2); }, 0.0,
                   2.0 * M_PI, 1e-11) /
               (r * r);
      },
      1e-8, kInf, 1e-10, 40.0);
  EXPECT_NEAR(g.value, want, 0.01 * want);
}

TEST(GammaPhi, ImportanceSamplingMatchesOracle3d) {
  // int tanh(z1)^2 |z|^-4 dz = 4 pi int_0^inf (1 - tanh(r)/r) r^-2 dr.
  const RadialLevyMeasure nu(3, 1.0, 1.0, 1.0);
  const auto g = gamma_phi(PhiSpec::power(2), TestFunction::tanh_shift(3, 2.0), zeros(3), nu,
                           identity(3));
  const double want =
      4.0 * M_PI *
      oracle::radial([](double r) { return (r < 1e-4 ? r * r / 3.0 : 1.0 - std::tanh(r) / r) / (r * r); },
                     1e-10, kInf, 1e-12, 60.0);
  EXPECT_NEAR(g.value, want, std::max(0.01 * want, 3.0 * g.error));
}

TEST(GammaPhi, ScalesQuadraticallyForPowerTwo) {
  for (int d : {1, 2}) {
    const RadialLevyMeasure nu(d, 0.8, 1.0, 1.0);
    const auto f = TestFunction::tanh_shift(d);
    TestFunction cf = f;
    cf.f = [f](const Vec& x) { return 3.0 * f(x); };
    cf.gradient = [f](const Vec& x) -> Vec { return 3.0 * f.grad(x); };
    cf.sup_bound *= 3.0;
    Vec x = zeros(d);
    x(0) = 0.4;
    const double a = gamma_phi(PhiSpec::power(2), f, x, nu, identity(d)).value;
    const double b = gamma_phi(PhiSpec::power(2), cf, x, nu, identity(d)).value;
    EXPECT_NEAR(b, 9.0 * a, 1e-9 * b);
  }
}

TEST(GammaPhi, HalvingInnerRadiusStaysWithinErrorEstimate) {
  for (int d : {1, 2}) {
    for (double alpha : {0.5, 1.5}) {
      const RadialLevyMeasure nu(d, alpha, 1.0, 1.0);
      for (const auto& phi : all_phis()) {
        Vec x = zeros(d);
        x(0) = 0.3;
        const auto coarse =
            gamma_phi(phi, TestFunction::tanh_shift(d), x, nu, identity(d), 0.05);
        const auto fine = gamma_phi(phi, TestFunction::tanh_shift(d), x, nu, identity(d), 0.025);
        EXPECT_LT(std::abs(coarse.value - fine.value), coarse.error)
            << d << " " << alpha << " " << phi.name();
      }
    }
  }
}

TEST(GammaPhi, Errors) {
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  Vec a(1);
  a(0) = 1.0;
  EXPECT_THROW(gamma_phi(PhiSpec::power(2), TestFunction::linear(a), scalar(0.0), nu, identity(1)),
               DivergentIntegral);
  EXPECT_THROW(gamma_phi(PhiSpec::xlogx(), TestFunction::tanh_shift(1), scalar(0.0), nu,
                         identity(1), 0.0),
               InvalidArgument);
  EXPECT_THROW(gamma_phi(PhiSpec::xlogx(), TestFunction::inverse_quadratic(1), scalar(1e200), nu,
                         identity(1)),
               NonPositiveInput);
}

TEST(GammaPhi, TruncatedProfilesAreSmaller) {
  const auto f = TestFunction::tanh_shift(1);
  const auto phi = PhiSpec::xlogx();
  const double full =
      gamma_phi(phi, f, scalar(0.2), RadialLevyMeasure(1, 1.2, 1.0, 1.0), identity(1)).value;
  const double small = gamma_phi(phi, f, scalar(0.2),
                                 RadialLevyMeasure(1, 1.2, 1.0, 1.0, RadialProfile::small_jumps()),
                                 identity(1))
                           .value;
  const double large = gamma_phi(phi, f, scalar(0.2),
                                 RadialLevyMeasure(1, 1.2, 1.0, 1.0, RadialProfile::large_jumps()),
                                 identity(1))
                           .value;
  EXPECT_NEAR(small + large, full, 1e-6 * full);
  EXPECT_GT(small, 0.0);
  EXPECT_GT(large, 0.0);
}

TEST(GammaTableTest, InterpolatesDirectEvaluation) {
  const RadialLevyMeasure nu(1, 0.8, 1.0, 1.0);
  const auto f = TestFunction::tanh_shift(1);
  const GammaTable table(PhiSpec::xlogx(), f, nu, identity(1), -300.0, 5000.0);
  EXPECT_LT(table.error(), 1e-4);
  Stream rng(3, 0);
  for (int i = 0; i < 50; ++i) {
    const double x = 20.0 * std::sinh(2.0 * rng.normal());
    if (x < -300.0 || x > 5000.0) continue;
    const double direct = gamma_phi(PhiSpec::xlogx(), f, scalar(x), nu, identity(1)).value;
    EXPECT_NEAR(table(x), direct, table.error() + 1e-9) << x;
  }
}

TEST(Generator, ConstantAndLinear) {
  for (int d : {1, 2, 3}) {
    const RadialLevyMeasure nu(d, 1.5, 1.0, 1.0);
    const auto c = ou_field(d);
    Vec x = zeros(d);
    for (int k = 0; k < d; ++k) x(k) = 0.5 - k;
    EXPECT_EQ(generator_apply(TestFunction::constant(d, 1.0), x, c, nu).value, 0.0);
    Vec a = zeros(d);
    for (int k = 0; k < d; ++k) a(k) = 1.0 + k;
    const auto lf = generator_apply(TestFunction::linear(a), x, c, nu);
    EXPECT_NEAR(lf.value, -a.dot(x), 1e-12) << d;
  }
}

TEST(Generator, MatchesQuadratureOracle) {
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  const auto f = TestFunction::inverse_quadratic(1);
  const double x = 1.0;
  auto fx = [](double y) { return 1.0 / (1.0 + y * y); };
  // Below a the second difference is f''(1) z^2 = z^2 / 2 up to O(z^4), and
  // int_0^a z^2 z^-2.5 dz = 2 sqrt(a).
  const double a = 1e-4;
  auto g = [&](double z) { return (fx(x + z) + fx(x - z) - 2.0 * fx(x)) * std::pow(z, -2.5); };
  double jump = 0.5 * 2.0 * std::sqrt(a);
  // Pieces keep adaptive Simpson from settling on a coarse first guess.
  const std::vector<double> cuts{a, 0.01, 0.5, 1.0, 2.0, 10.0, kInf};
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    jump += oracle::radial(g, cuts[i], cuts[i + 1], 1e-10, 80.0);
  const double want = 0.5 + jump;  // <f'(1), -1> = 1/2
  const auto got = generator_apply(f, scalar(x), ou_field(1), nu);
  EXPECT_NEAR(got.value, want, 0.01 * std::abs(want));
  EXPECT_NEAR(got.value, want, 1e-5 * std::abs(want));
}

TEST(Generator, HalvingInnerRadiusStaysWithinErrorEstimate) {
  for (int d : {1, 2}) {
    const RadialLevyMeasure nu(d, 1.2, 1.0, 1.0);
    Vec x = zeros(d);
    x(0) = 0.7;
    for (const auto& f : {TestFunction::inverse_quadratic(d), TestFunction::cosine(d)}) {
      const auto coarse = generator_apply(f, x, ou_field(d), nu, 0.05);
      const auto fine = generator_apply(f, x, ou_field(d), nu, 0.025);
      EXPECT_LT(std::abs(coarse.value - fine.value), coarse.error) << d << " " << f.name;
    }
  }
}

TEST(Generator, StationaryUnderOuInvariantLaw) {
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto inv = invariant_ensemble(ou_field(1), plan, 10.0, 20000, 7, 0.01);
  for (const auto& f : {TestFunction::inverse_quadratic(1), TestFunction::tanh_shift(1)}) {
    MeanAccumulator acc;
    for (const Vec& x : inv.samples) acc.add(generator_apply(f, x, ou_field(1), nu).value);
    EXPECT_LT(std::abs(acc.mean()), 3.0 * acc.stderr_of_mean()) << f.name;
  }
}

TEST(Entropy, ConstantAndJensen) {
  std::vector<Vec> states(100, scalar(1.0));
  const auto c = semigroup_entropy(PhiSpec::xlogx(), TestFunction::constant(1, 2.0), states);
  EXPECT_EQ(c.value, 0.0);
  EXPECT_EQ(c.stderr_, 0.0);
  Stream rng(9, 0);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<Vec> xs(200);
    for (auto& x : xs) x = scalar(3.0 * rng.normal());
    for (const auto& phi : all_phis()) {
      const auto e = semigroup_entropy(phi, TestFunction::tanh_shift(1), xs);
      EXPECT_GE(e.value, -3.0 * e.stderr_);
      EXPECT_GE(e.value, -1e-15);
    }
  }
  EXPECT_EQ(semigroup_entropy(PhiSpec::xlogx(), TestFunction::tanh_shift(1),
                              std::vector<Vec>{})
                .n,
            0u);
}

TEST(Entropy, PowerTwoIsVarianceAndJackknifeUnbiases) {
  Stream rng(10, 0);
  std::vector<double> v(57);
  for (double& x : v) x = 1.0 + rng.uniform();
  MeanAccumulator acc;
  for (double x : v) acc.add(x);
  const double n = static_cast<double>(v.size());
  const auto plug = entropy_of_values(PhiSpec::power(2), v);
  EXPECT_NEAR(plug.value, acc.variance() * (n - 1) / n, 1e-13);
  const auto jk = entropy_of_values(PhiSpec::power(2), v, true);
  EXPECT_NEAR(jk.value, acc.variance(), 1e-12);
  EXPECT_TRUE(jk.jackknife);
}

TEST(Entropy, ReproducibleAcrossSeeds) {
  const auto plan = NoiseIncrementPlan(RadialLevyMeasure(1, 1.5, 1.0, 1.0), kDefaultCutoff,
                                       SmallJumpMode::exact_stable);
  const auto f = TestFunction::tanh_shift(1, 1.5);
  const auto a = simulate(ou_field(1), plan, scalar(0.0), 1.0, 0.01, 100000, 101);
  const auto b = simulate(ou_field(1), plan, scalar(0.0), 1.0, 0.01, 100000, 202);
  const auto ea = semigroup_entropy(PhiSpec::xlogx(), f, a);
  const auto eb = semigroup_entropy(PhiSpec::xlogx(), f, b);
  EXPECT_GT(ea.value, 0.0);
  EXPECT_LT(std::abs(ea.value - eb.value), 4.0 * std::hypot(ea.stderr_, eb.stderr_));
}

TEST(BoundConstant, Examples) {
  EXPECT_NEAR(bound_constant(-1, -1, 1, 0.5, 1, 1, kInf), 2.0, 1e-15);
  // lambda2 (d + alpha) = lambda1 d
  EXPECT_NEAR(bound_constant(-1.5, -1.0, 1, 0.5, 1, 2, 3.0), 2.0 * 3.0, 1e-15);
  EXPECT_NEAR(bound_constant(-1.5, -1.0 + 1e-13, 1, 0.5, 1, 2, 3.0), 6.0, 1e-9);
  EXPECT_NEAR(bound_constant(-1, -1, 1, 0.5, 1, 1, 1e-12), 1e-12, 1e-20);
  EXPECT_EQ(bound_constant(-1, -1, 1, 0.5, 1, 1, 0.0), 0.0);
  EXPECT_THROW(bound_constant(1, 1, 1, 0.5, 1, 1, kInf), NoFiniteLimit);
  // Finite T increases to the limit.
  double prev = 0.0;
  for (double T : {0.5, 1.0, 2.0, 10.0, 100.0}) {
    const double c = bound_constant(-1, -1, 2, 1.5, 1, 1.3, T);
    EXPECT_GT(c, prev);
    prev = c;
  }
  EXPECT_NEAR(prev, bound_constant(-1, -1, 2, 1.5, 1, 1.3, kInf), 1e-12);
}

TEST(DecayRate, Examples) {
  EXPECT_NEAR(decay_rate(-1, -1, 1, 0.5, 1, 1), 0.5, 1e-15);
  EXPECT_NEAR(decay_rate(-1, -1, 1, 1.5, 1, 1), 1.5, 1e-15);
  EXPECT_THROW(decay_rate(1, 1, 1, 0.5, 1, 1), NotDissipativeEnough);
  Stream rng(2, 0);
  for (int i = 0; i < 200; ++i) {
    const double l2 = -0.1 - 2.0 * rng.uniform();
    const double l1 = l2 - rng.uniform();
    const int d = 1 + static_cast<int>(4 * rng.uniform());
    const double alpha = 0.1 + 1.8 * rng.uniform();
    const double k1 = 0.1 + rng.uniform();
    const double k2 = k1 * (1.0 + rng.uniform());
    if (!(l2 * (d + alpha) < l1 * d)) continue;
    const double rate = decay_rate(l1, l2, d, alpha, k1, k2);
    EXPECT_NEAR(rate * bound_constant(l1, l2, d, alpha, k1, k2, kInf), 1.0, 1e-12);
    EXPECT_NEAR(decay_rate(l1, l2, d, alpha, k1, 2.0 * k2), 0.5 * rate, 1e-12 * rate);
  }
}

TEST(BoundRegimeTest, Classification) {
  EXPECT_EQ(bound_regime(RadialLevyMeasure(1, 1, 1, 1), -1, -1), BoundRegime::stable);
  EXPECT_EQ(bound_regime(RadialLevyMeasure(1, 1, 1, 1, RadialProfile::small_jumps()), -1, -1),
            BoundRegime::decreasing_profile);
  EXPECT_EQ(bound_regime(RadialLevyMeasure(1, 1, 1, 1, RadialProfile::large_jumps()), 0.5, 1),
            BoundRegime::increasing_profile);
  EXPECT_EQ(bound_regime(RadialLevyMeasure(1, 1, 1, 1, RadialProfile::large_jumps()), -1, -1),
            BoundRegime::not_covered);
}

TEST(BoundCheckTest, OuFiniteTimeBoundHolds) {
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto c = ou_field(1);
  const auto ens = simulate(c, plan, scalar(2.0), 1.0, 0.01, 20000, 5);
  const auto f = TestFunction::tanh_shift(1);
  for (const auto& phi : {PhiSpec::xlogx(), PhiSpec::power(2)}) {
    double err = 0.0;
    const auto gamma = gamma_at_states(phi, f, ens.terminal, nu, identity(1), &err);
    const auto fx = evaluate(f, ens.terminal);
    const double C = bound_constant(c.lambda1, c.lambda2, 1, 1.5, 1, 1, 1.0);
    const auto check = check_entropy_bound(phi, fx, gamma, C, err);
    EXPECT_TRUE(check.holds) << phi.name();
    EXPECT_GT(check.margin, 0.0);
    EXPECT_GT(check.entropy, 0.0);
  }
}

TEST(DecayCheckpoints, LogSpaced) {
  const auto t = decay_checkpoints(0.5);
  ASSERT_EQ(t.size(), 8u);
  EXPECT_NEAR(t.front(), 0.2, 1e-12);
  EXPECT_NEAR(t.back(), 8.0, 1e-12);
  for (std::size_t k = 1; k + 1 < t.size(); ++k)
    EXPECT_NEAR(t[k] * t[k], t[k - 1] * t[k + 1], 1e-9 * t[k] * t[k]);
  EXPECT_THROW(decay_checkpoints(0.0), InvalidArgument);
}

TEST(SemigroupValuesTest, MatchesAffineOuOracle) {
  // Euler for b(x) = -x is affine: X_N = a^N x + Y with Y stable of time
  // h sum_m a^(alpha m). The oracle samples Y directly with its own streams.
  const double alpha = 1.5;
  const RadialLevyMeasure nu(1, alpha, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto c = ou_field(1);
  const auto f = TestFunction::tanh_shift(1);
  const std::vector<Vec> xs{scalar(-3.0), scalar(0.0), scalar(0.7), scalar(5.0)};
  const std::vector<double> times{0.0, 0.5, 1.0};
  const double dt = 0.01;
  const auto sv = semigroup_values(f, c, plan, xs, times, dt, 4000, 11);
  for (std::size_t k = 0; k < times.size(); ++k) {
    const auto v = sv.values(k);
    const std::size_t n = static_cast<std::size_t>(std::llround(times[k] / dt));
    const double a = 1.0 - dt;
    double t_eff = 0.0;
    for (std::size_t m = 0; m < n; ++m) t_eff += dt * std::pow(a, alpha * m);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      MeanAccumulator acc;
      for (std::size_t j = 0; j < 200000; ++j) {
        Stream rng(99, j);
        const Vec y = stable_increment(alpha, t_eff, 1, plan.stable_scale(), rng);
        acc.add(f(scalar(std::pow(a, static_cast<double>(n)) * xs[i](0) + y(0))));
      }
      // inner MC error of 4000 paths with |f| <= 2.5
      EXPECT_NEAR(v[i], acc.mean(), 0.03) << "t=" << times[k] << " x=" << xs[i](0);
      if (k == 0) {
        EXPECT_NEAR(v[i], f(xs[i]), 1e-12);
      }
    }
  }
}

TEST(SemigroupValuesTest, ThreadAndBlockInvariant) {
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto c = ou_field(1);
  const auto f = TestFunction::tanh_shift(1);
  std::vector<Vec> xs;
  for (int i = 0; i < 600; ++i) xs.push_back(scalar(-3.0 + 0.01 * i));
  const std::vector<double> times{0.3};
  const WorkerPool pool(3);
  const auto a = semigroup_values(f, c, plan, xs, times, 0.01, 50, 4);
  const auto b = semigroup_values(f, c, plan, xs, times, 0.01, 50, 4, &pool);
  EXPECT_EQ(a.values(0), b.values(0));
  // a state's value does not depend on which block it sits in
  const std::vector<Vec> one{xs[400]};
  const auto s = semigroup_values(f, c, plan, one, times, 0.01, 50, 4);
  EXPECT_DOUBLE_EQ(s.values(0)[0], a.values(0)[400]);
}

TEST(SemigroupValuesTest, InnerJackknifeRemovesBias) {
  // Power 2 entropy is a variance; with few inner paths the plug-in is biased
  // up by E Var_inner / n_inner, which the grouped jackknife removes.
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto c = ou_field(1);
  const auto f = TestFunction::tanh_shift(1);
  const auto mu = invariant_ensemble(c, plan, 8.0, 2000, 2, 0.01, nullptr, false);
  const std::vector<double> times{1.0};
  const auto coarse = semigroup_values(f, c, plan, mu.samples, times, 0.01, 40, 6, nullptr, 20);
  const auto fine = semigroup_values(f, c, plan, mu.samples, times, 0.01, 600, 7, nullptr, 20);
  const auto phi = PhiSpec::power(2.0);
  const auto ref = fine.entropy(phi, 0);
  const auto jk = coarse.entropy(phi, 0);
  const auto plug = entropy_of_values(phi, coarse.values(0));
  EXPECT_NEAR(jk.value, ref.value, 3.0 * std::hypot(jk.stderr_, ref.stderr_));
  EXPECT_GT(plug.value - ref.value, 3.0 * ref.stderr_);
}

TEST(DecayCheckTest, OuEntropyDecaysBelowEnvelope) {
  const RadialLevyMeasure nu(1, 1.5, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto c = ou_field(1);
  const auto f = TestFunction::tanh_shift(1);
  const double rate = decay_rate(c.lambda1, c.lambda2, 1, 1.5, 1, 1);
  const auto mu = invariant_ensemble(c, plan, 8.0, 2000, 3, 0.01, nullptr, false);
  const auto times = decay_checkpoints(rate);
  const auto sv = semigroup_values(f, c, plan, mu.samples, times, 0.01, 200, 8);
  const auto fx = evaluate(f, mu.samples);
  for (const auto& phi : {PhiSpec::xlogx(), PhiSpec::power(2)}) {
    const auto check = check_decay(phi, fx, sv, rate);
    EXPECT_TRUE(check.pass) << phi.name();
    ASSERT_EQ(check.points.size(), 8u);
    EXPECT_GT(check.ent0.value, 0.0);
    EXPECT_LT(check.points.back().entropy, 0.1 * check.ent0.value);
  }
}

TEST(Phi, FromNameInvertsName) {
  for (const auto& phi : all_phis()) EXPECT_EQ(PhiSpec::from_name(phi.name()).name(), phi.name());
  EXPECT_EQ(PhiSpec::from_name("power(2)").p(), 2.0);
  for (const char* bad : {"power()", "power(3)", "power(1.5x)", "log", "power(1.5"})
    EXPECT_THROW(PhiSpec::from_name(bad), InvalidArgument) << bad;
}
