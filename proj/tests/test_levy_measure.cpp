#include "jumpent/levy_measure.hpp"
#include "jumpent/stats.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

using namespace jumpent;

namespace {

RadialLevyMeasure stable(int d, double alpha, double kappa = 1.0) {
  return RadialLevyMeasure(d, alpha, kappa, kappa);
}

// Radial-law integral of weight g over (a, b] for kappa * rho(r) r^(-d-alpha).
double oracle_moment(int d, double alpha, double kappa, const std::function<double(double)>& rho,
                     const std::function<double(double)>& g, double a, double b) {
  const double area = oracle::sphere_area(d);
  return area * kappa *
         oracle::radial([&](double r) { return g(r) * rho(r) * std::pow(r, -1.0 - alpha); }, a,
                        b, 1e-13);
}

}  // namespace

TEST(MomentIntegral, UnitStableExamples) {
  const auto nu = stable(1, 1.0);
  EXPECT_NEAR(moment_integral(nu, Moment::small_sq(1.0)), 2.0, 1e-14);
  EXPECT_NEAR(moment_integral(nu, Moment::tail_mass(1.0)), 2.0, 1e-14);
  EXPECT_LT(moment_integral(nu, Moment::small_sq(1e-12)), 1e-11);
}

TEST(MomentIntegral, MidAbsLogBranchAtAlphaOne) {
  const auto nu = stable(1, 1.0);
  EXPECT_NEAR(moment_integral(nu, Moment::mid_abs(0.01)), 2.0 * std::log(100.0), 1e-12);
  EXPECT_NEAR(moment_integral(nu, Moment::mid_abs(0.01), IntegrationMethod::quadrature),
              2.0 * std::log(100.0), 1e-9);
  EXPECT_EQ(moment_integral(nu, Moment::mid_abs(2.0)), 0.0);
}

TEST(MomentIntegral, ErrorsOnBadRegionOrDivergence) {
  const auto nu = stable(2, 1.5);
  EXPECT_THROW(moment_integral(nu, Moment::small_sq(0.0)), InvalidRegion);
  EXPECT_THROW(moment_integral(nu, Moment::tail_mass(-1.0)), InvalidRegion);
  EXPECT_THROW(moment_integral(nu, Moment::tail_power(1.0, 1.5)), DivergentIntegral);
  EXPECT_THROW(moment_integral(nu, Moment::tail_power(1.0, 1.7), IntegrationMethod::quadrature),
               DivergentIntegral);
  // A bounded support makes every power finite.
  const RadialLevyMeasure small(2, 1.5, 1.0, 1.0, RadialProfile::small_jumps());
  EXPECT_EQ(moment_integral(small, Moment::tail_power(1.0, 3.0)), 0.0);
}

class ClosedVsQuadrature : public ::testing::TestWithParam<std::tuple<int, double>> {};

TEST_P(ClosedVsQuadrature, AllKindsAgree) {
  const auto [d, alpha] = GetParam();
  const auto nu = stable(d, alpha, 0.7);
  const std::vector<Moment> kinds{Moment::small_sq(0.3),      Moment::small_sq(2.0),
                                  Moment::mid_abs(0.05),      Moment::tail_mass(0.4),
                                  Moment::tail_mass(3.0),     Moment::tail_log(0.5, 2.0),
                                  Moment::tail_log(2.0, 0.3), Moment::tail_power(1.0, 0.5 * alpha),
                                  Moment::tail_power(0.2, -0.5)};
  for (const Moment& m : kinds) {
    const double closed = moment_integral(nu, m, IntegrationMethod::closed_form);
    const double quad = moment_integral(nu, m, IntegrationMethod::quadrature);
    EXPECT_NEAR(quad, closed, 1e-8 * std::abs(closed)) << "kind " << static_cast<int>(m.kind);
  }
}

TEST_P(ClosedVsQuadrature, ClosedFormsMatchIndependentOracle) {
  const auto [d, alpha] = GetParam();
  const double kappa = 1.3;
  const auto nu = stable(d, alpha, kappa);
  auto one = [](double) { return 1.0; };
  auto check = [&](const Moment& m, const std::function<double(double)>& g, double a, double b) {
    const double want = oracle_moment(d, alpha, kappa, one, g, a, b);
    EXPECT_NEAR(moment_integral(nu, m), want, 1e-9 * want);
  };
  check(Moment::small_sq(0.5), [](double r) { return r * r; }, 1e-80, 0.5);
  check(Moment::mid_abs(0.1), [](double r) { return r; }, 0.1, 1.0);
  check(Moment::tail_mass(0.7), one, 0.7, kInf);
  check(Moment::tail_log(1.0, 1.0), [](double r) { return std::log1p(r); }, 1.0, kInf);
  check(Moment::tail_log(0.2, 5.0), [](double r) { return std::log1p(5.0 * r); }, 0.2, kInf);
  check(Moment::tail_power(1.0, 0.4 * alpha), [&](double r) { return std::pow(r, 0.4 * alpha); },
        1.0, kInf);
}

INSTANTIATE_TEST_SUITE_P(Grid, ClosedVsQuadrature,
                         ::testing::Combine(::testing::Values(1, 2, 3),
                                            ::testing::Values(0.5, 1.0, 1.5)));

TEST(MomentIntegral, MonotoneInRegion) {
  const auto nu = stable(2, 0.8);
  double prev_sq = 0.0;
  double prev_mass = kInf;
  for (double eps = 0.01; eps < 50.0; eps *= 1.7) {
    const double sq = moment_integral(nu, Moment::small_sq(eps));
    const double mass = moment_integral(nu, Moment::tail_mass(eps));
    EXPECT_GE(sq, prev_sq);
    EXPECT_LE(mass, prev_mass);
    prev_sq = sq;
    prev_mass = mass;
  }
}

TEST(MomentIntegral, TruncatedProfiles) {
  const RadialLevyMeasure small(1, 1.5, 1.0, 1.0, RadialProfile::small_jumps());
  const RadialLevyMeasure large(1, 1.5, 1.0, 1.0, RadialProfile::large_jumps());
  const auto full = stable(1, 1.5);
  EXPECT_EQ(moment_integral(small, Moment::tail_mass(1.0)), 0.0);
  EXPECT_EQ(moment_integral(large, Moment::small_sq(1.0)), 0.0);
  EXPECT_NEAR(moment_integral(small, Moment::tail_mass(0.5)) +
                  moment_integral(full, Moment::tail_mass(1.0)),
              moment_integral(full, Moment::tail_mass(0.5)), 1e-12);
  EXPECT_NEAR(moment_integral(large, Moment::small_sq(3.0)),
              moment_integral(full, Moment::small_sq(3.0)) -
                  moment_integral(full, Moment::small_sq(1.0)),
              1e-12);
  // Finite support in the log tail: difference of two closed forms.
  const double want = oracle_moment(1, 1.5, 1.0, [](double) { return 1.0; },
                                    [](double r) { return std::log1p(2.0 * r); }, 0.3, 1.0);
  EXPECT_NEAR(moment_integral(small, Moment::tail_log(0.3, 2.0)), want, 1e-10);
  for (const auto& m : {Moment::small_sq(0.7), Moment::mid_abs(0.1), Moment::tail_mass(0.2),
                        Moment::tail_log(0.5, 1.0)}) {
    for (const auto* nu : {&small, &large}) {
      EXPECT_NEAR(moment_integral(*nu, m, IntegrationMethod::quadrature),
                  moment_integral(*nu, m, IntegrationMethod::closed_form), 1e-10);
    }
  }
}

TEST(MomentIntegral, ModulatedMeasureUsesQuadrature) {
  const RadialLevyMeasure base(2, 1.2, 0.5, 2.0);
  const auto nu = base.with_modulation([](double r) { return 1.0 / (1.0 + r); });
  EXPECT_THROW(moment_integral(nu, Moment::tail_mass(1.0), IntegrationMethod::closed_form),
               InvalidArgument);
  auto k = [](double r) { return 0.5 + 1.5 / (1.0 + r); };
  const double area = oracle::sphere_area(2);
  const double want =
      area * oracle::radial([&](double r) { return k(r) * std::pow(r, -2.2); }, 0.5, kInf, 1e-13);
  EXPECT_NEAR(moment_integral(nu, Moment::tail_mass(0.5)), want, 1e-9 * want);
  const double lo = moment_integral(RadialLevyMeasure(2, 1.2, 0.5, 0.5), Moment::tail_mass(0.5));
  const double hi = moment_integral(RadialLevyMeasure(2, 1.2, 2.0, 2.0), Moment::tail_mass(0.5));
  EXPECT_GT(want, lo);
  EXPECT_LT(want, hi);
}

TEST(TabulatedProfile, ConstantTableMatchesStable) {
  std::vector<double> r;
  std::vector<double> v;
  for (double x = 0.01; x < 200.0; x *= 2.0) {
    r.push_back(x);
    v.push_back(1.0);
  }
  const RadialLevyMeasure tab(1, 1.3, 1.0, 1.0,
                              RadialProfile::tabulated(TabulatedProfile(r, v, Monotonicity::decreasing)));
  const auto ref = stable(1, 1.3);
  for (const auto& m : {Moment::small_sq(0.5), Moment::mid_abs(0.05), Moment::tail_mass(0.3),
                        Moment::tail_log(1.0, 1.0), Moment::tail_power(1.0, 0.6)}) {
    const double want = moment_integral(ref, m);
    EXPECT_NEAR(moment_integral(tab, m), want, 1e-9 * want);
  }
}

TEST(TabulatedProfile, InterpolationAndTailAgainstOracle) {
  // rho(r) = 1 / (1 + r): decreasing, eventually like r^-1.
  std::vector<double> r;
  std::vector<double> v;
  for (double x = 1e-3; x < 2e3; x *= 1.25) {
    r.push_back(x);
    v.push_back(1.0 / (1.0 + x));
  }
  const TabulatedProfile table(r, v, Monotonicity::decreasing);
  const RadialLevyMeasure nu(1, 0.7, 1.0, 1.0, RadialProfile::tabulated(table));
  auto rho = [&](double x) { return table(x); };
  for (double x : {0.0005, 0.3, 17.0, 5e3, 1e6}) {
    EXPECT_NEAR(table(x), 1.0 / (1.0 + x), 0.01 / (1.0 + x)) << x;
  }
  const double want = oracle_moment(1, 0.7, 1.0, rho, [](double) { return 1.0; }, 0.5, kInf);
  EXPECT_NEAR(moment_integral(nu, Moment::tail_mass(0.5)), want, 1e-8 * want);
  // Tail exponent -1 makes |z|^1.5 integrable even though 1.5 > alpha.
  EXPECT_NO_THROW(moment_integral(nu, Moment::tail_power(1.0, 1.5)));
  EXPECT_THROW(moment_integral(nu, Moment::tail_power(1.0, 1.8)), DivergentIntegral);
}

namespace {
// rho = 1 on (0, e], r^alpha e^-alpha / (ln r)^2 beyond: the radial law has a
// finite tail mass but infinite logarithmic moment.
TabulatedProfile log_infinite_table(double alpha, double r_max) {
  std::vector<double> r;
  std::vector<double> v;
  for (double x = 0.01; x < r_max; x *= 1.5) {
    r.push_back(x);
    v.push_back(x <= M_E ? 1.0 : std::pow(x / M_E, alpha) / std::pow(std::log(x), 2.0));
  }
  return TabulatedProfile(r, v);
}
}  // namespace

TEST(TabulatedProfile, LogInfiniteTailIsDetected) {
  const double alpha = 1.5;
  const auto table = log_infinite_table(alpha, 1e6);
  EXPECT_DOUBLE_EQ(table.tail_log_power(), 2.0);
  const RadialLevyMeasure nu(1, alpha, 1.0, 1.0, RadialProfile::tabulated(table));
  EXPECT_THROW(moment_integral(nu, Moment::tail_log(1.0, 1.0)), DivergentIntegral);
  const double mass = moment_integral(nu, Moment::tail_mass(1.0));
  const double want = oracle_moment(1, alpha, 1.0, [&](double x) { return table(x); },
                                    [](double) { return 1.0; }, 1.0, 1e6) +
                      2.0 * std::exp(-alpha) / std::log(1e6);
  EXPECT_NEAR(mass, want, 1e-7 * want);
}

TEST(TabulatedProfile, RejectsBadTables) {
  EXPECT_THROW(TabulatedProfile({1.0}, {1.0}), InvalidArgument);
  EXPECT_THROW(TabulatedProfile({1.0, 0.5}, {1.0, 1.0}), InvalidArgument);
  EXPECT_THROW(TabulatedProfile({1.0, 2.0}, {1.0, -1.0}), InvalidArgument);
  EXPECT_THROW(TabulatedProfile({1.0, 2.0, 3.0}, {1.0, 2.0, 1.0}, Monotonicity::decreasing),
               InvalidArgument);
  EXPECT_THROW(TabulatedProfile({1.0, 2.0, 3.0}, {1.0, 0.5, 1.0}, Monotonicity::increasing),
               InvalidArgument);
}

TEST(TabulatedProfile, LoadsTwoColumnText) {
  const std::string path = ::testing::TempDir() + "profile.txt";
  {
    std::ofstream out(path);
    out << "# radius value\n0.1 1.0\n1.0, 0.5\n\n10 0.25  # trailing\n";
  }
  const auto t = TabulatedProfile::load(path, Monotonicity::decreasing);
  ASSERT_EQ(t.radii().size(), 3u);
  EXPECT_DOUBLE_EQ(t(1.0), 0.5);
  EXPECT_DOUBLE_EQ(t(0.01), 1.0);
  EXPECT_NEAR(t(std::sqrt(10.0)), std::sqrt(0.5 * 0.25), 1e-12);
  std::remove(path.c_str());
  EXPECT_THROW(TabulatedProfile::load("/nonexistent/profile"), InvalidArgument);
}

TEST(SampleJump, EmptyTailForSmallJumpProfile) {
  const RadialLevyMeasure nu(1, 1.0, 1.0, 1.0, RadialProfile::small_jumps());
  Stream rng(1, 0);
  EXPECT_THROW(sample_jump_above(nu, 1.0, rng), EmptyTail);
  EXPECT_THROW(sample_jump_above(nu, 2.0, rng), EmptyTail);
}

TEST(SampleJump, TailProbabilitiesAtOneMillion) {
  const auto nu = stable(1, 1.0);
  const TailSampler sampler(nu, 1.0);
  EXPECT_NEAR(sampler.envelope_mass(), 2.0, 1e-14);
  Stream rng(7, 0);
  const int n = 1000000;
  const std::vector<double> xs{1.5, 2.0, 5.0, 20.0, 100.0};
  std::vector<int> above(xs.size(), 0);
  for (int i = 0; i < n; ++i) {
    const double r = std::abs(sampler.sample(rng)(0));
    for (std::size_t k = 0; k < xs.size(); ++k) above[k] += r > xs[k];
  }
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const double p = 1.0 / xs[k];
    const double se = std::sqrt(p * (1 - p) / n);
    EXPECT_NEAR(above[k] / double(n), p, 3.0 * se) << xs[k];
  }
}

TEST(SampleJump, RadiiPassKsAgainstAnalyticTail) {
  for (int d : {1, 3}) {
    for (double alpha : {0.5, 1.5}) {
      const auto nu = stable(d, alpha);
      const double delta = 0.2;
      const TailSampler sampler(nu, delta);
      Stream rng(11, static_cast<std::uint64_t>(d * 10 + alpha * 2));
      std::vector<double> radii(100000);
      for (double& r : radii) r = sampler.sample(rng).norm();
      const auto ks = ks_one_sample(radii, [&](double r) { return 1.0 - std::pow(r / delta, -alpha); });
      EXPECT_GT(ks.p_value, 0.001) << d << " " << alpha;
    }
  }
}

TEST(SampleJump, IsotropicInTwoDimensions) {
  const auto nu = stable(2, 1.1);
  const TailSampler sampler(nu, 0.5);
  Stream rng(3, 0);
  const int n = 100000;
  MeanAccumulator cx;
  MeanAccumulator cy;
  for (int i = 0; i < n; ++i) {
    const Vec z = sampler.sample(rng);
    const Vec u = z / z.norm();
    cx.add(u(0));
    cy.add(u(1));
  }
  EXPECT_LT(std::abs(cx.mean()), 3.0 * cx.stderr_of_mean());
  EXPECT_LT(std::abs(cy.mean()), 3.0 * cy.stderr_of_mean());
}

TEST(SampleJump, RejectionSamplersMatchNumericalCdf) {
  const double alpha = 1.2;
  const double delta = 0.3;
  std::vector<double> r;
  std::vector<double> v;
  for (double x = 0.05; x < 100.0; x *= 1.3) {
    r.push_back(x);
    v.push_back(std::exp(-0.3 * x) + 0.2);
  }
  const TabulatedProfile table(r, v, Monotonicity::decreasing);
  const RadialLevyMeasure tab(1, alpha, 1.0, 1.0, RadialProfile::tabulated(table));
  const auto mod =
      RadialLevyMeasure(2, alpha, 0.5, 1.5).with_modulation([](double x) { return std::exp(-x); });

  for (const auto* nu : {&tab, &mod}) {
    const auto density = [&](double x) { return nu->radial_density(x); };
    const double total = oracle::radial(density, delta, kInf, 1e-12);
    const TailSampler sampler(*nu, delta);
    Stream rng(5, nu->dim());
    std::vector<double> radii(100000);
    for (double& x : radii) x = sampler.sample(rng).norm();
    const auto cdf = [&](double x) {
      return x <= delta ? 0.0 : oracle::radial(density, delta, x, 1e-9) / total;
    };
    // Evaluate the CDF on a sorted subsample to keep the oracle cheap.
    std::vector<double> sub(radii.begin(), radii.begin() + 20000);
    const auto ks = ks_one_sample(sub, cdf);
    EXPECT_GT(ks.p_value, 0.001) << nu->dim();
  }
}

TEST(SampleJump, LogInfiniteTailSamplerTerminates) {
  const double alpha = 1.0;
  const auto table = log_infinite_table(alpha, 1e4);
  const RadialLevyMeasure nu(1, alpha, 1.0, 1.0, RadialProfile::tabulated(table));
  const TailSampler sampler(nu, 1.0);
  Stream rng(9, 0);
  int n_big = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) n_big += std::abs(sampler.sample(rng)(0)) > std::exp(9.0);
  const double total = oracle_moment(1, alpha, 1.0, [&](double x) { return table(x); },
                                     [](double) { return 1.0; }, 1.0, std::exp(9.0)) +
                       2.0 * std::exp(-alpha) / 9.0;
  const double p = 2.0 * std::exp(-alpha) / 9.0 / total;
  EXPECT_NEAR(n_big / double(n), p, 4.0 * std::sqrt(p * (1 - p) / n));
}
