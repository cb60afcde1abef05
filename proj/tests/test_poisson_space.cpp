#include "jumpent/poisson_space.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace jumpent;

namespace {

// d = 1, alpha = 1, kappa = 1, delta = 0.25, T = 0.25: m = 0.25 * 2 / 0.25 = 2.
FiniteIntensity example_intensity() {
  return FiniteIntensity(RadialLevyMeasure(1, 1.0, 1.0, 1.0), 0.25, 0.25);
}

// int k(|z|) dlambda for the example intensity: T * 2 int_{0.25}^inf k(r) r^-2 dr.
double example_integral(const std::function<double(double)>& k) {
  const double inner = oracle::simpson([&](double r) { return k(r) / (r * r); }, 0.25, 1.0, 1e-13);
  // k is constant beyond r = 1 for the functions used here.
  return 0.25 * 2.0 * (inner + k(1.0));
}

double laplace_oracle() {
  return std::exp(-example_integral([](double r) { return 1.0 - std::exp(-std::min(r, 1.0)); }));
}

}  // namespace

TEST(Intensity, MassAndIntegral) {
  const auto l = example_intensity();
  EXPECT_NEAR(l.mass(), 2.0, 1e-12);
  EXPECT_NEAR(l.integral([](const MarkedPoint&) { return 1.0; }), 2.0, 1e-9);
  EXPECT_NEAR(l.integral(capped_norm), example_integral([](double r) { return std::min(r, 1.0); }),
              1e-9);
  EXPECT_NEAR(l.integral([](const MarkedPoint& p) { return p.s / 0.25; }), 1.0, 1e-9);
}

TEST(SampleConfiguration, EmptyWhenNoMass) {
  const FiniteIntensity none(RadialLevyMeasure(1, 1.0, 1.0, 1.0, RadialProfile::small_jumps()),
                             1.0, 1.0);
  EXPECT_EQ(none.mass(), 0.0);
  Stream rng(1, 0);
  EXPECT_TRUE(sample_configuration(none, rng).empty());
}

TEST(SampleConfiguration, MeanCountAndWindow) {
  const auto l = example_intensity();
  MeanAccumulator count;
  for (std::size_t i = 0; i < 100000; ++i) {
    Stream rng(2, i);
    const auto g = sample_configuration(l, rng);
    count.add(static_cast<double>(g.count()));
    for (const auto& p : g.points()) {
      ASSERT_GE(p.s, 0.0);
      ASSERT_LE(p.s, 0.25);
      ASSERT_GT(std::abs(p.z(0)), 0.25);
    }
  }
  EXPECT_NEAR(count.mean(), 2.0, 3.0 * count.stderr_of_mean());
  EXPECT_NEAR(count.variance(), 2.0, 0.05);
}

TEST(SampleConfiguration, LaplaceFunctional) {
  const auto l = example_intensity();
  MeanAccumulator acc;
  for (std::size_t i = 0; i < 100000; ++i) {
    Stream rng(3, i);
    acc.add(std::exp(-sample_configuration(l, rng).sum(capped_norm)));
  }
  EXPECT_NEAR(acc.mean(), laplace_oracle(), 3.0 * acc.stderr_of_mean());
}

TEST(ConfigurationTest, FunctionalsIgnorePointOrder) {
  const auto l = FiniteIntensity(RadialLevyMeasure(2, 0.7, 1.0, 1.0), 0.1, 1.0);
  std::mt19937_64 shuffler(4);
  for (std::size_t i = 0; i < 200; ++i) {
    Stream rng(4, i);
    const auto g = sample_configuration(l, rng);
    auto pts = g.points();
    std::shuffle(pts.begin(), pts.end(), shuffler);
    const Configuration h(g.window(), pts);
    for (const auto& f : functional_corpus()) ASSERT_EQ(f.F(g), f.F(h)) << f.name;
  }
  EXPECT_THROW(Configuration(1.0, {MarkedPoint{1.5, zeros(1)}}), InvalidArgument);
}

TEST(ConfigurationTest, AddAndRemove) {
  Vec z(1);
  z(0) = 0.5;
  const Configuration g(1.0, {MarkedPoint{0.7, z}, MarkedPoint{0.2, -z}});
  EXPECT_EQ(g.points()[0].s, 0.2);
  const auto h = g.with(MarkedPoint{0.5, z});
  ASSERT_EQ(h.count(), 3u);
  EXPECT_EQ(h.points()[1].s, 0.5);
  EXPECT_EQ(h.without(1).count(), 2u);
  EXPECT_EQ(h.without(1).points()[1].s, 0.7);
}

TEST(Mecke, ThreeFunctionals) {
  const auto l = example_intensity();
  const double m = l.mass();
  struct Case {
    MeckeFunctional F;
    double want;
  };
  const std::vector<Case> cases{
      {[](const Configuration&, const MarkedPoint&) { return 1.0; }, m},
      {[](const Configuration& g, const MarkedPoint& p) { return p.s / g.window(); }, m / 2.0},
      {[](const Configuration& g, const MarkedPoint&) { return static_cast<double>(g.count()); },
       m * m},
  };
  for (const auto& c : cases) {
    const auto r = mecke_check(c.F, l, 100000, 5);
    EXPECT_NEAR(r.lhs, r.rhs, 3.0 * r.stderr_);
    const double se = std::max(r.stderr_, 1e-12);
    EXPECT_NEAR(r.lhs, c.want, 4.0 * se * 2.0);
  }
  // F = 1 carries no sampling noise on the right.
  const auto one = mecke_check(cases[0].F, l, 1000, 5);
  EXPECT_DOUBLE_EQ(one.rhs, m);
}

TEST(Girsanov, WeightsHaveMeanOneAfterEmptyAtom) {
  const auto l = example_intensity();
  const auto g = PointDensity::uniform(l);
  const auto r =
      girsanov_density_check(g, [](const Configuration&) { return 1.0; }, l, 100000, 6);
  EXPECT_NEAR(r.weight_mean, 1.0, 3.0 * r.weight_stderr);
  EXPECT_NEAR(r.reweighted, 1.0, 3.0 * r.weight_stderr);
  // Without the atom the lemma's identity misses P(N = 0).
  EXPECT_NEAR(r.raw_weight_mean, 1.0 - std::exp(-2.0), 3.0 * r.weight_stderr);
  EXPECT_NEAR(r.empty_atom, std::exp(-2.0), 1e-15);
}

TEST(Girsanov, CountAndLaplace) {
  const auto l = example_intensity();
  const PointDensity g(
      l, [](const MarkedPoint& p) { return 1.0 + std::min(std::abs(p.z(0)), 1.0) + p.s; }, 2.25,
      "tilted");
  const auto count = girsanov_density_check(
      g, [](const Configuration& c) { return static_cast<double>(c.count()); }, l, 100000, 7);
  EXPECT_NEAR(count.reweighted, count.direct, 3.0 * count.stderr_);
  EXPECT_NEAR(count.reweighted, 2.0, 0.03);
  const auto lap = girsanov_density_check(
      g, [](const Configuration& c) { return std::exp(-c.sum(capped_norm)); }, l, 100000, 8);
  EXPECT_NEAR(lap.reweighted, lap.direct, 3.0 * lap.stderr_);
  EXPECT_NEAR(lap.reweighted, laplace_oracle(), 0.01);
}

TEST(Girsanov, CorpusAgrees) {
  const auto l = example_intensity();
  const PointDensity g(
      l, [](const MarkedPoint& p) { return 0.5 + p.s / 0.25; }, 1.5, "time_tilted");
  for (const auto& f : functional_corpus()) {
    const auto r = girsanov_density_check(g, f.F, l, 50000, 9);
    EXPECT_NEAR(r.reweighted, r.direct, 3.0 * r.stderr_) << f.name;
    if (f.mean) {
      EXPECT_NEAR(r.direct, f.mean(l), 0.02 * f.mean(l)) << f.name;
    }
  }
}

TEST(Girsanov, DegenerateDensityIsReported) {
  const auto l = example_intensity();
  const PointDensity g(
      l, [](const MarkedPoint& p) { return std::pow(p.s / 0.25, 8.0); }, 1.0, "vanishing");
  EXPECT_THROW(
      girsanov_density_check(g, [](const Configuration&) { return 1.0; }, l, 20000, 10),
      DegenerateDensity);
}

TEST(Wu, ConstantFunctionalGivesZero) {
  const auto r = wu_entropy_check(PhiSpec::xlogx(), [](const Configuration&) { return 2.0; },
                                  example_intensity(), 1000, 11);
  EXPECT_EQ(r.entropy, 0.0);
  EXPECT_EQ(r.rhs, 0.0);
  EXPECT_TRUE(r.holds);
}

TEST(Wu, PowerTwoLinearIsEquality) {
  const auto l = example_intensity();
  const double h2 = example_integral([](double r) { return std::pow(std::min(r, 1.0), 2); });
  const auto r = wu_entropy_check(
      PhiSpec::power(2), [](const Configuration& g) { return 0.5 + g.sum(capped_norm); }, l,
      100000, 12);
  EXPECT_LT(std::abs(r.margin), 3.0 * r.stderr_);
  EXPECT_NEAR(r.entropy, h2, 3.0 * r.entropy_stderr);
  EXPECT_NEAR(r.rhs, h2, 3.0 * r.rhs_stderr);
}

TEST(Wu, LogEntropyStrictForLaplace) {
  const auto l = example_intensity();
  const auto r = wu_entropy_check(
      PhiSpec::xlogx(), [](const Configuration& g) { return 1.0 + std::exp(-g.sum(capped_norm)); },
      l, 100000, 13);
  EXPECT_GT(r.margin, 3.0 * r.stderr_);
  MeanAccumulator f;
  for (std::size_t i = 0; i < 20000; ++i) {
    Stream rng(14, i);
    f.add(1.0 + std::exp(-sample_configuration(l, rng).sum(capped_norm)));
  }
  EXPECT_NEAR(f.mean(), 1.0 + laplace_oracle(), 3.0 * f.stderr_of_mean());
}

TEST(Wu, CorpusNeverSignificantlyNegative) {
  const auto l = example_intensity();
  const PointDensity g(
      l, [](const MarkedPoint& p) { return 1.0 + std::min(std::abs(p.z(0)), 1.0); }, 2.0,
      "mark_tilted");
  for (const auto& phi : {PhiSpec::xlogx(), PhiSpec::power(1.5), PhiSpec::power(2)}) {
    for (const auto& f : functional_corpus()) {
      if (phi.kind() == PhiSpec::Kind::xlogx && !f.positive) continue;
      const auto plain = wu_entropy_check(phi, f.F, l, 20000, 15);
      const auto tilted = wu_entropy_check(phi, f.F, l, 20000, 15, &g);
      EXPECT_TRUE(plain.holds) << phi.name() << " " << f.name;
      EXPECT_TRUE(tilted.holds) << phi.name() << " " << f.name;
      EXPECT_NEAR(plain.rhs, tilted.rhs, 4.0 * std::hypot(plain.rhs_stderr, tilted.rhs_stderr))
          << phi.name() << " " << f.name;
    }
  }
}

TEST(PoissonParallel, ThreadCountDoesNotChangeResults) {
  const auto l = example_intensity();
  const auto F = corpus_functional("laplace_shift").F;
  const auto a = wu_entropy_check(PhiSpec::xlogx(), F, l, 5000, 16, nullptr, 4, WorkerPool(1));
  const auto b = wu_entropy_check(PhiSpec::xlogx(), F, l, 5000, 16, nullptr, 4, WorkerPool(4));
  EXPECT_EQ(a.entropy, b.entropy);
  EXPECT_EQ(a.rhs, b.rhs);
  EXPECT_THROW(corpus_functional("nope"), InvalidArgument);
}

TEST(NamedCorpora, LookupAndUnknownNames) {
  const auto l = example_intensity();
  EXPECT_EQ(mecke_corpus().size(), 4u);
  const auto r = mecke_check(mecke_functional("mark_count").F, l, 50000, 17);
  EXPECT_NEAR(r.lhs, r.rhs, 3.0 * r.stderr_);
  for (const char* name : {"uniform", "mark_tilted", "time_tilted"}) {
    const auto g = named_density(name, l);
    EXPECT_EQ(g.name(), name);
    EXPECT_NEAR(l.integral([&](const MarkedPoint& p) { return g(p); }), 1.0, 1e-8) << name;
  }
  EXPECT_THROW(mecke_functional("nope"), InvalidArgument);
  EXPECT_THROW(named_density("nope", l), InvalidArgument);
}
