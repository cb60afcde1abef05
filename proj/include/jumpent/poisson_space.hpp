#pragma once

// Finite-intensity Poisson configurations on [0, T] x R^d and Monte Carlo
// checks of the Mecke formula, the add-one-point density and the
// Phi-entropy inequality on configuration space.

#include "jumpent/core.hpp"
#include "jumpent/levy_measure.hpp"
#include "jumpent/parallel.hpp"
#include "jumpent/phi_entropy.hpp"
#include "jumpent/quadrature.hpp"
#include "jumpent/rng.hpp"
#include "jumpent/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

namespace jumpent {

struct MarkedPoint {
  double s = 0.0;
  Vec z;
};

inline bool canonical_less(const MarkedPoint& a, const MarkedPoint& b) {
  if (a.s != b.s) return a.s < b.s;
  for (Eigen::Index k = 0; k < a.z.size(); ++k)
    if (a.z(k) != b.z(k)) return a.z(k) < b.z(k);
  return false;
}

/// A finite point configuration. Points are kept in canonical order so that
/// functionals never see the order in which points were supplied.
class Configuration {
 public:
  Configuration() = default;
  Configuration(double T, std::vector<MarkedPoint> points) : T_(T), points_(std::move(points)) {
    for (const auto& p : points_)
      require(p.s >= 0.0 && p.s <= T_, "configuration point outside the time window");
    std::sort(points_.begin(), points_.end(), canonical_less);
  }

  double window() const { return T_; }
  std::size_t count() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<MarkedPoint>& points() const { return points_; }

  /// gamma + delta_p
  Configuration with(const MarkedPoint& p) const {
    require(p.s >= 0.0 && p.s <= T_, "added point outside the time window");
    Configuration out = *this;
    out.points_.insert(std::upper_bound(out.points_.begin(), out.points_.end(), p, canonical_less),
                       p);
    return out;
  }

  /// gamma - delta_{points()[i]}
  Configuration without(std::size_t i) const {
    Configuration out = *this;
    out.points_.erase(out.points_.begin() + static_cast<std::ptrdiff_t>(i));
    return out;
  }

  /// gamma(h) = sum of h over the points.
  double sum(const std::function<double(const MarkedPoint&)>& h) const {
    double s = 0.0;
    for (const auto& p : points_) s += h(p);
    return s;
  }

 private:
  double T_ = 0.0;
  std::vector<MarkedPoint> points_;
};

/// lambda(ds, dz) = ds nu(dz) on [0, T] x {|z| > delta}.
class FiniteIntensity {
 public:
  FiniteIntensity(RadialLevyMeasure nu, double delta, double T)
      : nu_(std::move(nu)), delta_(delta), T_(T) {
    require(delta > 0.0, "a finite intensity needs delta > 0");
    require(T > 0.0, "window length must be positive");
    rate_ = moment_integral(nu_, Moment::tail_mass(delta));
    if (rate_ > 0.0) sampler_ = std::make_shared<TailSampler>(nu_, delta);
  }

  const RadialLevyMeasure& measure() const { return nu_; }
  double delta() const { return delta_; }
  double window() const { return T_; }
  int dim() const { return nu_.dim(); }
  /// Total mass m = T nu(|z| > delta).
  double mass() const { return T_ * rate_; }

  /// One point from lambda / m.
  MarkedPoint sample_point(Stream& rng) const {
    if (!sampler_) throw EmptyTail("intensity has no mass");
    MarkedPoint p;
    p.s = T_ * rng.uniform();
    p.z = sampler_->sample(rng);
    return p;
  }

  /// int h dlambda. Time by Gauss-Kronrod, |z| by the radial quadrature,
  /// directions exactly for d <= 2 and by 256 fixed directions otherwise.
  double integral(const std::function<double(const MarkedPoint&)>& h, double tol = 1e-10) const {
    if (rate_ == 0.0) return 0.0;
    const int d = dim();
    const std::vector<Vec> dirs = detail::shell_directions(d, 0);
    auto at_time = [&](double s) {
      auto hz = [&](const Vec& z) { return h(MarkedPoint{s, z}); };
      auto avg = [&](double r) { return detail::sphere_average(d, r, hz, dirs); };
      return radial_integral(nu_, delta_, kInf, RadialWeight::general(avg), tol).value;
    };
    return integrate_gk(at_time, 0.0, T_, tol, 8).value;
  }

 private:
  RadialLevyMeasure nu_;
  double delta_;
  double T_;
  double rate_ = 0.0;
  std::shared_ptr<TailSampler> sampler_;
};

/// Point count ~ Poisson(m), points i.i.d. from lambda / m.
inline Configuration sample_configuration(const FiniteIntensity& lambda, Stream& rng) {
  const double m = lambda.mass();
  std::vector<MarkedPoint> pts;
  if (m > 0.0) {
    const std::uint64_t n = rng.poisson(m);
    pts.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) pts.push_back(lambda.sample_point(rng));
  }
  return Configuration(lambda.window(), std::move(pts));
}

/// Probability density g with respect to lambda, g = w / int w dlambda,
/// sampled by rejection from lambda / m against the bound w_max.
class PointDensity {
 public:
  PointDensity(const FiniteIntensity& lambda, std::function<double(const MarkedPoint&)> w,
               double w_max, std::string name = "custom")
      : w_(std::move(w)), w_max_(w_max), name_(std::move(name)) {
    require(w_max > 0.0, "density bound must be positive");
    norm_ = lambda.integral(w_);
    require(norm_ > 0.0, "density weight integrates to zero");
  }

  /// g = 1 / m, the normalised intensity itself.
  static PointDensity uniform(const FiniteIntensity& lambda) {
    return PointDensity(lambda, [](const MarkedPoint&) { return 1.0; }, 1.0, "uniform");
  }

  double operator()(const MarkedPoint& p) const { return w_(p) / norm_; }
  const std::string& name() const { return name_; }

  MarkedPoint sample(const FiniteIntensity& lambda, Stream& rng) const {
    for (int attempt = 0; attempt < 1000000; ++attempt) {
      MarkedPoint p = lambda.sample_point(rng);
      const double w = w_(p);
      if (w > w_max_ * (1.0 + 1e-12)) throw InvalidArgument("density weight exceeds its bound");
      if (rng.uniform() * w_max_ < w) return p;
    }
    throw DegenerateDensity("rejection sampling of the point density does not accept");
  }

 private:
  std::function<double(const MarkedPoint&)> w_;
  double w_max_;
  double norm_ = 1.0;
  std::string name_;
};

using ConfigFunctional = std::function<double(const Configuration&)>;
using MeckeFunctional = std::function<double(const Configuration&, const MarkedPoint&)>;

/// h(s, z) = |z| ^ 1
inline double capped_norm(const MarkedPoint& p) { return std::min(p.z.norm(), 1.0); }

struct NamedFunctional {
  std::string name;
  ConfigFunctional F;
  /// Closed value of E F under lambda when known.
  std::function<double(const FiniteIntensity&)> mean;
  /// Bounded away from zero, as Phi = xlogx needs.
  bool positive = true;
};

/// Functional corpus, with h(s, z) = |z| ^ 1.
inline std::vector<NamedFunctional> functional_corpus() {
  auto laplace_mean = [](const FiniteIntensity& l) {
    return std::exp(-l.integral([](const MarkedPoint& p) { return 1.0 - std::exp(-capped_norm(p)); }));
  };
  return {
      {"count", [](const Configuration& g) { return 1.0 + static_cast<double>(g.count()); },
       [](const FiniteIntensity& l) { return 1.0 + l.mass(); }},
      {"linear", [](const Configuration& g) { return 1.0 + g.sum(capped_norm); },
       [](const FiniteIntensity& l) { return 1.0 + l.integral(capped_norm); }},
      {"laplace", [](const Configuration& g) { return std::exp(-g.sum(capped_norm)); },
       laplace_mean, false},
      {"laplace_shift", [](const Configuration& g) { return 1.0 + std::exp(-g.sum(capped_norm)); },
       [laplace_mean](const FiniteIntensity& l) { return 1.0 + laplace_mean(l); }},
      {"max_mark",
       [](const Configuration& g) {
         double m = 0.0;
         for (const auto& p : g.points()) m = std::max(m, capped_norm(p));
         return 1.0 + m;
       },
       nullptr},
      {"time_weighted",
       [](const Configuration& g) {
         const double T = g.window();
         return 1.0 + g.sum([T](const MarkedPoint& p) { return p.s / T * capped_norm(p); });
       },
       [](const FiniteIntensity& l) {
         const double T = l.window();
         return 1.0 + l.integral([T](const MarkedPoint& p) { return p.s / T * capped_norm(p); });
       }},
  };
}

inline NamedFunctional corpus_functional(const std::string& name) {
  for (auto& f : functional_corpus())
    if (f.name == name) return f;
  throw InvalidArgument("unknown functional " + name);
}

struct NamedMeckeFunctional {
  std::string name;
  MeckeFunctional F;
};

inline std::vector<NamedMeckeFunctional> mecke_corpus() {
  return {
      {"constant", [](const Configuration&, const MarkedPoint&) { return 1.0; }},
      {"time_fraction", [](const Configuration& g, const MarkedPoint& p) { return p.s / g.window(); }},
      {"count", [](const Configuration& g, const MarkedPoint&) { return static_cast<double>(g.count()); }},
      {"mark_count",
       [](const Configuration& g, const MarkedPoint& p) {
         return capped_norm(p) * static_cast<double>(g.count());
       }},
  };
}

inline NamedMeckeFunctional mecke_functional(const std::string& name) {
  for (auto& f : mecke_corpus())
    if (f.name == name) return f;
  throw InvalidArgument("unknown Mecke functional " + name);
}

/// uniform: g = 1 / m. mark_tilted: w = 1 + |z| ^ 1. time_tilted: w = 1/2 + s / T.
inline PointDensity named_density(const std::string& name, const FiniteIntensity& lambda) {
  if (name == "uniform") return PointDensity::uniform(lambda);
  if (name == "mark_tilted")
    return PointDensity(lambda, [](const MarkedPoint& p) { return 1.0 + capped_norm(p); }, 2.0, name);
  if (name == "time_tilted") {
    const double T = lambda.window();
    return PointDensity(lambda, [T](const MarkedPoint& p) { return 0.5 + p.s / T; }, 1.5, name);
  }
  throw InvalidArgument("unknown point density " + name);
}

struct MeckeResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double stderr_ = 0.0;  // of lhs - rhs, paired per configuration
  std::size_t n = 0;
};

/// lhs = E sum_{p in gamma} F(gamma - delta_p, p),
/// rhs = E int F(gamma, p) lambda(dp), the inner integral by `subsample`
/// points from lambda / m.
inline MeckeResult mecke_check(const MeckeFunctional& F, const FiniteIntensity& lambda,
                               std::size_t n_samples, std::uint64_t seed, int subsample = 4,
                               const WorkerPool& pool = WorkerPool(1)) {
  require(subsample >= 1, "subsample must be at least 1");
  std::vector<double> lhs(n_samples);
  std::vector<double> rhs(n_samples);
  const double m = lambda.mass();
  pool.for_each(n_samples, [&](std::size_t i) {
    Stream rng(seed, i);
    const Configuration g = sample_configuration(lambda, rng);
    double l = 0.0;
    for (std::size_t k = 0; k < g.count(); ++k) l += F(g.without(k), g.points()[k]);
    double r = 0.0;
    if (m > 0.0) {
      for (int k = 0; k < subsample; ++k) r += F(g, lambda.sample_point(rng));
      r *= m / subsample;
    }
    lhs[i] = l;
    rhs[i] = r;
  });
  MeckeResult out;
  out.n = n_samples;
  MeanAccumulator a;
  MeanAccumulator b;
  MeanAccumulator diff;
  for (std::size_t i = 0; i < n_samples; ++i) {
    a.add(lhs[i]);
    b.add(rhs[i]);
    diff.add(lhs[i] - rhs[i]);
  }
  out.lhs = a.mean();
  out.rhs = b.mean();
  out.stderr_ = diff.stderr_of_mean();
  return out;
}

/// E[R F(N + delta_(tau, xi))] against E[F(N)] with R = 1 / (g(tau, xi) + N(g)).
///
/// With a finite intensity the identity only covers non-empty N: the
/// reweighted mean equals E[F(N); N != 0]. `reweighted` adds back the atom
/// F(0) P(N = 0) = F(0) e^(-m); `raw_reweighted` and `raw_weight_mean`
/// (= 1 - e^(-m) in expectation) are reported as well.
struct GirsanovResult {
  double reweighted = 0.0;
  double direct = 0.0;
  double stderr_ = 0.0;  // of reweighted - direct
  double weight_mean = 0.0;
  double weight_stderr = 0.0;
  double raw_reweighted = 0.0;
  double raw_weight_mean = 0.0;
  double empty_atom = 0.0;
  double weight_ess_fraction = 1.0;
  std::size_t n = 0;
};

/// Throws DegenerateDensity when g m < 1e-8 at a sampled point or the
/// weights' effective sample size falls below 1%.
inline GirsanovResult girsanov_density_check(const PointDensity& g, const ConfigFunctional& F,
                                             const FiniteIntensity& lambda, std::size_t n_samples,
                                             std::uint64_t seed,
                                             const WorkerPool& pool = WorkerPool(1)) {
  std::vector<double> weights(n_samples);
  std::vector<double> weighted(n_samples);
  std::vector<double> direct(n_samples);
  std::vector<double> min_g(n_samples);
  pool.for_each(n_samples, [&](std::size_t i) {
    Stream rng(seed, i);
    const Configuration n = sample_configuration(lambda, rng);
    const MarkedPoint p = g.sample(lambda, rng);
    double lowest = g(p);
    const double denom = g(p) + n.sum([&](const MarkedPoint& q) {
      const double v = g(q);
      lowest = std::min(lowest, v);
      return v;
    });
    min_g[i] = lowest;
    const double r = 1.0 / denom;
    weights[i] = r;
    weighted[i] = r * F(n.with(p));
    // An independent configuration for the direct mean.
    direct[i] = F(sample_configuration(lambda, rng));
  });
  GirsanovResult out;
  out.n = n_samples;
  if (n_samples == 0) return out;
  double sw = 0.0;
  double sw2 = 0.0;
  for (double w : weights) {
    sw += w;
    sw2 += w * w;
  }
  out.weight_ess_fraction = sw * sw / (sw2 * static_cast<double>(n_samples));
  const double lowest = *std::min_element(min_g.begin(), min_g.end());
  if (!(lowest * lambda.mass() >= 1e-8))
    throw DegenerateDensity("point density is not bounded away from 0 on the sampled support");
  if (!(out.weight_ess_fraction >= 0.01))
    throw DegenerateDensity("add-one-point weights are degenerate (effective sample size below 1%)");
  const double empty = std::exp(-lambda.mass());
  out.empty_atom = F(Configuration(lambda.window(), {})) * empty;
  MeanAccumulator w;
  MeanAccumulator rw;
  MeanAccumulator dm;
  MeanAccumulator diff;
  for (std::size_t i = 0; i < n_samples; ++i) {
    w.add(weights[i]);
    rw.add(weighted[i]);
    dm.add(direct[i]);
    diff.add(weighted[i] - direct[i]);
  }
  out.raw_weight_mean = w.mean();
  out.weight_mean = w.mean() + empty;
  out.weight_stderr = w.stderr_of_mean();
  out.raw_reweighted = rw.mean();
  out.reweighted = rw.mean() + out.empty_atom;
  out.direct = dm.mean();
  out.stderr_ = diff.stderr_of_mean();
  return out;
}

struct WuResult {
  std::string functional;
  std::string phi;
  double entropy = 0.0;
  double entropy_stderr = 0.0;
  double rhs = 0.0;
  double rhs_stderr = 0.0;
  double margin = 0.0;   // rhs - entropy
  double stderr_ = 0.0;  // joint, of the margin
  bool holds = true;
  std::size_t n = 0;
};

/// Ent^Phi(F) <= E int Psi(F(N + delta_p), F(N)) lambda(dp). The inner
/// integral uses `subsample` points p_k ~ g lambda with weights 1 / g(p_k).
inline WuResult wu_entropy_check(const PhiSpec& phi, const ConfigFunctional& F,
                                 const FiniteIntensity& lambda, std::size_t n_samples,
                                 std::uint64_t seed, const PointDensity* g = nullptr,
                                 int subsample = 4, const WorkerPool& pool = WorkerPool(1)) {
  require(subsample >= 1, "subsample must be at least 1");
  std::vector<double> fx(n_samples);
  std::vector<double> add(n_samples);
  const double m = lambda.mass();
  pool.for_each(n_samples, [&](std::size_t i) {
    Stream rng(seed, i);
    const Configuration n = sample_configuration(lambda, rng);
    const double v = F(n);
    double a = 0.0;
    if (m > 0.0) {
      for (int k = 0; k < subsample; ++k) {
        const MarkedPoint p = g ? g->sample(lambda, rng) : lambda.sample_point(rng);
        const double weight = g ? 1.0 / (*g)(p) : m;
        a += weight * phi.psi(F(n.with(p)), v);
      }
      a /= subsample;
    }
    fx[i] = v;
    add[i] = a;
  });
  WuResult out;
  out.phi = phi.name();
  out.n = n_samples;
  if (n_samples == 0) return out;
  const auto ent = entropy_of_values(phi, fx);
  out.entropy = ent.value;
  out.entropy_stderr = ent.stderr_;
  MeanAccumulator r;
  for (double a : add) r.add(a);
  out.rhs = r.mean();
  out.rhs_stderr = r.stderr_of_mean();
  MeanAccumulator mean_f;
  for (double v : fx) mean_f.add(v);
  const double slope = phi.d1(mean_f.mean());
  MeanAccumulator joint;
  for (std::size_t i = 0; i < n_samples; ++i) joint.add(add[i] - (phi(fx[i]) - slope * fx[i]));
  out.stderr_ = joint.stderr_of_mean();
  out.margin = out.rhs - out.entropy;
  out.holds = out.margin >= -3.0 * out.stderr_;
  return out;
}

}  // namespace jumpent
