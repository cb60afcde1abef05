#pragma once

// Phi-entropies, the jump energy Gamma_{Phi,nu}, the generator, and the
// constants of the entropy bounds for
//
//   dX = b(X) dt + sigma dL,   nu(dz) between kappa1 rho(|z|) |z|^(-d-alpha) dz
//                              and kappa2 rho(|z|) |z|^(-d-alpha) dz.

#include "jumpent/core.hpp"
#include "jumpent/levy_measure.hpp"
#include "jumpent/parallel.hpp"
#include "jumpent/quadrature.hpp"
#include "jumpent/rng.hpp"
#include "jumpent/sde_engine.hpp"
#include "jumpent/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace jumpent {

/// Convex Phi with Phi(0) = 0: u log u or u^p, p in [1, 2].
class PhiSpec {
 public:
  enum class Kind { xlogx, power };

  static PhiSpec xlogx() { return PhiSpec(Kind::xlogx, 1.0); }
  static PhiSpec power(double p) {
    require(p >= 1.0 && p <= 2.0, "power(p) needs p in [1, 2]");
    return PhiSpec(Kind::power, p);
  }
  /// Inverse of name(): "xlogx" or "power(p)".
  static PhiSpec from_name(const std::string& name) {
    if (name == "xlogx") return xlogx();
    if (name.size() > 7 && name.starts_with("power(") && name.back() == ')') {
      const std::string arg = name.substr(6, name.size() - 7);
      std::size_t used = 0;
      double p = 0.0;
      try {
        p = std::stod(arg, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == arg.size() && used > 0) return power(p);
    }
    throw InvalidArgument("unknown Phi " + name);
  }

  Kind kind() const { return kind_; }
  double p() const { return p_; }
  std::string name() const {
    return kind_ == Kind::xlogx ? "xlogx" : "power(" + format_p() + ")";
  }

  double operator()(double u) const {
    if (u < 0.0) throw NonPositiveInput("Phi is defined on [0, inf)");
    if (u == 0.0) return 0.0;
    return kind_ == Kind::xlogx ? u * std::log(u) : std::pow(u, p_);
  }

  double d1(double u) const {
    positive(u);
    return kind_ == Kind::xlogx ? std::log(u) + 1.0 : p_ * std::pow(u, p_ - 1.0);
  }

  double d2(double u) const {
    positive(u);
    if (kind_ == Kind::xlogx) return 1.0 / u;
    if (p_ == 2.0) return 2.0;
    return p_ * (p_ - 1.0) * std::pow(u, p_ - 2.0);
  }

  /// Psi(u, v) = Phi(u) - Phi(v) - Phi'(v)(u - v), written in t = (u - v)/v
  /// so that nearby arguments do not cancel.
  double psi(double u, double v) const {
    if (!(v > 0.0)) throw NonPositiveInput("psi needs v > 0");
    if (u < 0.0) throw NonPositiveInput("psi needs u >= 0");
    if (kind_ == Kind::power && p_ == 2.0) return (u - v) * (u - v);
    if (kind_ == Kind::power && p_ == 1.0) return 0.0;
    const double t = (u - v) / v;
    if (kind_ == Kind::xlogx) {
      if (u == 0.0) return v;
      if (std::abs(t) < 0.1) {
        // sum_{k >= 2} (-1)^k t^k / (k (k - 1))
        double term = t * t;
        double sum = 0.0;
        for (int k = 2; k <= 24; ++k) {
          sum += term / (k * (k - 1.0));
          term *= -t;
        }
        return v * sum;
      }
      return v * ((1.0 + t) * std::log1p(t) - t);
    }
    const double vp = std::pow(v, p_);
    if (u == 0.0) return (p_ - 1.0) * vp;
    if (std::abs(t) < 0.1) {
      // sum_{k >= 2} binom(p, k) t^k
      double coef = p_ * (p_ - 1.0) / 2.0;
      double term = t * t;
      double sum = 0.0;
      for (int k = 2; k <= 24; ++k) {
        sum += coef * term;
        coef *= (p_ - k) / (k + 1.0);
        term *= t;
      }
      return vp * sum;
    }
    return vp * (std::pow(1.0 + t, p_) - 1.0 - p_ * t);
  }

 private:
  PhiSpec(Kind k, double p) : kind_(k), p_(p) {}

  static void positive(double u) {
    if (!(u > 0.0)) throw NonPositiveInput("Phi derivatives need u > 0");
  }

  std::string format_p() const {
    std::string s = std::to_string(p_);
    s.erase(s.find_last_not_of('0') + 1);
    if (!s.empty() && s.back() == '.') s.pop_back();
    return s;
  }

  Kind kind_;
  double p_;
};

inline double psi(const PhiSpec& phi, double u, double v) { return phi.psi(u, v); }

/// A test function with declared bounds. Missing derivatives are replaced by
/// central differences.
struct TestFunction {
  int dim = 1;
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> gradient;
  std::function<Mat(const Vec&)> hessian;
  double inf_bound = 0.0;
  double sup_bound = kInf;
  /// |f(x)| = O(|x|^growth) for unbounded f.
  double growth = 0.0;
  bool smooth = true;
  std::string name = "custom";

  double operator()(const Vec& x) const { return f(x); }
  bool bounded() const { return std::isfinite(sup_bound); }

  Vec grad(const Vec& x) const {
    if (gradient) return gradient(x);
    Vec g(dim);
    for (int k = 0; k < dim; ++k) {
      const double h = 1e-5 * std::max(1.0, std::abs(x(k)));
      Vec xp = x;
      Vec xm = x;
      xp(k) += h;
      xm(k) -= h;
      g(k) = (f(xp) - f(xm)) / (2.0 * h);
    }
    return g;
  }

  Mat hess(const Vec& x) const {
    if (hessian) return hessian(x);
    Mat m(dim, dim);
    const double h = 1e-4 * std::max(1.0, x.norm());
    for (int i = 0; i < dim; ++i) {
      for (int j = i; j < dim; ++j) {
        Vec e1 = zeros(dim);
        Vec e2 = zeros(dim);
        e1(i) = h;
        e2(j) = h;
        const double v =
            (f(x + e1 + e2) - f(x + e1 - e2) - f(x - e1 + e2) + f(x - e1 - e2)) / (4.0 * h * h);
        m(i, j) = v;
        m(j, i) = v;
      }
    }
    return m;
  }

  /// Throws InvalidArgument if a sampled value breaks the declared bounds.
  void check_bounds(std::span<const Vec> points) const {
    for (const Vec& x : points) {
      const double v = f(x);
      if (!(v >= inf_bound - 1e-12 && v <= sup_bound + 1e-12))
        throw InvalidArgument("test function " + name + " breaks its declared bounds");
    }
  }

  /// check_bounds on a grid along each axis plus random points.
  void check_bounds(std::uint64_t seed = 0, int n_random = 1000) const {
    std::vector<Vec> pts;
    std::vector<double> radii{0.0};
    for (double r = 1e-3; r <= 1e4; r *= 1.5) radii.push_back(r);
    for (int k = 0; k < dim; ++k)
      for (double r : radii)
        for (double sign : {-1.0, 1.0}) {
          Vec x = zeros(dim);
          x(k) = sign * r;
          pts.push_back(x);
        }
    Stream rng(seed, 0);
    for (int i = 0; i < n_random; ++i) {
      Vec x(dim);
      for (int k = 0; k < dim; ++k) x(k) = 10.0 * rng.normal();
      pts.push_back(x);
    }
    check_bounds(pts);
  }

  static TestFunction constant(int dim, double c) {
    require(c > 0.0, "constant test function must be positive");
    TestFunction t;
    t.dim = dim;
    t.f = [c](const Vec&) { return c; };
    t.gradient = [dim](const Vec&) -> Vec { return zeros(dim); };
    t.hessian = [dim](const Vec&) -> Mat { return Mat::Zero(dim, dim); };
    t.inf_bound = c;
    t.sup_bound = c;
    t.name = "constant";
    return t;
  }

  /// a + tanh(x_1), a > 1.
  static TestFunction tanh_shift(int dim, double a = 1.5) {
    require(a > 1.0, "a + tanh needs a > 1 to stay positive");
    TestFunction t;
    t.dim = dim;
    t.f = [a](const Vec& x) { return a + std::tanh(x(0)); };
    t.gradient = [dim](const Vec& x) -> Vec {
      Vec g = zeros(dim);
      const double c = std::cosh(x(0));
      g(0) = 1.0 / (c * c);
      return g;
    };
    t.hessian = [dim](const Vec& x) -> Mat {
      Mat h = Mat::Zero(dim, dim);
      const double c = std::cosh(x(0));
      h(0, 0) = -2.0 * std::tanh(x(0)) / (c * c);
      return h;
    };
    t.inf_bound = a - 1.0;
    t.sup_bound = a + 1.0;
    t.name = "tanh_shift";
    return t;
  }

  /// 1 / (1 + |x|^2).
  static TestFunction inverse_quadratic(int dim) {
    TestFunction t;
    t.dim = dim;
    t.f = [](const Vec& x) { return 1.0 / (1.0 + x.squaredNorm()); };
    t.gradient = [](const Vec& x) -> Vec {
      const double q = 1.0 + x.squaredNorm();
      return -2.0 * x / (q * q);
    };
    t.hessian = [dim](const Vec& x) -> Mat {
      const double q = 1.0 + x.squaredNorm();
      return (8.0 * x * x.transpose() / (q * q * q)) - Mat(2.0 * identity(dim) / (q * q));
    };
    t.inf_bound = 0.0;
    t.sup_bound = 1.0;
    t.name = "inverse_quadratic";
    return t;
  }

  /// 1 + exp(-|x|^2 / 2).
  static TestFunction gaussian_bump(int dim) {
    TestFunction t;
    t.dim = dim;
    t.f = [](const Vec& x) { return 1.0 + std::exp(-0.5 * x.squaredNorm()); };
    t.gradient = [](const Vec& x) -> Vec { return -std::exp(-0.5 * x.squaredNorm()) * x; };
    t.hessian = [dim](const Vec& x) -> Mat {
      const double e = std::exp(-0.5 * x.squaredNorm());
      return e * (x * x.transpose() - Mat(identity(dim)));
    };
    t.inf_bound = 1.0;
    t.sup_bound = 2.0;
    t.name = "gaussian_bump";
    return t;
  }

  /// a + cos(x_1), a > 1.
  static TestFunction cosine(int dim, double a = 2.0) {
    require(a > 1.0, "a + cos needs a > 1 to stay positive");
    TestFunction t;
    t.dim = dim;
    t.f = [a](const Vec& x) { return a + std::cos(x(0)); };
    t.gradient = [dim](const Vec& x) -> Vec {
      Vec g = zeros(dim);
      g(0) = -std::sin(x(0));
      return g;
    };
    t.hessian = [dim](const Vec& x) -> Mat {
      Mat h = Mat::Zero(dim, dim);
      h(0, 0) = -std::cos(x(0));
      return h;
    };
    t.inf_bound = a - 1.0;
    t.sup_bound = a + 1.0;
    t.name = "cosine";
    return t;
  }

  /// <a, x>. Unbounded, for generator checks only.
  static TestFunction linear(const Vec& a) {
    TestFunction t;
    t.dim = static_cast<int>(a.size());
    t.f = [a](const Vec& x) { return a.dot(x); };
    t.gradient = [a](const Vec&) -> Vec { return a; };
    const int d = t.dim;
    t.hessian = [d](const Vec&) -> Mat { return Mat::Zero(d, d); };
    t.inf_bound = -kInf;
    t.sup_bound = kInf;
    t.growth = 1.0;
    t.name = "linear";
    return t;
  }
};

inline TestFunction test_function_by_name(const std::string& name, int dim) {
  if (name == "tanh_shift") return TestFunction::tanh_shift(dim);
  if (name == "inverse_quadratic") return TestFunction::inverse_quadratic(dim);
  if (name == "cosine") return TestFunction::cosine(dim);
  if (name == "gaussian_bump") return TestFunction::gaussian_bump(dim);
  throw InvalidArgument("unknown test function " + name);
}

struct JumpIntegralOptions {
  double tol = 1e-10;
  /// Monte Carlo size for d >= 3 (antithetic pairs).
  std::size_t mc_pairs = 20000;
  std::uint64_t seed = 0;
  /// Include the Brownian part 1/2 Tr(sigma1 sigma1^T Hess f) in the generator.
  bool brownian = false;
};

inline constexpr double kDefaultInnerRadius = 1e-3;

namespace detail {

inline constexpr int kCircleNodes = 64;

// Directional average of h(r u) over the unit sphere; d = 1 and d = 2 are
// exact (up to the trapezoid rule on the circle), larger d uses `dirs`.
inline double sphere_average(int d, double r, const std::function<double(const Vec&)>& h,
                             const std::vector<Vec>& dirs) {
  if (d == 1) {
    Vec z(1);
    z(0) = r;
    const double a = h(z);
    z(0) = -r;
    return 0.5 * (a + h(z));
  }
  if (d == 2) {
    double s = 0.0;
    Vec z(2);
    for (int k = 0; k < kCircleNodes; ++k) {
      const double th = (k + 0.5) * 2.0 * std::numbers::pi / kCircleNodes;
      z(0) = r * std::cos(th);
      z(1) = r * std::sin(th);
      s += h(z);
    }
    return s / kCircleNodes;
  }
  double s = 0.0;
  for (const Vec& u : dirs) s += h(r * u) + h(-r * u);
  return s / (2.0 * static_cast<double>(dirs.size()));
}

inline std::vector<Vec> shell_directions(int d, std::uint64_t seed, int n = 256) {
  std::vector<Vec> dirs;
  if (d <= 2) return dirs;
  Stream rng(seed, 0x5eed);
  for (int i = 0; i < n; ++i) dirs.push_back(rng.direction(d));
  return dirs;
}

// Integral of h over |z| > r0 against nu, plus the exact-minus-surrogate
// discrepancy on the shell r0 < |z| <= 2 r0. `h` must be even up to terms
// that integrate to zero over spheres.
struct OuterResult {
  Integral outer;
  double shell_exact = 0.0;
};

inline OuterResult outer_integral(const RadialLevyMeasure& nu, double r0,
                                  const std::function<double(const Vec&)>& h, double growth,
                                  double scale, const JumpIntegralOptions& opt) {
  const int d = nu.dim();
  const std::vector<Vec> dirs = shell_directions(d, opt.seed);
  auto avg = [&](double r) { return sphere_average(d, r, h, dirs); };
  // Values below this are rounding noise of h relative to its scale.
  const double abs_tol = 1e-14 * scale * (1.0 + moment_integral(nu, Moment::tail_mass(r0)));
  OuterResult out;
  out.shell_exact =
      radial_integral(nu, r0, 2.0 * r0, RadialWeight::general(avg), opt.tol, abs_tol).value;
  if (d <= 2) {
    out.outer =
        radial_integral(nu, r0, kInf, RadialWeight::general(avg, growth), opt.tol, abs_tol);
    return out;
  }
  // Importance sampling from the normalised tail of nu, antithetic in z.
  const double mass = moment_integral(nu, Moment::tail_mass(r0));
  if (mass == 0.0) return out;
  if (!(growth < nu.alpha()) && !nu.rho().table())
    throw DivergentIntegral("jump integral diverges: integrand grows too fast");
  const TailSampler sampler(nu, r0);
  Stream rng(opt.seed, 0x1a11);
  MeanAccumulator acc;
  for (std::size_t i = 0; i < opt.mc_pairs; ++i) {
    const Vec z = sampler.sample(rng);
    acc.add(0.5 * (h(z) + h(-z)));
  }
  out.outer = {mass * acc.mean(), mass * acc.stderr_of_mean()};
  return out;
}

}  // namespace detail

/// Gamma_{Phi,nu}(f)(x) = int Psi(f(x + sigma z), f(x)) nu(dz). Inside
/// |z| <= inner_radius the integrand is replaced by its second-order Taylor
/// term. The error combines quadrature (or Monte Carlo) error with the
/// surrogate discrepancy on the next shell r0 < |z| <= 2 r0.
inline Integral gamma_phi(const PhiSpec& phi, const TestFunction& f, const Vec& x,
                          const RadialLevyMeasure& nu, const Mat& sigma,
                          double inner_radius = kDefaultInnerRadius,
                          const JumpIntegralOptions& opt = {}) {
  require(inner_radius > 0.0, "inner_radius must be positive");
  require(x.size() == nu.dim() && f.dim == nu.dim(), "dimension mismatch");
  if (!f.bounded()) throw DivergentIntegral("Gamma needs a bounded test function");
  const double fx = f(x);
  if (!(fx > 0.0)) throw NonPositiveInput("test function must be positive");
  const int d = nu.dim();
  const Vec sg = sigma.transpose() * f.grad(x);
  const double coef = 0.5 * phi.d2(fx) * sg.squaredNorm() / d;

  auto h = [&](const Vec& z) -> double { return phi.psi(f(x + sigma * z), fx); };
  const auto res = detail::outer_integral(nu, inner_radius, h, 0.0, std::max(fx, fx * fx), opt);
  const double small_in = moment_integral(nu, Moment::small_sq(inner_radius));
  const double small_out = moment_integral(nu, Moment::small_sq(2.0 * inner_radius));
  const double shell_err = std::abs(res.shell_exact - coef * (small_out - small_in));
  return {coef * small_in + res.outer.value, shell_err + res.outer.error};
}

/// Lf(x) = <grad f, b> + int [f(x + sigma z) - f - <grad f, sigma z> 1{|z| <= 1}] nu(dz),
/// with sigma = coeffs.jump_matrix(x). The jump integral is taken over
/// antipodal pairs so that the compensator drops out for radial nu.
inline Integral generator_apply(const TestFunction& f, const Vec& x, const CoefficientField& coeffs,
                                const RadialLevyMeasure& nu,
                                double inner_radius = kDefaultInnerRadius,
                                const JumpIntegralOptions& opt = {}) {
  require(inner_radius > 0.0, "inner_radius must be positive");
  require(x.size() == nu.dim() && coeffs.dim == nu.dim() && f.dim == nu.dim(),
          "dimension mismatch");
  const int d = nu.dim();
  const Mat sigma = coeffs.jump_matrix(x);
  const double fx = f(x);
  const Mat hs = sigma.transpose() * f.hess(x) * sigma;
  const double coef = 0.5 * hs.trace() / d;
  double drift = f.grad(x).dot(coeffs.drift(x));
  if (opt.brownian && coeffs.sigma1) {
    const Mat s1 = coeffs.sigma1(x);
    drift += 0.5 * (s1.transpose() * f.hess(x) * s1).trace();
  }

  auto h = [&](const Vec& z) -> double { return f(x + sigma * z) - fx; };
  const auto res =
      detail::outer_integral(nu, inner_radius, h, f.growth, 1.0 + std::abs(fx), opt);
  const double small_in = moment_integral(nu, Moment::small_sq(inner_radius));
  const double small_out = moment_integral(nu, Moment::small_sq(2.0 * inner_radius));
  const double shell_err = std::abs(res.shell_exact - coef * (small_out - small_in));
  return {drift + coef * small_in + res.outer.value, shell_err + res.outer.error};
}

/// Gamma_{Phi,nu}(f) on a grid for d = 1, interpolated by a monotone cubic
/// in s = asinh(x). Built for averaging Gamma over large ensembles; the
/// interpolation error is measured at cell midpoints.
class GammaTable {
 public:
  GammaTable(const PhiSpec& phi, const TestFunction& f, const RadialLevyMeasure& nu,
             const Mat& sigma, double lo, double hi, int nodes = 257,
             double inner_radius = kDefaultInnerRadius, const JumpIntegralOptions& opt = {}) {
    require(nu.dim() == 1, "GammaTable is one-dimensional");
    require(hi > lo && nodes >= 4, "GammaTable needs a non-empty range");
    s0_ = std::asinh(lo);
    s1_ = std::asinh(hi);
    ds_ = (s1_ - s0_) / (nodes - 1);
    Vec x(1);
    for (int i = 0; i < nodes; ++i) {
      x(0) = std::sinh(s0_ + i * ds_);
      const Integral g = gamma_phi(phi, f, x, nu, sigma, inner_radius, opt);
      values_.push_back(g.value);
      node_error_ = std::max(node_error_, g.error);
    }
    for (int i = 0; i + 1 < nodes; ++i) {
      x(0) = std::sinh(s0_ + (i + 0.5) * ds_);
      const double exact = gamma_phi(phi, f, x, nu, sigma, inner_radius, opt).value;
      interp_error_ = std::max(interp_error_, std::abs(exact - at_s(s0_ + (i + 0.5) * ds_)));
    }
  }

  double operator()(double x) const { return at_s(std::asinh(x)); }
  /// Bound on |table - gamma_phi| inside the range.
  double error() const { return node_error_ + interp_error_; }
  double lo() const { return std::sinh(s0_); }
  double hi() const { return std::sinh(s1_); }

 private:
  double at_s(double s) const {
    const int n = static_cast<int>(values_.size());
    const double pos = std::clamp((s - s0_) / ds_, 0.0, n - 1.0);
    const int i = std::min(static_cast<int>(pos), n - 2);
    const double t = pos - i;
    auto y = [&](int k) { return values_[std::clamp(k, 0, n - 1)]; };
    // Catmull-Rom on the uniform s grid.
    const double p0 = y(i - 1);
    const double p1 = y(i);
    const double p2 = y(i + 1);
    const double p3 = y(i + 2);
    return p1 + 0.5 * t *
                    (p2 - p0 +
                     t * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + t * (3.0 * (p1 - p2) + p3 - p0)));
  }

  double s0_ = 0.0;
  double s1_ = 0.0;
  double ds_ = 1.0;
  std::vector<double> values_;
  double node_error_ = 0.0;
  double interp_error_ = 0.0;
};

/// Plug-in estimate E Phi(F) - Phi(E F) with a delta-method standard error.
struct EntropyEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
  bool jackknife = false;
  /// The plug-in estimator is biased by O(1/n); the jackknife removes the
  /// leading term.
  std::string note = "plug-in bias O(1/n)";
};

inline EntropyEstimate entropy_of_values(const PhiSpec& phi, std::span<const double> fx,
                                         bool jackknife = false) {
  EntropyEstimate out;
  out.n = fx.size();
  out.jackknife = jackknife;
  if (fx.empty()) return out;
  const double n = static_cast<double>(fx.size());
  MeanAccumulator mean_f;
  MeanAccumulator mean_phi;
  for (double v : fx) {
    mean_f.add(v);
    mean_phi.add(phi(v));
  }
  const double m = mean_f.mean();
  const double sum_f = m * n;
  const double sum_phi = mean_phi.mean() * n;
  out.value = mean_phi.mean() - phi(m);
  if (fx.size() < 2) return out;
  const double slope = phi.d1(m);
  MeanAccumulator lin;
  for (double v : fx) lin.add(phi(v) - slope * v);
  out.stderr_ = lin.stderr_of_mean();
  if (jackknife) {
    double loo = 0.0;
    for (double v : fx) loo += (sum_phi - phi(v)) / (n - 1.0) - phi((sum_f - v) / (n - 1.0));
    out.value = n * out.value - (n - 1.0) * loo / n;
    out.note = "jackknife bias corrected";
  }
  return out;
}

inline std::vector<double> evaluate(const TestFunction& f, std::span<const Vec> states) {
  std::vector<double> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out[i] = f(states[i]);
  return out;
}

/// Ent_{P_T}^Phi(f) from the terminal states of an ensemble started at one point.
inline EntropyEstimate semigroup_entropy(const PhiSpec& phi, const TestFunction& f,
                                         std::span<const Vec> states, bool jackknife = false) {
  const auto fx = evaluate(f, states);
  return entropy_of_values(phi, fx, jackknife);
}

inline EntropyEstimate semigroup_entropy(const PhiSpec& phi, const TestFunction& f,
                                         const TrajectoryEnsemble& ens, bool jackknife = false) {
  return semigroup_entropy(phi, f, ens.terminal, jackknife);
}

/// P_t f at fixed states, by inner Euler paths. Inner path j drives every state
/// with the same noise (additive noise only), and the inner paths are split
/// into groups for a jackknife over the inner sample.
class SemigroupValues {
 public:
  SemigroupValues(std::vector<double> times, std::size_t n_states, std::size_t n_inner, int groups)
      : times_(std::move(times)),
        n_states_(n_states),
        n_inner_(n_inner),
        groups_(groups),
        sums_(times_.size() * n_states * static_cast<std::size_t>(groups), 0.0) {}

  const std::vector<double>& times() const { return times_; }
  std::size_t n_states() const { return n_states_; }
  std::size_t n_inner() const { return n_inner_; }
  int groups() const { return groups_; }

  double& sum(std::size_t k, std::size_t i, int g) {
    return sums_[(k * n_states_ + i) * static_cast<std::size_t>(groups_) + static_cast<std::size_t>(g)];
  }
  double sum(std::size_t k, std::size_t i, int g) const {
    return sums_[(k * n_states_ + i) * static_cast<std::size_t>(groups_) + static_cast<std::size_t>(g)];
  }
  std::size_t group_size(int g) const {
    const auto G = static_cast<std::size_t>(groups_);
    return n_inner_ / G + (static_cast<std::size_t>(g) < n_inner_ % G ? 1 : 0);
  }

  /// P_t f(x_i) at times()[k], leaving out inner group `skip` (-1 keeps all).
  std::vector<double> values(std::size_t k, int skip = -1) const {
    std::vector<double> out(n_states_, 0.0);
    std::size_t count = 0;
    for (int g = 0; g < groups_; ++g)
      if (g != skip) count += group_size(g);
    for (std::size_t i = 0; i < n_states_; ++i) {
      double s = 0.0;
      for (int g = 0; g < groups_; ++g)
        if (g != skip) s += sum(k, i, g);
      out[i] = count > 0 ? s / static_cast<double>(count) : 0.0;
    }
    return out;
  }

  /// Ent_mu(P_t f) with mu the empirical measure of the states. The value is
  /// jackknifed over inner groups (removes the O(1/n_inner) bias of Phi of an
  /// average); the error adds the outer delta-method term and the inner
  /// jackknife spread, which sees the correlation from the shared noise.
  EntropyEstimate entropy(const PhiSpec& phi, std::size_t k) const {
    const auto all = values(k);
    EntropyEstimate out = entropy_of_values(phi, all);
    if (groups_ < 2 || n_inner_ < static_cast<std::size_t>(groups_)) return out;
    const double G = groups_;
    MeanAccumulator loo;
    std::vector<double> parts;
    for (int g = 0; g < groups_; ++g) {
      const auto v = values(k, g);
      parts.push_back(entropy_of_values(phi, v).value);
      loo.add(parts.back());
    }
    double ss = 0.0;
    for (double e : parts) ss += (e - loo.mean()) * (e - loo.mean());
    const double inner_var = (G - 1.0) / G * ss;
    out.value = G * out.value - (G - 1.0) * loo.mean();
    out.stderr_ = std::sqrt(out.stderr_ * out.stderr_ + inner_var);
    out.jackknife = true;
    out.note = "jackknife over inner groups";
    return out;
  }

 private:
  std::vector<double> times_;
  std::size_t n_states_;
  std::size_t n_inner_;
  int groups_;
  std::vector<double> sums_;
};

inline SemigroupValues semigroup_values(const TestFunction& f, const CoefficientField& c,
                                        const NoiseIncrementPlan& plan, std::span<const Vec> states,
                                        std::span<const double> times, double dt, std::size_t n_inner,
                                        std::uint64_t seed, const WorkerPool* pool = nullptr,
                                        int groups = 20) {
  if (!c.additive()) throw NotAdditiveNoise("common-noise semigroup needs additive noise");
  require(groups >= 1, "need at least one inner group");
  require(std::is_sorted(times.begin(), times.end()) && (times.empty() || times.front() >= 0.0),
          "times must be sorted and non-negative");
  detail::check_step(c, dt);
  const double t_max = times.empty() ? 0.0 : times.back();
  const std::size_t n_steps = detail::step_count(t_max, dt);
  const double h = n_steps > 0 ? t_max / static_cast<double>(n_steps) : dt;
  std::vector<std::size_t> at;
  std::vector<double> grid_times;
  for (double t : times) {
    at.push_back(n_steps > 0 ? static_cast<std::size_t>(std::llround(t / h)) : 0);
    grid_times.push_back(static_cast<double>(at.back()) * h);
  }
  SemigroupValues out(grid_times, states.size(), n_inner, groups);
  constexpr std::size_t kBlock = 256;
  const std::size_t n_blocks = (states.size() + kBlock - 1) / kBlock;
  auto run_block = [&](std::size_t b) {
    const std::size_t lo = b * kBlock;
    const std::size_t hi = std::min(states.size(), lo + kBlock);
    std::vector<Vec> xs(hi - lo);
    StepNoise noise;
    for (std::size_t j = 0; j < n_inner; ++j) {
      const int g = static_cast<int>(j % static_cast<std::size_t>(groups));
      Stream rng(seed, j);
      for (std::size_t i = lo; i < hi; ++i) xs[i - lo] = states[i];
      std::size_t next = 0;
      auto record = [&](std::size_t step) {
        while (next < at.size() && at[next] == step) {
          for (std::size_t i = lo; i < hi; ++i) out.sum(next, i, g) += f(xs[i - lo]);
          ++next;
        }
      };
      record(0);
      for (std::size_t s = 1; s <= n_steps && next < at.size(); ++s) {
        detail::euler_step(c, plan, h, rng, std::span<Vec>(xs), noise);
        record(s);
      }
    }
  };
  const WorkerPool serial(1);
  (pool ? *pool : serial).for_each(n_blocks, run_block);
  return out;
}

/// n log-spaced times in [0.1 / rate, 4 / rate].
inline std::vector<double> decay_checkpoints(double rate, int n = 8) {
  require(rate > 0.0 && n >= 1, "need rate > 0 and n >= 1");
  std::vector<double> out;
  const double lo = std::log(0.1 / rate);
  const double hi = std::log(4.0 / rate);
  for (int k = 0; k < n; ++k) out.push_back(std::exp(n == 1 ? hi : lo + (hi - lo) * k / (n - 1)));
  return out;
}

struct DecayPoint {
  double t = 0.0;
  double entropy = 0.0;
  double stderr_ = 0.0;
  double envelope = 0.0;
  double margin = 0.0;  // envelope * (1 + slack) + 3 stderr - entropy
  bool below = true;
};

struct DecayCheck {
  double rate = 0.0;
  double slack = 0.0;
  EntropyEstimate ent0;
  std::vector<DecayPoint> points;
  bool pass = true;
};

/// Ent_mu(P_t f) <= Ent_mu(f) e^(-rate t) (1 + slack), up to three combined
/// standard errors. `f_mu` holds f at the same states as `sv`.
inline DecayCheck check_decay(const PhiSpec& phi, std::span<const double> f_mu,
                              const SemigroupValues& sv, double rate, double slack = 0.15) {
  DecayCheck out;
  out.rate = rate;
  out.slack = slack;
  out.ent0 = entropy_of_values(phi, f_mu);
  for (std::size_t k = 0; k < sv.times().size(); ++k) {
    DecayPoint p;
    p.t = sv.times()[k];
    const auto e = sv.entropy(phi, k);
    p.entropy = e.value;
    const double decay = std::exp(-rate * p.t) * (1.0 + slack);
    p.envelope = out.ent0.value * std::exp(-rate * p.t);
    p.stderr_ = std::hypot(e.stderr_, decay * out.ent0.stderr_);
    p.margin = out.ent0.value * decay + 3.0 * p.stderr_ - p.entropy;
    p.below = p.margin >= 0.0;
    out.pass = out.pass && p.below;
    out.points.push_back(p);
  }
  return out;
}

/// Ent <= C * mean Gamma, tested with the joint linearisation
/// Var(Phi(f) - Phi'(m) f - C Gamma) / n.
struct BoundCheck {
  double entropy = 0.0;
  double entropy_stderr = 0.0;
  double gamma_mean = 0.0;
  double gamma_stderr = 0.0;
  double gamma_quadrature_error = 0.0;
  double constant = 0.0;
  double bound = 0.0;
  double joint_stderr = 0.0;
  double margin = 0.0;  // bound - entropy
  bool holds = true;
};

inline BoundCheck check_entropy_bound(const PhiSpec& phi, std::span<const double> fx,
                                      std::span<const double> gamma, double constant,
                                      double gamma_error = 0.0) {
  require(fx.size() == gamma.size(), "one Gamma value per state");
  BoundCheck out;
  out.constant = constant;
  if (fx.empty()) return out;
  const auto ent = entropy_of_values(phi, fx);
  out.entropy = ent.value;
  out.entropy_stderr = ent.stderr_;
  MeanAccumulator g;
  for (double v : gamma) g.add(v);
  out.gamma_mean = g.mean();
  out.gamma_stderr = g.stderr_of_mean();
  out.gamma_quadrature_error = gamma_error;
  out.bound = constant * out.gamma_mean;
  double m = 0.0;
  for (double v : fx) m += v;
  m /= static_cast<double>(fx.size());
  const double slope = phi.d1(m);
  MeanAccumulator joint;
  for (std::size_t i = 0; i < fx.size(); ++i)
    joint.add(phi(fx[i]) - slope * fx[i] - constant * gamma[i]);
  out.joint_stderr = joint.stderr_of_mean() + constant * gamma_error;
  out.margin = out.bound - out.entropy;
  out.holds = out.entropy <= out.bound + 3.0 * out.joint_stderr;
  return out;
}

/// Gamma at every state: tabulated for d = 1, direct otherwise.
inline std::vector<double> gamma_at_states(const PhiSpec& phi, const TestFunction& f,
                                           std::span<const Vec> states,
                                           const RadialLevyMeasure& nu, const Mat& sigma,
                                           double* max_error = nullptr,
                                           double inner_radius = kDefaultInnerRadius,
                                           const WorkerPool& pool = WorkerPool(1),
                                           const JumpIntegralOptions& opt = {}) {
  std::vector<double> out(states.size());
  double err = 0.0;
  if (states.empty()) {
    if (max_error) *max_error = 0.0;
    return out;
  }
  if (nu.dim() == 1 && states.size() > 2000) {
    double lo = states[0](0);
    double hi = lo;
    for (const Vec& s : states) {
      lo = std::min(lo, s(0));
      hi = std::max(hi, s(0));
    }
    if (hi - lo < 1e-9) hi = lo + 1e-9;
    const GammaTable table(phi, f, nu, sigma, lo, hi, 257, inner_radius, opt);
    pool.for_each(states.size(), [&](std::size_t i) { out[i] = table(states[i](0)); });
    err = table.error();
  } else {
    std::vector<double> errs(states.size());
    pool.for_each(states.size(), [&](std::size_t i) {
      const Integral g = gamma_phi(phi, f, states[i], nu, sigma, inner_radius, opt);
      out[i] = g.value;
      errs[i] = g.error;
    });
    for (double e : errs) err = std::max(err, e);
  }
  if (max_error) *max_error = err;
  return out;
}

/// kappa2 (exp[a T] - 1) / (kappa1 a) with a = lambda2 (d + alpha) - lambda1 d;
/// T = inf gives kappa2 / (kappa1 (-a)) when a < 0.
inline double bound_constant(double lambda1, double lambda2, int d, double alpha, double kappa1,
                             double kappa2, double T) {
  require(kappa1 > 0.0 && kappa2 >= kappa1, "need 0 < kappa1 <= kappa2");
  require(alpha > 0.0 && alpha < 2.0 && d >= 1, "bad dimension or alpha");
  require(T >= 0.0, "T must be non-negative");
  const double a = lambda2 * (d + alpha) - lambda1 * d;
  if (std::isinf(T)) {
    if (!(a < 0.0))
      throw NoFiniteLimit("no finite limit constant: lambda2 (d + alpha) >= lambda1 d");
    return kappa2 / (kappa1 * (-a));
  }
  if (a == 0.0) return kappa2 * T / kappa1;
  return kappa2 * std::expm1(a * T) / (kappa1 * a);
}

/// kappa1 (lambda1 d - lambda2 (d + alpha)) / kappa2.
inline double decay_rate(double lambda1, double lambda2, int d, double alpha, double kappa1,
                         double kappa2) {
  require(kappa1 > 0.0 && kappa2 >= kappa1, "need 0 < kappa1 <= kappa2");
  const double gap = lambda1 * d - lambda2 * (d + alpha);
  if (!(gap > 0.0))
    throw NotDissipativeEnough("decay needs lambda2 (d + alpha) < lambda1 d");
  return kappa1 * gap / kappa2;
}

/// Which entropy statement covers a measure and drift.
enum class BoundRegime {
  stable,              // rho = 1: finite-time bound, limit constant and decay
  decreasing_profile,  // rho decreasing, lambda2 <= 0: as for rho = 1
  increasing_profile,  // rho increasing, lambda1 >= 0: finite-time bound only
  not_covered,
};

inline std::string to_string(BoundRegime r) {
  switch (r) {
    case BoundRegime::stable:
      return "stable";
    case BoundRegime::decreasing_profile:
      return "decreasing_profile";
    case BoundRegime::increasing_profile:
      return "increasing_profile";
    case BoundRegime::not_covered:
      return "not_covered";
  }
  return "?";
}

inline BoundRegime bound_regime(const RadialLevyMeasure& nu, double lambda1, double lambda2) {
  if (nu.rho().kind() == ProfileKind::one) return BoundRegime::stable;
  if (nu.rho().decreasing() && lambda2 <= 0.0) return BoundRegime::decreasing_profile;
  if (nu.rho().increasing() && lambda1 >= 0.0) return BoundRegime::increasing_profile;
  return BoundRegime::not_covered;
}

inline bool regime_has_decay(BoundRegime r) {
  return r == BoundRegime::stable || r == BoundRegime::decreasing_profile;
}

}  // namespace jumpent
