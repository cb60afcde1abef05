#pragma once

// Lyapunov conditions for existence of an invariant probability measure of
//
//   dX = b(X) dt + sigma1(X) dW + sigma2(X-) dL
//
// with W(x) = phi(|x|), phi(r) = int_0^r s / ((1 + s) B(s)) ds. The drift
// bracket bounds LW(x); its limsup decides conditions C1 / C2, and cases
// 1 to 4 reduce to explicit moment conditions.
//
// Limits are estimated numerically on a finite radial grid, so every verdict
// is evidence, not proof.

#include "jumpent/core.hpp"
#include "jumpent/levy_measure.hpp"
#include "jumpent/parallel.hpp"
#include "jumpent/quadrature.hpp"
#include "jumpent/rng.hpp"
#include "jumpent/sde_engine.hpp"
#include "jumpent/stats.hpp"
#include "jumpent/stochastic_kernels.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace jumpent {

/// A strictly positive C^1 function B on [0, inf).
class BSpec {
 public:
  enum class Family { power, constant, custom };

  /// B(r) = (1 + r)^theta.
  static BSpec power(double theta) {
    BSpec b;
    b.family_ = Family::power;
    b.exponent_ = theta;
    return b;
  }

  /// B(r) = c.
  static BSpec constant(double c = 1.0) {
    require(c > 0.0, "constant B must be positive");
    BSpec b;
    b.family_ = Family::constant;
    b.exponent_ = c;
    return b;
  }

  /// A general B. `inverse_diverges` states whether int_0^inf ds / B(s) is
  /// infinite; `inverse_growth` is the power p with int_r^(r+t) ds / B(s) =
  /// O(t^p) as t -> inf (1 when B is bounded below). A missing derivative
  /// is replaced by central differences.
  static BSpec custom(std::function<double(double)> fn, std::function<double(double)> derivative,
                      bool inverse_diverges, double inverse_growth = 1.0,
                      std::string name = "custom") {
    require(static_cast<bool>(fn), "custom B needs a function");
    BSpec b;
    b.family_ = Family::custom;
    b.fn_ = std::move(fn);
    b.dfn_ = std::move(derivative);
    b.diverges_ = inverse_diverges;
    b.growth_ = inverse_growth;
    b.name_ = std::move(name);
    return b;
  }

  Family family() const { return family_; }
  /// Exponent of the power family, value of the constant family.
  double parameter() const { return exponent_; }

  double operator()(double r) const {
    switch (family_) {
      case Family::power:
        return std::pow(1.0 + r, exponent_);
      case Family::constant:
        return exponent_;
      case Family::custom:
        return fn_(r);
    }
    return 0.0;
  }

  double derivative(double r) const {
    switch (family_) {
      case Family::power:
        return exponent_ * std::pow(1.0 + r, exponent_ - 1.0);
      case Family::constant:
        return 0.0;
      case Family::custom:
        if (dfn_) return dfn_(r);
        return central_difference(r);
    }
    return 0.0;
  }

  /// Whether int_0^inf ds / B(s) = inf.
  bool inverse_integral_diverges() const {
    switch (family_) {
      case Family::power:
        return exponent_ <= 1.0;
      case Family::constant:
        return true;
      case Family::custom:
        return diverges_;
    }
    return false;
  }

  /// int_a^b ds / B(s) for 0 <= a <= b < inf.
  double inverse_integral(double a, double b) const {
    if (!(b > a)) return 0.0;
    switch (family_) {
      case Family::power: {
        const double k = 1.0 - exponent_;
        const double l = std::log1p((b - a) / (1.0 + a));
        if (k == 0.0) return l;
        return std::pow(1.0 + a, k) * std::expm1(k * l) / k;
      }
      case Family::constant:
        return (b - a) / exponent_;
      case Family::custom:
        return integrate_gk([&](double s) { return 1.0 / fn_(s); }, a, b, 1e-12).value;
    }
    return 0.0;
  }

  /// Growth in t of int_r^(r+t) ds / B(s): the power and whether a log
  /// factor multiplies it.
  std::pair<double, bool> inverse_growth() const {
    switch (family_) {
      case Family::power:
        if (exponent_ < 1.0) return {1.0 - exponent_, false};
        if (exponent_ == 1.0) return {0.0, true};
        return {0.0, false};
      case Family::constant:
        return {1.0, false};
      case Family::custom:
        return {growth_, false};
    }
    return {1.0, false};
  }

  std::string name() const {
    std::ostringstream s;
    switch (family_) {
      case Family::power:
        s << "(1+r)^" << exponent_;
        break;
      case Family::constant:
        s << "constant(" << exponent_ << ")";
        break;
      case Family::custom:
        s << name_;
        break;
    }
    return s.str();
  }

  /// B > 0 at every radius and B' within 1e-4 relative of central
  /// differences.
  bool check(std::span<const double> radii) const {
    for (double r : radii) {
      const double v = (*this)(r);
      if (!(v > 0.0) || !std::isfinite(v)) return false;
      const double fd = central_difference(r);
      const double d = derivative(r);
      if (std::abs(fd - d) > 1e-4 * std::max({std::abs(d), std::abs(fd), v / (1.0 + r)}))
        return false;
    }
    return true;
  }

 private:
  double central_difference(double r) const {
    const double h = 1e-5 * (1.0 + r);
    const double lo = std::max(0.0, r - h);
    return ((*this)(r + h) - (*this)(lo)) / (r + h - lo);
  }

  Family family_ = Family::constant;
  double exponent_ = 1.0;
  std::function<double(double)> fn_;
  std::function<double(double)> dfn_;
  bool diverges_ = true;
  double growth_ = 1.0;
  std::string name_ = "custom";
};

/// phi(r) = int_0^r s / ((1 + s) B(s)) ds.
inline double phi_of_r(const BSpec& b, double r) {
  require(r >= 0.0, "phi_of_r needs r >= 0");
  if (r == 0.0) return 0.0;
  const double l = std::log1p(r);
  switch (b.family()) {
    case BSpec::Family::power: {
      // int_1^(1+r) (u^-theta - u^(-1-theta)) du
      auto e = [&](double k) { return k == 0.0 ? l : std::expm1(k * l) / k; };
      const double theta = b.parameter();
      return e(1.0 - theta) - e(-theta);
    }
    case BSpec::Family::constant:
      return (r - l) / b.parameter();
    case BSpec::Family::custom:
      return integrate_gk([&](double s) { return s / ((1.0 + s) * b(s)); }, 0.0, r, 1e-12).value;
  }
  return 0.0;
}

inline double phi_prime(const BSpec& b, double r) { return r / ((1.0 + r) * b(r)); }

inline double phi_second(const BSpec& b, double r) {
  const double v = b(r);
  return (v - r * (1.0 + r) * b.derivative(r)) / ((1.0 + r) * (1.0 + r) * v * v);
}

namespace detail {

inline double tilde_b_integrand(const BSpec& b, double r) {
  const double v = b(r);
  return (v - r * b.derivative(r)) / (2.0 * v * v * (1.0 + r));
}

}  // namespace detail

/// sup{(B(r) - r B'(r)) / (2 B(r)^2 (1 + r)) : r >= 0, |r - |x|| <= eps |sigma2(x)|}
/// by a 65-point grid and Brent refinement around the best node.
inline double tilde_B(const BSpec& b, double x_norm, double eps, double sigma2_norm) {
  require(eps > 0.0 && eps <= 1.0, "tilde_B needs eps in (0, 1]");
  require(x_norm >= 0.0 && sigma2_norm >= 0.0, "tilde_B needs non-negative norms");
  const double lo = std::max(0.0, x_norm - eps * sigma2_norm);
  const double hi = x_norm + eps * sigma2_norm;
  auto h = [&](double r) { return detail::tilde_b_integrand(b, r); };
  if (!(hi > lo)) return h(x_norm);
  constexpr int kNodes = 64;
  double best = -kInf;
  int arg = 0;
  for (int i = 0; i <= kNodes; ++i) {
    const double r = lo + (hi - lo) * i / kNodes;
    const double v = h(r);
    if (v > best) {
      best = v;
      arg = i;
    }
  }
  const double a = lo + (hi - lo) * std::max(0, arg - 1) / kNodes;
  const double c = lo + (hi - lo) * std::min(kNodes, arg + 1) / kNodes;
  const auto refined =
      boost::math::tools::brent_find_minima([&](double r) { return -h(r); }, a, c, 40);
  return std::max(best, -refined.second);
}

/// The five terms of the drift bracket at one point.
struct BracketTerms {
  /// (<b(x), x> + Tr sigma1 sigma1^*) / (B(|x|) (|x| + 1))
  double drift = 0.0;
  /// |sigma2| int_{eps < |z| <= 1} |z| nu / B(|x|)
  double mid = 0.0;
  /// -|sigma1^* x|^2 B'(|x|) / (B^2 (1 + |x|) |x|)
  double ito = 0.0;
  /// int_{|z| > eps} nu(dz) int_|x|^(|x| + |sigma2| |z|) ds / B(s)
  double tail = 0.0;
  /// |sigma2|^2 tilde_B int_{|z| <= eps} |z|^2 nu
  double small = 0.0;

  /// First term: drift, mid-size jumps and the Ito correction.
  double a() const { return drift + mid + ito; }
  /// Term (b): small jumps.
  double b() const { return small; }
  /// Term (c): large jumps.
  double c() const { return tail; }
  double total() const { return a() + b() + c(); }
};

namespace detail {

struct PointCoefficients {
  double r = 0.0;
  double drift_dot = 0.0;  // <b(x), x> + Tr sigma1 sigma1^*
  double sigma1_sq = 0.0;  // |sigma1^* x|^2
  double s2 = 0.0;         // |sigma2(x)|
};

inline PointCoefficients point_coefficients(const CoefficientField& c, const Vec& x) {
  PointCoefficients p;
  p.r = x.norm();
  p.drift_dot = c.drift ? c.drift(x).dot(x) : 0.0;
  if (c.sigma1) {
    const Mat s1 = c.sigma1(x);
    p.drift_dot += (s1 * s1.transpose()).trace();
    p.sigma1_sq = (s1.transpose() * x).squaredNorm();
  }
  p.s2 = operator_norm(c.jump_matrix(x));
  return p;
}

inline RadialWeight tail_weight(const BSpec& b, double r, double s2) {
  const auto [growth, log_factor] = b.inverse_growth();
  return RadialWeight::general([&b, r, s2](double rho) { return b.inverse_integral(r, r + s2 * rho); },
                               growth, log_factor);
}

inline constexpr double kBracketTol = 1e-11;

}  // namespace detail

/// Term-by-term evaluation of the drift bracket; the moments small_sq(eps)
/// and mid_abs(eps) are computed once.
class BracketEvaluator {
 public:
  BracketEvaluator(RadialLevyMeasure nu, BSpec b, double eps)
      : nu_(std::move(nu)), b_(std::move(b)), eps_(eps) {
    require(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
    small_sq_ = moment_integral(nu_, Moment::small_sq(eps));
    mid_abs_ = eps < 1.0 ? moment_integral(nu_, Moment::mid_abs(eps)) : 0.0;
  }

  const RadialLevyMeasure& measure() const { return nu_; }
  const BSpec& b() const { return b_; }
  double eps() const { return eps_; }
  double small_sq() const { return small_sq_; }
  double mid_abs() const { return mid_abs_; }

  BracketTerms terms(const CoefficientField& c, const Vec& x) const {
    const auto p = detail::point_coefficients(c, x);
    require(p.r > 0.0, "the bracket is evaluated away from the origin");
    const double bv = b_(p.r);
    BracketTerms t;
    t.drift = p.drift_dot / (bv * (p.r + 1.0));
    t.ito = p.sigma1_sq == 0.0
                ? 0.0
                : -p.sigma1_sq * b_.derivative(p.r) / (bv * bv * (1.0 + p.r) * p.r);
    if (p.s2 > 0.0) {
      t.mid = p.s2 * mid_abs_ / bv;
      t.small = p.s2 * p.s2 * tilde_B(b_, p.r, eps_, p.s2) * small_sq_;
      t.tail = radial_integral(nu_, eps_, kInf, detail::tail_weight(b_, p.r, p.s2),
                               detail::kBracketTol)
                   .value;
    }
    return t;
  }

 private:
  RadialLevyMeasure nu_;
  BSpec b_;
  double eps_;
  double small_sq_ = 0.0;
  double mid_abs_ = 0.0;
};

/// The drift bracket at x in one pass: all jump terms are integrated against
/// nu together, over (0, eps] and (eps, inf).
inline double c1_bracket(const CoefficientField& c, const RadialLevyMeasure& nu, const BSpec& b,
                         double eps, const Vec& x) {
  require(eps > 0.0 && eps <= 1.0, "eps must lie in (0, 1]");
  const auto p = detail::point_coefficients(c, x);
  require(p.r > 0.0, "the bracket is evaluated away from the origin");
  const double bv = b(p.r);
  double out = p.drift_dot / (bv * (p.r + 1.0));
  if (p.sigma1_sq != 0.0) out -= p.sigma1_sq * b.derivative(p.r) / (bv * bv * (1.0 + p.r) * p.r);
  if (p.s2 == 0.0) return out;
  const double small_factor = p.s2 * p.s2 * tilde_B(b, p.r, eps, p.s2);
  out += radial_integral(nu, 0.0, eps,
                         RadialWeight::general([&](double rho) { return small_factor * rho * rho; }),
                         detail::kBracketTol)
             .value;
  const auto [growth, log_factor] = b.inverse_growth();
  const double r = p.r;
  const double s2 = p.s2;
  out += radial_integral(nu, eps, kInf,
                         RadialWeight::general(
                             [&](double rho) {
                               const double mid = rho <= 1.0 ? s2 * rho / bv : 0.0;
                               return mid + b.inverse_integral(r, r + s2 * rho);
                             },
                             growth, log_factor),
                         detail::kBracketTol)
             .value;
  return out;
}

/// Directions along which coefficient fields are probed: +-1 in d = 1,
/// otherwise the 2d signed axes and `extra` random directions.
inline std::vector<Vec> probe_directions(int dim, int extra = 32, std::uint64_t seed = 0) {
  std::vector<Vec> dirs;
  for (int k = 0; k < dim; ++k) {
    Vec e = zeros(dim);
    e(k) = 1.0;
    dirs.push_back(e);
    dirs.push_back(-e);
  }
  if (dim > 1) {
    for (int i = 0; i < extra; ++i) {
      Stream rng(seed, static_cast<std::uint64_t>(i));
      dirs.push_back(rng.direction(dim));
    }
  }
  return dirs;
}

/// Log-spaced radii on [r_min, r_max].
struct RadialGrid {
  double r_min = 1.0;
  double r_max = 1e5;
  int points = 200;
  int extra_directions = 32;
  std::uint64_t direction_seed = 0;

  std::vector<double> radii() const {
    require(r_min > 0.0 && r_max > r_min && points >= 10, "radial grid needs 0 < r_min < r_max, >= 10 points");
    std::vector<double> r(static_cast<std::size_t>(points));
    const double a = std::log(r_min);
    const double b = std::log(r_max);
    for (int i = 0; i < points; ++i) r[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (points - 1));
    r.back() = r_max;
    return r;
  }

  RadialGrid refined(int factor) const {
    RadialGrid g = *this;
    g.points = (points - 1) * factor + 1;
    return g;
  }
};

/// Limsup of a sampled profile y(r) as r -> inf: the maximum over the outer
/// 20% of the grid, raised to the value extrapolated one decade further
/// along the fitted slope in log r.
struct LimsupEstimate {
  double value = 0.0;
  double outer_max = 0.0;
  double last = 0.0;
  /// dy / d log r over the outer window.
  double slope = 0.0;
  /// d log|y| / d log r over the outer window (0 when y changes sign).
  double log_slope = 0.0;
  double monotone_violation = 0.0;
  double tolerance = 0.0;
  bool monotone = true;
  /// y < 0 and |y| grows like a power: evidence for limsup = -inf.
  bool minus_infinity = false;
  /// |y| decays like a power: evidence for a zero limit.
  bool vanishes = false;
  /// y > 0 and grows like a power.
  bool plus_infinity = false;
};

namespace detail {

inline double fit_slope(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

inline constexpr double kPowerSlope = 0.05;

}  // namespace detail

inline LimsupEstimate estimate_limsup(std::span<const double> radii, std::span<const double> y) {
  require(radii.size() == y.size() && radii.size() >= 10, "limsup needs >= 10 grid values");
  const std::size_t n = radii.size();
  const std::size_t m = std::max<std::size_t>(3, (n + 4) / 5);
  const auto r = radii.subspan(n - m);
  const auto v = y.subspan(n - m);
  LimsupEstimate e;
  std::vector<double> lr(m);
  for (std::size_t i = 0; i < m; ++i) lr[i] = std::log(r[i]);
  e.outer_max = *std::max_element(v.begin(), v.end());
  e.last = v.back();
  e.slope = detail::fit_slope(lr, v);
  e.value = std::max(e.outer_max, e.last + e.slope * std::log(10.0));

  double max_abs = 0.0;
  for (double x : v) max_abs = std::max(max_abs, std::abs(x));
  e.tolerance = 1e-3 * (1.0 + max_abs);
  double up = 0.0;    // worst rise, against a nonincreasing profile
  double down = 0.0;  // worst fall, against a nondecreasing profile
  double run_min = v[0];
  double run_max = v[0];
  for (std::size_t i = 1; i < m; ++i) {
    up = std::max(up, v[i] - run_min);
    down = std::max(down, run_max - v[i]);
    run_min = std::min(run_min, v[i]);
    run_max = std::max(run_max, v[i]);
  }
  e.monotone_violation = std::min(up, down);
  e.monotone = e.monotone_violation <= e.tolerance;

  const bool all_neg = std::all_of(v.begin(), v.end(), [](double x) { return x < 0.0; });
  const bool all_pos = std::all_of(v.begin(), v.end(), [](double x) { return x > 0.0; });
  if (all_neg || all_pos) {
    std::vector<double> la(m);
    for (std::size_t i = 0; i < m; ++i) la[i] = std::log(std::abs(v[i]));
    e.log_slope = detail::fit_slope(lr, la);
    e.minus_infinity = all_neg && e.log_slope > detail::kPowerSlope && up <= e.tolerance;
    e.plus_infinity = all_pos && e.log_slope > detail::kPowerSlope && down <= e.tolerance;
    e.vanishes = e.log_slope < -detail::kPowerSlope;
  } else if (max_abs == 0.0) {
    e.vanishes = true;
  }
  if (e.vanishes) e.value = all_neg ? std::min(e.value, 0.0) : 0.0;
  if (e.plus_infinity) e.value = kInf;
  return e;
}

/// Per-radius maximum of fn over the probe directions.
inline std::vector<double> radial_profile(std::span<const double> radii,
                                          const std::vector<Vec>& dirs,
                                          const std::function<double(const Vec&)>& fn,
                                          const WorkerPool& pool = WorkerPool(1)) {
  std::vector<double> out(radii.size(), -kInf);
  pool.for_each(radii.size(), [&](std::size_t i) {
    double best = -kInf;
    for (const Vec& d : dirs) best = std::max(best, fn(radii[i] * d));
    out[i] = best;
  });
  return out;
}

struct IntegralDiagnostic {
  std::string name;
  double value = 0.0;
  bool finite = true;
};

/// The check of one case: its explicit conditions and the drift
/// bracket with the B that case calls for.
struct CaseCheck {
  bool applicable = false;
  bool conditions = false;
  bool case_bracket = false;
  bool holds = false;
  std::string b_name;
  double eps = 0.0;
  double bracket_limsup = 0.0;
  bool bracket_minus_infinity = false;
  std::string note;
};

struct AnalysisReport {
  std::vector<double> radii;
  std::vector<double> bracket;
  std::string b_name;
  double eps = 0.0;
  LimsupEstimate a_eps;
  bool inverse_integral_diverges = false;
  bool c1_holds = false;
  bool c2_holds = false;
  /// "C1", "C2" or "none"; C1 is recorded when both apply.
  std::string theorem_condition = "none";

  double theta = 0.0;
  bool theta_inferred = false;
  double D = 0.0;
  bool D_minus_infinity = false;
  double Theta = 0.0;
  bool Theta_finite = true;
  bool sigma2_bounded = false;
  std::array<CaseCheck, 4> cases{};
  bool none = true;
  std::vector<IntegralDiagnostic> integrals;
  std::string verdict;
};

namespace detail {

inline IntegralDiagnostic moment_diagnostic(const RadialLevyMeasure& nu, const Moment& m,
                                            std::string name) {
  try {
    return {std::move(name), moment_integral(nu, m), true};
  } catch (const DivergentIntegral&) {
    return {std::move(name), kInf, false};
  }
}

inline LimsupEstimate bracket_limsup(const CoefficientField& c, const BracketEvaluator& eval,
                                     std::span<const double> radii, const std::vector<Vec>& dirs,
                                     const WorkerPool& pool, std::vector<double>* profile = nullptr) {
  auto y = radial_profile(radii, dirs, [&](const Vec& x) { return eval.terms(c, x).total(); }, pool);
  auto e = estimate_limsup(radii, y);
  if (profile) *profile = std::move(y);
  return e;
}

inline void check_case_bracket(CaseCheck& cc, const CoefficientField& c, const RadialLevyMeasure& nu,
                               const BSpec& b, double eps, bool need_minus_infinity,
                               std::span<const double> radii, const std::vector<Vec>& dirs,
                               const WorkerPool& pool) {
  cc.b_name = b.name();
  cc.eps = eps;
  try {
    const BracketEvaluator eval(nu, b, eps);
    const auto e = bracket_limsup(c, eval, radii, dirs, pool);
    cc.bracket_limsup = e.value;
    cc.bracket_minus_infinity = e.minus_infinity;
    cc.case_bracket = need_minus_infinity
                           ? e.minus_infinity
                           : (e.minus_infinity || e.value < 0.0) && b.inverse_integral_diverges();
  } catch (const DivergentIntegral& err) {
    cc.case_bracket = false;
    cc.note += std::string(cc.note.empty() ? "" : "; ") + err.what();
  }
}

/// Growth exponent of -(<b(x), x> + Tr) minus one over the outer grid,
/// rounded to 1e-3.
inline std::optional<double> infer_theta(std::span<const double> radii, std::span<const double> y) {
  const std::size_t n = radii.size();
  const std::size_t m = std::max<std::size_t>(3, (n + 4) / 5);
  std::vector<double> lr;
  std::vector<double> la;
  for (std::size_t i = n - m; i < n; ++i) {
    if (!(y[i] < 0.0)) return std::nullopt;
    lr.push_back(std::log(radii[i]));
    la.push_back(std::log(-y[i]));
  }
  return std::round((fit_slope(lr, la) - 1.0) * 1000.0) / 1000.0;
}

inline double case2_lhs(const RadialLevyMeasure& nu, double eps, double big_theta) {
  const double et = eps * big_theta;
  double lhs = 0.0;
  if (big_theta > 0.0) {
    lhs += eps * eps * big_theta * big_theta * moment_integral(nu, Moment::small_sq(eps)) /
           (2.0 * (1.0 - et) * (1.0 - et));
    if (eps < 1.0) lhs += big_theta * moment_integral(nu, Moment::mid_abs(eps));
    lhs += moment_integral(nu, Moment::tail_log(eps, et));
  }
  return lhs;
}

}  // namespace detail

inline std::string to_string(const AnalysisReport& r) { return r.verdict; }

/// Estimates A_eps for the given B and eps, and checks cases 1 to 4
/// for the given theta (inferred from the growth of <b(x), x> when absent).
/// sigma1 is taken as zero unless the coefficient field sets it.
inline AnalysisReport classify(const CoefficientField& c, const RadialLevyMeasure& nu, const BSpec& b,
                               double eps, const RadialGrid& grid = {},
                               std::optional<double> theta = std::nullopt,
                               const WorkerPool& pool = WorkerPool(1)) {
  require(c.dim == nu.dim(), "coefficients and measure disagree on dimension");
  require(grid.r_max >= 1e4, "the radial grid must reach |x| >= 1e4");
  AnalysisReport rep;
  rep.radii = grid.radii();
  const auto dirs = probe_directions(c.dim, grid.extra_directions, grid.direction_seed);
  if (!b.check(rep.radii)) throw InvalidArgument("B must be positive with a consistent derivative");

  // Conditions C1 / C2 with the caller's B.
  rep.b_name = b.name();
  rep.eps = eps;
  const BracketEvaluator eval(nu, b, eps);
  rep.a_eps = detail::bracket_limsup(c, eval, rep.radii, dirs, pool, &rep.bracket);
  if (!rep.a_eps.monotone)
    throw InconclusiveLimit("bracket is not monotone on the outer grid (violation " +
                            std::to_string(rep.a_eps.monotone_violation) + ")");
  rep.inverse_integral_diverges = b.inverse_integral_diverges();
  rep.c1_holds = rep.a_eps.minus_infinity;
  rep.c2_holds = (rep.a_eps.minus_infinity || rep.a_eps.value < 0.0) && rep.inverse_integral_diverges;
  rep.theorem_condition = rep.c1_holds ? "C1" : (rep.c2_holds ? "C2" : "none");

  // Cases 1 to 4.
  const auto drift_dot = radial_profile(rep.radii, dirs, [&](const Vec& x) {
    return detail::point_coefficients(c, x).drift_dot;
  }, pool);
  if (theta) {
    rep.theta = *theta;
  } else {
    rep.theta = detail::infer_theta(rep.radii, drift_dot).value_or(1.0);
    rep.theta_inferred = true;
  }
  const double th = rep.theta;
  const auto d_est = estimate_limsup(rep.radii, radial_profile(rep.radii, dirs, [&](const Vec& x) {
    const auto p = detail::point_coefficients(c, x);
    return p.drift_dot / std::pow(1.0 + p.r, 1.0 + th) -
           th * p.sigma1_sq / (p.r * std::pow(1.0 + p.r, th + 2.0));
  }, pool));
  rep.D = d_est.value;
  rep.D_minus_infinity = d_est.minus_infinity;
  const auto big_theta = estimate_limsup(rep.radii, radial_profile(rep.radii, dirs, [&](const Vec& x) {
    return operator_norm(c.jump_matrix(x)) / x.norm();
  }, pool));
  rep.Theta = big_theta.value;
  rep.Theta_finite = !big_theta.plus_infinity;
  const auto s2 = estimate_limsup(rep.radii, radial_profile(rep.radii, dirs, [&](const Vec& x) {
    return operator_norm(c.jump_matrix(x));
  }, pool));
  rep.sigma2_bounded = !s2.plus_infinity && s2.log_slope <= 0.01;

  rep.integrals.push_back(detail::moment_diagnostic(nu, Moment::small_sq(eps), "small_sq(eps)"));
  rep.integrals.push_back(detail::moment_diagnostic(nu, Moment::tail_mass(eps), "tail_mass(eps)"));
  const bool negative_d = rep.D < 0.0;
  const double minus_d = rep.D_minus_infinity ? kInf : -rep.D;

  // (1) theta > 1, B = (1 + r)^delta with delta = (1 + min(theta, 2)) / 2.
  {
    CaseCheck& cc = rep.cases[0];
    cc.applicable = th > 1.0;
    if (cc.applicable) {
      cc.conditions = negative_d && rep.Theta_finite;
      const double delta = 0.5 * (1.0 + std::min(th, 2.0));
      const double e = rep.Theta > 0.0 ? std::min(1.0, 0.5 / rep.Theta) : 1.0;
      detail::check_case_bracket(cc, c, nu, BSpec::power(delta), e, true, rep.radii, dirs, pool);
    }
  }
  // (2) theta = 1, finite log moment and the epsilon inequality for some eps.
  {
    CaseCheck& cc = rep.cases[1];
    cc.applicable = th == 1.0;
    const auto log_moment = detail::moment_diagnostic(nu, Moment::tail_log(1.0, 1.0), "tail_log(1,1)");
    rep.integrals.push_back(log_moment);
    if (cc.applicable) {
      const double eps_max = rep.Theta > 0.0 ? std::min(1.0, 1.0 / rep.Theta) : 1.0;
      const bool open_end = rep.Theta * eps_max >= 1.0;
      double best = kInf;
      double best_eps = 0.0;
      constexpr int kSearch = 40;
      for (int k = 0; k < kSearch && rep.Theta_finite && log_moment.finite; ++k) {
        double e = eps_max * std::pow(10.0, -4.0 * k / (kSearch - 1));
        if (open_end && k == 0) e *= 1.0 - 1e-6;
        double lhs = kInf;
        try {
          lhs = detail::case2_lhs(nu, e, rep.Theta);
        } catch (const DivergentIntegral&) {
        }
        if (lhs < best) {
          best = lhs;
          best_eps = e;
        }
      }
      cc.conditions = negative_d && rep.Theta_finite && log_moment.finite && best < minus_d;
      std::ostringstream note;
      note << "epsilon inequality left side " << best << " at eps " << best_eps;
      cc.note = note.str();
      if (best_eps > 0.0)
        detail::check_case_bracket(cc, c, nu, BSpec::power(1.0), best_eps, false, rep.radii, dirs, pool);
    }
  }
  // (3) theta in (0, 1), bounded sigma2, int_{|z|>=1} |z|^(1-theta) nu < inf.
  {
    CaseCheck& cc = rep.cases[2];
    cc.applicable = th > 0.0 && th < 1.0;
    if (cc.applicable) {
      const auto m = detail::moment_diagnostic(nu, Moment::tail_power(1.0, 1.0 - th), "tail_power(1,1-theta)");
      rep.integrals.push_back(m);
      cc.conditions = negative_d && rep.sigma2_bounded && m.finite;
      detail::check_case_bracket(cc, c, nu, BSpec::power(th), 1.0, false, rep.radii, dirs, pool);
    }
  }
  // (4) theta < 1, int_{|z|>=1} |z|^(1+theta^-) nu < inf and the growth inequality.
  {
    CaseCheck& cc = rep.cases[3];
    cc.applicable = th < 1.0;
    if (cc.applicable) {
      const auto m = detail::moment_diagnostic(nu, Moment::tail_power(1.0, 1.0 + std::max(0.0, -th)),
                                               "tail_power(1,1+theta^-)");
      const auto first = detail::moment_diagnostic(nu, Moment::tail_power(1.0, 1.0), "tail_power(1,1)");
      rep.integrals.push_back(m);
      if (th < 0.0) rep.integrals.push_back(first);
      if (m.finite && first.finite) {
        const auto ratio = estimate_limsup(rep.radii, radial_profile(rep.radii, dirs, [&](const Vec& x) {
          return operator_norm(c.jump_matrix(x)) / std::pow(x.norm(), th);
        }, pool));
        const double lhs_growth = ratio.value * first.value;
        // Integrated form of the growth inequality, recorded as a diagnostic.
        const double growth = 1.0 + std::max(0.0, -th);
        const auto lhs_int = estimate_limsup(rep.radii, radial_profile(rep.radii, dirs, [&](const Vec& x) {
          const double r = x.norm();
          const double s = operator_norm(c.jump_matrix(x));
          if (s == 0.0) return 0.0;
          return radial_integral(nu, 1.0, kInf,
                                 RadialWeight::general(
                                     [&](double rho) {
                                       return rho * s / std::min(std::pow(r, th), std::pow(r + s * rho, th));
                                     },
                                     growth),
                                 detail::kBracketTol)
              .value;
        }, pool));
        cc.conditions = negative_d && lhs_growth < minus_d;
        std::ostringstream note;
        note << "growth inequality left side " << lhs_growth << ", integrated form " << lhs_int.value;
        cc.note = note.str();
      } else {
        cc.note = "required tail moment diverges";
      }
      detail::check_case_bracket(cc, c, nu, BSpec::power(th), 1.0, false, rep.radii, dirs, pool);
    }
  }
  for (auto& cc : rep.cases) cc.holds = cc.applicable && cc.conditions && cc.case_bracket;

  const bool any_case = std::any_of(rep.cases.begin(), rep.cases.end(), [](const CaseCheck& cc) { return cc.holds; });
  rep.none = !(rep.c1_holds || rep.c2_holds || any_case);
  std::ostringstream v;
  v << "numerical evidence: ";
  if (rep.none) {
    v << "no condition met";
  } else {
    v << "theorem condition " << rep.theorem_condition;
    for (int k = 0; k < 4; ++k)
      if (rep.cases[static_cast<std::size_t>(k)].holds) v << ", case (" << k + 1 << ")";
  }
  rep.verdict = v.str();
  return rep;
}

/// Tightness of a long simulation from x0 = 0: the 90th percentile of |X|
/// at T, 2T and 4T, with every pairwise ratio within `max_ratio` up to three
/// standard errors of the log quantiles (order-statistic bounds). Heavy
/// stationary tails make the empirical 90th percentile noisy at a fixed step
/// budget; growth without bound still fails by orders of magnitude.
struct Corroboration {
  std::vector<double> times;
  std::vector<double> q90;
  std::vector<double> q90_log_stderr;
  double worst_ratio = 1.0;
  /// max over pairs of |log ratio| - log max_ratio - 3 se; tight iff <= 0.
  double worst_excess = 0.0;
  std::size_t n_paths = 0;
  std::size_t total_steps = 0;
  bool exploded = false;
  bool tight = false;
};

inline Corroboration corroborate(const CoefficientField& c, const NoiseIncrementPlan& plan, double T,
                                 double dt, std::uint64_t seed, std::size_t total_steps = 1'000'000,
                                 const WorkerPool* pool = nullptr, double max_ratio = 1.5) {
  require(T > 0.0, "corroboration needs T > 0");
  Corroboration out;
  const std::size_t steps = detail::step_count(4.0 * T, dt);
  require(steps > 0, "corroboration needs at least one step");
  out.n_paths = std::max<std::size_t>(10, total_steps / steps);
  out.total_steps = out.n_paths * steps;
  SimulationOptions opt;
  opt.checkpoints = {T, 2.0 * T, 4.0 * T};
  opt.pool = pool;
  TrajectoryEnsemble ens;
  try {
    ens = simulate(c, plan, zeros(c.dim), 4.0 * T, dt, out.n_paths, seed, opt);
  } catch (const ExplosionSuspected&) {
    out.exploded = true;
    return out;
  }
  out.times = ens.checkpoint_times;
  for (const auto& states : ens.checkpoint_states) {
    std::vector<double> r;
    r.reserve(states.size());
    for (const Vec& x : states) r.push_back(x.norm());
    out.q90.push_back(quantile(r, 0.9));
    std::sort(r.begin(), r.end());
    const double n = static_cast<double>(r.size());
    const double half = std::sqrt(n * 0.9 * 0.1);
    auto at = [&](double k) {
      const auto i = static_cast<std::size_t>(std::clamp(std::round(k), 0.0, n - 1.0));
      return std::log(std::max(r[i], 1e-300));
    };
    out.q90_log_stderr.push_back(0.5 * (at(0.9 * n + half) - at(0.9 * n - half)));
  }
  out.worst_ratio = 1.0;
  out.worst_excess = -kInf;
  for (std::size_t j = 1; j < out.q90.size(); ++j) {
    for (std::size_t i = 0; i < j; ++i) {
      const double a = std::max(out.q90[i], 1e-300);
      const double b = std::max(out.q90[j], 1e-300);
      out.worst_ratio = std::max(out.worst_ratio, std::max(a, b) / std::min(a, b));
      const double se = std::hypot(out.q90_log_stderr[i], out.q90_log_stderr[j]);
      out.worst_excess =
          std::max(out.worst_excess, std::abs(std::log(b / a)) - std::log(max_ratio) - 3.0 * se);
    }
  }
  out.tight = out.worst_excess <= 0.0;
  return out;
}

// Sharpness of the log moment condition for the jump OU process.

enum class SharpnessMode { log_finite, log_infinite };

inline std::string to_string(SharpnessMode m) {
  return m == SharpnessMode::log_finite ? "log_finite" : "log_infinite";
}

/// rho = 1 up to e, then (r / e)^alpha (ln r)^-2, so that nu has density of
/// order 1 / (|z|^d ln^2 |z|) at infinity: finite mass, infinite log moment.
inline TabulatedProfile log_infinite_profile(double alpha, int nodes = 24) {
  std::vector<double> r{1.0};
  std::vector<double> v{1.0};
  for (int k = 0; k < nodes; ++k) {
    const double x = std::exp(1.0) * std::pow(2.0, k);
    r.push_back(x);
    v.push_back(std::pow(x / std::exp(1.0), alpha) / std::pow(std::log(x), 2.0));
  }
  return TabulatedProfile(std::move(r), std::move(v));
}

struct SharpnessScenario {
  SharpnessMode mode = SharpnessMode::log_finite;
  RadialLevyMeasure measure{1, 1.5, 1.0, 1.0};
  CoefficientField coeffs;
  double burn_in = 10.0;
  double dt = 0.01;
  std::size_t n_paths = 2000;
  std::uint64_t seed = 0;
  /// Noise discretisation: exact stable increments for the stable branch,
  /// compound Poisson above `cutoff` with a Gaussian surrogate below it for
  /// the tabulated one.
  SmallJumpMode noise = SmallJumpMode::exact_stable;
  double cutoff = 0.1;
  IntegralDiagnostic log_moment;

  NoiseIncrementPlan plan() const { return NoiseIncrementPlan(measure, cutoff, noise); }
};

/// The jump OU process b(x) = -x, sigma = I in dimension one driven by the
/// alpha-stable measure (log_finite) or by the log-heavy tabulated measure
/// (log_infinite).
inline SharpnessScenario sharpness_scenario(SharpnessMode mode, double alpha = 1.5,
                                            std::uint64_t seed = 0) {
  SharpnessScenario s;
  s.mode = mode;
  s.seed = seed;
  s.coeffs = ou_field(1);
  s.measure = mode == SharpnessMode::log_finite
                  ? RadialLevyMeasure(1, alpha, 1.0, 1.0)
                  : RadialLevyMeasure(1, alpha, 1.0, 1.0,
                                      RadialProfile::tabulated(log_infinite_profile(alpha)));
  s.noise = mode == SharpnessMode::log_finite ? SmallJumpMode::exact_stable
                                              : SmallJumpMode::gaussian_surrogate;
  s.log_moment = detail::moment_diagnostic(s.measure, Moment::tail_log(1.0, 1.0), "tail_log(1,1)");
  return s;
}

struct SharpnessOutcome {
  SharpnessMode mode = SharpnessMode::log_finite;
  /// Invariant-ensemble diagnostic (log_finite only).
  std::optional<InvariantDiagnostic> diagnostic;
  std::vector<double> times;
  /// Median and 90th percentile of |X_t| over paths still inside the guard.
  std::vector<double> median_radius;
  std::vector<double> q90_radius;
  /// Fraction of paths that left the overflow guard by the final time.
  double escaped_fraction = 0.0;
  /// Pass/fail only for log_finite; log_infinite is for inspection.
  std::optional<bool> pass;
};

inline SharpnessOutcome run_sharpness(const SharpnessScenario& s, const WorkerPool* pool = nullptr) {
  SharpnessOutcome out;
  out.mode = s.mode;
  const NoiseIncrementPlan plan = s.plan();
  if (s.mode == SharpnessMode::log_finite) {
    const auto inv = invariant_ensemble(s.coeffs, plan, s.burn_in, s.n_paths, s.seed, s.dt, pool);
    out.diagnostic = inv.diagnostic;
    out.pass = inv.diagnostic.stationary;
  }
  // Paths one at a time, so a path leaving the guard does not end the others.
  const std::vector<double> times{s.burn_in / 4.0, s.burn_in / 2.0, s.burn_in, 2.0 * s.burn_in};
  std::vector<std::vector<double>> radii(times.size());
  std::vector<std::vector<double>> per_path(s.n_paths);
  std::vector<char> escaped(s.n_paths, 0);
  SimulationOptions opt;
  opt.checkpoints = times;
  const WorkerPool serial(1);
  (pool ? *pool : serial).for_each(s.n_paths, [&](std::size_t i) {
    SimulationOptions o = opt;
    o.stream_offset = (1ULL << 40) + i;
    try {
      const auto ens = simulate(s.coeffs, plan, zeros(1), times.back(), s.dt, 1, s.seed, o);
      for (const auto& st : ens.checkpoint_states) per_path[i].push_back(st[0].norm());
    } catch (const ExplosionSuspected&) {
      escaped[i] = 1;
    }
  });
  std::size_t n_escaped = 0;
  for (std::size_t i = 0; i < s.n_paths; ++i) {
    if (escaped[i]) {
      ++n_escaped;
      continue;
    }
    for (std::size_t k = 0; k < times.size(); ++k) radii[k].push_back(per_path[i][k]);
  }
  out.times = times;
  for (auto& r : radii) {
    out.median_radius.push_back(r.empty() ? kInf : quantile(r, 0.5));
    out.q90_radius.push_back(r.empty() ? kInf : quantile(r, 0.9));
  }
  out.escaped_fraction = s.n_paths ? static_cast<double>(n_escaped) / static_cast<double>(s.n_paths) : 0.0;
  return out;
}

}  // namespace jumpent
