#pragma once

// Radially dominated Levy measures
//
//   kappa(r) * rho(r) / r^(d + alpha) dz,   kappa1 <= kappa(r) <= kappa2,
//
// their moment integrals and tail samplers. The radial law of |z| has density
// S_{d-1} kappa(r) rho(r) r^(-1-alpha) dr where S_{d-1} = 2 pi^(d/2) / Gamma(d/2).

#include "jumpent/core.hpp"
#include "jumpent/quadrature.hpp"
#include "jumpent/rng.hpp"

#include <boost/math/special_functions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace jumpent {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline double sphere_area(int dim) {
  const double h = 0.5 * dim;
  return 2.0 * std::pow(std::numbers::pi, h) / std::tgamma(h);
}

enum class Monotonicity { decreasing, increasing, none };

/// Radial profile given by a table of (radius, value) pairs.
///
/// Between nodes the profile is interpolated linearly in log-log coordinates
/// (linearly in value where a node is zero), which preserves monotonicity.
/// Below the first node it is held constant. Beyond the last node it follows
/// the regularly varying model
///
///   rho(r) = rho_N * (r / r_N)^s * (ln r / ln r_N)^(-q),
///
/// with (s, q) fitted through the last three nodes; q is dropped when the fit
/// makes it negative.
class TabulatedProfile {
 public:
  TabulatedProfile(std::vector<double> radii, std::vector<double> values,
                   Monotonicity flag = Monotonicity::none)
      : r_(std::move(radii)), v_(std::move(values)), flag_(flag) {
    require(r_.size() >= 2 && r_.size() == v_.size(), "tabulated profile needs >= 2 rows");
    for (std::size_t i = 0; i < r_.size(); ++i) {
      require(r_[i] > 0.0 && std::isfinite(r_[i]), "profile radii must be positive");
      require(v_[i] >= 0.0 && std::isfinite(v_[i]), "profile values must be non-negative");
      if (i > 0) require(r_[i] > r_[i - 1], "profile radii must be strictly increasing");
      if (i > 0 && flag_ == Monotonicity::decreasing)
        require(v_[i] <= v_[i - 1], "profile flagged decreasing is not decreasing on its grid");
      if (i > 0 && flag_ == Monotonicity::increasing)
        require(v_[i] >= v_[i - 1], "profile flagged increasing is not increasing on its grid");
    }
    fit_tail();
  }

  /// Two-column text table; '#' starts a comment, commas count as whitespace.
  static TabulatedProfile load(const std::string& path, Monotonicity flag = Monotonicity::none) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot open profile table " + path);
    std::vector<double> r;
    std::vector<double> v;
    std::string line;
    while (std::getline(in, line)) {
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::replace(line.begin(), line.end(), ',', ' ');
      std::istringstream fields(line);
      double a = 0.0;
      double b = 0.0;
      if (!(fields >> a)) continue;
      if (!(fields >> b)) throw InvalidArgument("profile row needs two columns: " + line);
      r.push_back(a);
      v.push_back(b);
    }
    return TabulatedProfile(std::move(r), std::move(v), flag);
  }

  double operator()(double r) const {
    if (r <= r_.front()) return v_.front();
    if (r >= r_.back()) return tail(r);
    const auto it = std::upper_bound(r_.begin(), r_.end(), r);
    const std::size_t i = static_cast<std::size_t>(it - r_.begin()) - 1;
    return segment_value(i, r);
  }

  const std::vector<double>& radii() const { return r_; }
  const std::vector<double>& values() const { return v_; }
  Monotonicity monotonicity() const { return flag_; }

  double tail_exponent() const { return tail_s_; }
  double tail_log_power() const { return tail_q_; }
  bool tail_vanishes() const { return v_.back() == 0.0; }

  /// Snap the fitted tail exponent onto `target` when within `tol`. Used to
  /// recognise tails that are regularly varying with index exactly alpha.
  void snap_tail_exponent(double target, double tol) {
    if (std::abs(tail_s_ - target) < tol) tail_s_ = target;
  }

  /// Maximum of the profile on [a, b] within the table (interpolation is
  /// monotone between nodes so endpoint and node values suffice).
  double max_on(double a, double b) const {
    double m = std::max((*this)(a), (*this)(b));
    for (std::size_t i = 0; i < r_.size(); ++i)
      if (r_[i] > a && r_[i] < b) m = std::max(m, v_[i]);
    return m;
  }

 private:
  double segment_value(std::size_t i, double r) const {
    const double v0 = v_[i];
    const double v1 = v_[i + 1];
    if (v0 > 0.0 && v1 > 0.0) {
      const double slope = std::log(v1 / v0) / std::log(r_[i + 1] / r_[i]);
      return v0 * std::pow(r / r_[i], slope);
    }
    const double w = (r - r_[i]) / (r_[i + 1] - r_[i]);
    return v0 + w * (v1 - v0);
  }

  double tail(double r) const {
    if (tail_vanishes()) return 0.0;
    const double rn = r_.back();
    double value = v_.back() * std::pow(r / rn, tail_s_);
    if (tail_q_ != 0.0) value *= std::pow(std::log(r) / std::log(rn), -tail_q_);
    return value;
  }

  void fit_tail() {
    const std::size_t n = r_.size();
    tail_s_ = 0.0;
    tail_q_ = 0.0;
    if (v_[n - 1] == 0.0 || v_[n - 2] == 0.0) return;
    tail_s_ = std::log(v_[n - 1] / v_[n - 2]) / std::log(r_[n - 1] / r_[n - 2]);
    if (n < 3 || r_[n - 3] <= 1.0 || v_[n - 3] == 0.0) return;
    Eigen::Matrix3d a;
    Eigen::Vector3d y;
    for (int k = 0; k < 3; ++k) {
      const std::size_t i = n - 3 + static_cast<std::size_t>(k);
      const double u = std::log(r_[i]);
      a(k, 0) = 1.0;
      a(k, 1) = u;
      a(k, 2) = -std::log(u);
      y(k) = std::log(v_[i]);
    }
    const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(y);
    if (coef.allFinite() && coef(2) > 0.0) {
      tail_s_ = coef(1);
      // Exact log powers come back with rounding noise; the convergence
      // decision at q = 1 or q = 2 depends on it.
      tail_q_ = std::abs(coef(2) - std::round(coef(2))) < 1e-6 ? std::round(coef(2)) : coef(2);
    }
  }

  std::vector<double> r_;
  std::vector<double> v_;
  Monotonicity flag_;
  double tail_s_ = 0.0;
  double tail_q_ = 0.0;
};

enum class ProfileKind { one, small_jumps, large_jumps, tabulated };

/// The radial factor rho of the Levy density.
class RadialProfile {
 public:
  static RadialProfile one() { return RadialProfile(ProfileKind::one); }
  /// Indicator of (0, 1].
  static RadialProfile small_jumps() { return RadialProfile(ProfileKind::small_jumps); }
  /// Indicator of [1, inf).
  static RadialProfile large_jumps() { return RadialProfile(ProfileKind::large_jumps); }
  static RadialProfile tabulated(TabulatedProfile table) {
    RadialProfile p(ProfileKind::tabulated);
    p.table_ = std::make_shared<TabulatedProfile>(std::move(table));
    return p;
  }

  ProfileKind kind() const { return kind_; }
  bool piecewise_constant() const { return kind_ != ProfileKind::tabulated; }
  const TabulatedProfile* table() const { return table_.get(); }

  double operator()(double r) const {
    switch (kind_) {
      case ProfileKind::one:
        return 1.0;
      case ProfileKind::small_jumps:
        return r <= 1.0 ? 1.0 : 0.0;
      case ProfileKind::large_jumps:
        return r >= 1.0 ? 1.0 : 0.0;
      case ProfileKind::tabulated:
        return (*table_)(r);
    }
    return 0.0;
  }

  /// Radii outside [lower, upper] carry no mass.
  double lower() const { return kind_ == ProfileKind::large_jumps ? 1.0 : 0.0; }
  double upper() const {
    if (kind_ == ProfileKind::small_jumps) return 1.0;
    if (kind_ == ProfileKind::tabulated && table_->tail_vanishes()) return table_->radii().back();
    return kInf;
  }

  bool decreasing() const {
    return kind_ == ProfileKind::one || kind_ == ProfileKind::small_jumps ||
           (kind_ == ProfileKind::tabulated && table_->monotonicity() == Monotonicity::decreasing);
  }
  bool increasing() const {
    return kind_ == ProfileKind::one || kind_ == ProfileKind::large_jumps ||
           (kind_ == ProfileKind::tabulated && table_->monotonicity() == Monotonicity::increasing);
  }

  std::string name() const {
    switch (kind_) {
      case ProfileKind::one:
        return "one";
      case ProfileKind::small_jumps:
        return "small_jumps";
      case ProfileKind::large_jumps:
        return "large_jumps";
      case ProfileKind::tabulated:
        return "tabulated";
    }
    return "?";
  }

 private:
  explicit RadialProfile(ProfileKind kind) : kind_(kind) {}

  ProfileKind kind_;
  std::shared_ptr<TabulatedProfile> table_;
};

/// Region and weight of a moment integral.
struct Moment {
  enum class Kind { small_sq, mid_abs, tail_mass, tail_log, tail_power };
  Kind kind;
  double eps;
  double c = 1.0;  // tail_log: log(1 + c|z|)
  double p = 0.0;  // tail_power: |z|^p

  /// int_{|z| <= eps} |z|^2 nu(dz)
  static Moment small_sq(double eps) { return {Kind::small_sq, eps}; }
  /// int_{eps < |z| <= 1} |z| nu(dz)
  static Moment mid_abs(double eps) { return {Kind::mid_abs, eps}; }
  /// nu(|z| > eps)
  static Moment tail_mass(double eps) { return {Kind::tail_mass, eps}; }
  /// int_{|z| > eps} log(1 + c|z|) nu(dz)
  static Moment tail_log(double eps, double c) { return {Kind::tail_log, eps, c}; }
  /// int_{|z| > eps} |z|^p nu(dz)
  static Moment tail_power(double eps, double p) { return {Kind::tail_power, eps, 1.0, p}; }
};

enum class IntegrationMethod { automatic, closed_form, quadrature };

/// Weight g(r) of a radial integral, with its growth at infinity declared so
/// that divergence can be decided before integrating.
struct RadialWeight {
  enum class Kind { power, log1p, general };
  Kind kind = Kind::general;
  double p = 0.0;
  double c = 1.0;
  std::function<double(double)> fn;
  double growth_power = 0.0;  // g(r) = O(r^growth_power) (general kind)
  bool growth_log = false;    // an extra log factor (general kind)

  static RadialWeight power(double p) {
    RadialWeight w;
    w.kind = Kind::power;
    w.p = p;
    w.growth_power = p;
    return w;
  }
  static RadialWeight log1p(double c) {
    RadialWeight w;
    w.kind = Kind::log1p;
    w.c = c;
    w.growth_log = true;
    return w;
  }
  static RadialWeight general(std::function<double(double)> g, double growth_power = 0.0,
                              bool growth_log = false) {
    RadialWeight w;
    w.fn = std::move(g);
    w.growth_power = growth_power;
    w.growth_log = growth_log;
    return w;
  }

  double operator()(double r) const {
    switch (kind) {
      case Kind::power:
        return std::pow(r, p);
      case Kind::log1p:
        return std::log1p(c * r);
      case Kind::general:
        return fn(r);
    }
    return 0.0;
  }
};

class RadialLevyMeasure {
 public:
  RadialLevyMeasure(int dim, double alpha, double kappa1, double kappa2,
                    RadialProfile rho = RadialProfile::one())
      : dim_(dim), alpha_(alpha), kappa1_(kappa1), kappa2_(kappa2), rho_(std::move(rho)) {
    require(dim >= 1 && dim <= kMaxDim, "dimension out of range");
    require(alpha > 0.0 && alpha < 2.0, "alpha must lie in (0, 2)");
    require(kappa1 > 0.0 && kappa1 <= kappa2, "need 0 < kappa1 <= kappa2");
    if (rho_.kind() == ProfileKind::tabulated) {
      // Own a private copy so that snapping does not leak into shared profiles.
      TabulatedProfile t = *rho_.table();
      t.snap_tail_exponent(alpha_, 1e-3);
      rho_ = RadialProfile::tabulated(std::move(t));
    }
  }

  /// Density constant kappa(r) = kappa1 + (kappa2 - kappa1) m(r) with m in
  /// [0, 1]. Without a modulation kappa(r) = kappa2.
  RadialLevyMeasure with_modulation(std::function<double(double)> m) const {
    RadialLevyMeasure out = *this;
    out.modulation_ = std::make_shared<std::function<double(double)>>(std::move(m));
    return out;
  }

  int dim() const { return dim_; }
  double alpha() const { return alpha_; }
  double kappa1() const { return kappa1_; }
  double kappa2() const { return kappa2_; }
  const RadialProfile& rho() const { return rho_; }
  bool modulated() const { return static_cast<bool>(modulation_); }

  double kappa_at(double r) const {
    if (!modulation_) return kappa2_;
    const double m = std::clamp((*modulation_)(r), 0.0, 1.0);
    return kappa1_ + (kappa2_ - kappa1_) * m;
  }

  /// Lebesgue density of nu at any point with |z| = r.
  double density(double r) const {
    return kappa_at(r) * rho_(r) * std::pow(r, -static_cast<double>(dim_) - alpha_);
  }

  /// Density of the radial image measure of nu.
  double radial_density(double r) const {
    return sphere_area(dim_) * kappa_at(r) * rho_(r) * std::pow(r, -1.0 - alpha_);
  }

  /// A genuine isotropic alpha-stable Levy measure kappa |z|^(-d-alpha).
  bool is_isotropic_stable() const {
    return rho_.kind() == ProfileKind::one && kappa1_ == kappa2_ && !modulation_;
  }

  bool has_closed_form() const { return rho_.piecewise_constant() && !modulation_; }

 private:
  int dim_;
  double alpha_;
  double kappa1_;
  double kappa2_;
  RadialProfile rho_;
  std::shared_ptr<std::function<double(double)>> modulation_;
};

namespace detail {

// int_a^b r^(q-1) dr, b may be infinite (requires q < 0 then).
inline double power_segment(double a, double b, double q) {
  if (!(b > a)) return 0.0;
  if (std::isinf(b)) {
    if (q >= 0.0) throw DivergentIntegral("radial power integral diverges at infinity");
    return -std::pow(a, q) / q;
  }
  if (a == 0.0) {
    if (q <= 0.0) throw DivergentIntegral("radial power integral diverges at zero");
    return std::pow(b, q) / q;
  }
  if (q == 0.0) return std::log(b / a);
  return (std::pow(b, q) - std::pow(a, q)) / q;
}

// int_a^inf log(1 + c r) r^(-1-alpha) dr, a > 0, c >= 0.
//
// Integration by parts leaves int_a^inf r^-alpha / (1 + c r) dr, which the
// substitution t = 1 / (1 + c r) turns into c^(alpha-1) B_x(alpha, 1 - alpha)
// with x = 1 / (1 + c a). For alpha > 1 the second beta parameter is negative
// and we step it up once: B_x(a, b) = (B_x(a, b + 1) - x^a (1 - x)^b) / b when
// a + b = 1.
inline double log_tail_closed(double a, double alpha, double c) {
  if (c == 0.0) return 0.0;
  const double boundary = std::log1p(c * a) * std::pow(a, -alpha);
  double rest = 0.0;
  if (alpha == 1.0) {
    rest = c * std::log1p(1.0 / (c * a));
  } else {
    const double x = 1.0 / (1.0 + c * a);
    const double b = 1.0 - alpha;
    double inc_beta = 0.0;
    if (b > 0.0) {
      inc_beta = boost::math::beta(alpha, b, x);
    } else {
      inc_beta = (boost::math::beta(alpha, b + 1.0, x) -
                  std::pow(x, alpha) * std::pow(1.0 - x, b)) /
                 b;
    }
    rest = std::pow(c, alpha) * inc_beta;
  }
  return (boundary + rest) / alpha;
}

inline void check_region(double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InvalidRegion("moment region needs 0 < eps < inf");
}

}  // namespace detail

/// Integral of g(r) against the radial image of nu over (a, b] (b may be
/// infinite). Near zero g must vanish like r^2; at infinity the declared
/// growth of g decides convergence. abs_tol bounds the effort spent on
/// pieces whose value is negligible.
inline Integral radial_integral(const RadialLevyMeasure& nu, double a, double b,
                                const RadialWeight& g, double tol = 1e-12,
                                double abs_tol = 0.0) {
  const double alpha = nu.alpha();
  const double area = sphere_area(nu.dim());
  const RadialProfile& rho = nu.rho();
  const TabulatedProfile* table = rho.table();

  a = std::max(a, rho.lower());
  b = std::min(b, rho.upper());
  if (!(b > a)) return {};

  // Convergence at infinity.
  double table_end = kInf;
  if (std::isinf(b)) {
    if (table != nullptr) {
      table_end = table->radii().back();
      const double excess = alpha - table->tail_exponent();
      const double q = table->tail_log_power();
      const double gp = g.growth_power;
      const bool converges =
          gp < excess || (gp == excess && q > (g.growth_log ? 2.0 : 1.0));
      if (!converges)
        throw DivergentIntegral("radial integral diverges against the tabulated tail");
    } else if (!(g.growth_power < alpha)) {
      throw DivergentIntegral("radial integral diverges: weight grows like r^alpha or faster");
    }
  }

  std::vector<double> cuts{a, b};
  if (1.0 > a && 1.0 < b) cuts.push_back(1.0);
  if (table != nullptr) {
    for (double r : table->radii())
      if (r > a && r < b) cuts.push_back(r);
  }
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

  auto weight = [&](double r) { return nu.kappa_at(r) * rho(r); };
  Integral total;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i];
    const double hi = cuts[i + 1];
    if (lo == 0.0) {
      // r = hi t^(1/(2-alpha)): r^(-1-alpha) dr = hi^(-alpha) t^(-2/(2-alpha)) dt / (2-alpha).
      const double e = 2.0 - alpha;
      const double scale = std::pow(hi, e) / e;
      total += integrate_ts(
          [&](double t) {
            const double r = hi * std::pow(t, 1.0 / e);
            if (g.kind == RadialWeight::Kind::power) return std::pow(r, g.p - 2.0) * weight(r) * scale;
            // g / r^2 stays bounded; points where r^2 underflows carry no mass.
            if (r * r == 0.0) return 0.0;
            return g(r) / (r * r) * weight(r) * scale;
          },
          0.0, 1.0, tol);
    } else if (std::isinf(hi)) {
      if (table != nullptr && lo >= table_end) {
        // Regularly varying tail model in u = ln r.
        const double ub = std::log(table_end);
        const double s = table->tail_exponent();
        const double q = table->tail_log_power();
        const double vb = table->values().back();
        // log of the weight without its power part, which joins the slope.
        const double slope = s - alpha + (g.kind == RadialWeight::Kind::power ? g.p : 0.0);
        auto log_g = [&](double u) {
          switch (g.kind) {
            case RadialWeight::Kind::power:
              return g.p * ub;
            case RadialWeight::Kind::log1p: {
              const double x = std::log(g.c) + u;
              return std::log(x > 30.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
            }
            case RadialWeight::Kind::general:
              return std::log(g(std::exp(std::min(u, 700.0))));
          }
          return 0.0;
        };
        total += integrate_half_line(
            [&](double v) {
              const double u = ub + v;
              const double log_val = std::log(vb) - alpha * ub + slope * v -
                                     q * std::log1p(v / ub) + log_g(u);
              return std::exp(log_val) * nu.kappa_at(std::exp(std::min(u, 700.0)));
            },
            0.0, tol);
      } else {
        // r = lo t^(-1/alpha): r^(-1-alpha) dr = lo^(-alpha) dt / alpha.
        const double scale = std::pow(lo, -alpha) / alpha;
        total += integrate_ts(
            [&](double t) {
              const double r = std::min(lo * std::pow(t, -1.0 / alpha), 1e300);
              return g(r) * weight(r) * scale;
            },
            0.0, 1.0, tol);
      }
    } else {
      total += integrate_gk(
          [&](double u) {
            const double r = std::exp(u);
            return g(r) * weight(r) * std::exp(-alpha * u);
          },
          std::log(lo), std::log(hi), tol, 18, abs_tol / area);
    }
  }
  total.value *= area;
  total.error *= area;
  return total;
}

namespace detail {

inline double moment_closed_form(const RadialLevyMeasure& nu, const Moment& m) {
  const double alpha = nu.alpha();
  const double k = nu.kappa2() * sphere_area(nu.dim());
  const double lo = nu.rho().lower();
  const double hi = nu.rho().upper();
  auto clip = [&](double a, double b) { return std::pair{std::max(a, lo), std::min(b, hi)}; };
  switch (m.kind) {
    case Moment::Kind::small_sq: {
      auto [a, b] = clip(0.0, m.eps);
      return k * power_segment(a, b, 2.0 - alpha);
    }
    case Moment::Kind::mid_abs: {
      auto [a, b] = clip(m.eps, 1.0);
      return k * power_segment(a, b, 1.0 - alpha);
    }
    case Moment::Kind::tail_mass: {
      auto [a, b] = clip(m.eps, kInf);
      return k * power_segment(a, b, -alpha);
    }
    case Moment::Kind::tail_power: {
      auto [a, b] = clip(m.eps, kInf);
      if (std::isinf(b) && b > a && m.p >= alpha)
        throw DivergentIntegral("tail_power diverges for p >= alpha");
      return k * power_segment(a, b, m.p - alpha);
    }
    case Moment::Kind::tail_log: {
      auto [a, b] = clip(m.eps, kInf);
      if (!(b > a)) return 0.0;
      double v = log_tail_closed(a, alpha, m.c);
      if (std::isfinite(b)) v -= log_tail_closed(b, alpha, m.c);
      return k * v;
    }
  }
  return 0.0;
}

}  // namespace detail

/// Moment integrals of nu over the standard regions. Closed forms are used
/// for piecewise-constant profiles without modulation, quadrature otherwise
/// (or when requested).
inline double moment_integral(const RadialLevyMeasure& nu, const Moment& m,
                              IntegrationMethod method = IntegrationMethod::automatic) {
  detail::check_region(m.eps);
  if (m.kind == Moment::Kind::tail_log && m.c < 0.0)
    throw InvalidRegion("tail_log needs c >= 0");
  const bool closed = method == IntegrationMethod::closed_form ||
                      (method == IntegrationMethod::automatic && nu.has_closed_form());
  if (closed) {
    if (!nu.has_closed_form())
      throw InvalidArgument("closed form requires a piecewise-constant unmodulated profile");
    return detail::moment_closed_form(nu, m);
  }
  switch (m.kind) {
    case Moment::Kind::small_sq:
      return radial_integral(nu, 0.0, m.eps, RadialWeight::power(2.0)).value;
    case Moment::Kind::mid_abs:
      return radial_integral(nu, m.eps, 1.0, RadialWeight::power(1.0)).value;
    case Moment::Kind::tail_mass:
      return radial_integral(nu, m.eps, kInf, RadialWeight::power(0.0)).value;
    case Moment::Kind::tail_power:
      return radial_integral(nu, m.eps, kInf, RadialWeight::power(m.p)).value;
    case Moment::Kind::tail_log:
      if (m.c == 0.0) return 0.0;
      return radial_integral(nu, m.eps, kInf, RadialWeight::log1p(m.c)).value;
  }
  return 0.0;
}

/// Samples nu restricted to {|z| > delta}, normalised.
///
/// Radii come from an exact inverse CDF of the r^(-1-alpha) law on each
/// piece of a piecewise envelope (constant profile pieces, table segments
/// with their segment maximum, and the regularly varying tail model beyond
/// the table). The envelope uses kappa2, and a draw is accepted with
/// probability kappa(r) rho(r) / envelope(r); for unmodulated piecewise
/// constant profiles every draw is accepted, in general the acceptance rate
/// is at least kappa1 / kappa2 times the table's within-segment variation.
class TailSampler {
 public:
  TailSampler(const RadialLevyMeasure& nu, double delta) : nu_(nu), delta_(delta) {
    require(delta > 0.0, "cutoff must be positive");
    const double alpha = nu.alpha();
    const double lo = std::max(delta, nu.rho().lower());
    const double hi = nu.rho().upper();
    const double kenv = nu.kappa2() * sphere_area(nu.dim());
    if (const TabulatedProfile* t = nu.rho().table()) {
      const auto& r = t->radii();
      std::vector<double> cuts{lo};
      for (double x : r)
        if (x > lo) cuts.push_back(x);
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i];
        const double b = cuts[i + 1];
        const double env = t->max_on(a, b);
        add_piece(a, b, env, kenv * env * detail::power_segment(a, b, -alpha));
      }
      const double end = std::max(lo, r.back());
      if (!t->tail_vanishes() && std::isinf(hi)) {
        tail_excess_ = alpha - t->tail_exponent();
        tail_q_ = t->tail_log_power();
        tail_u_ = std::log(end);
        if (tail_excess_ < 0.0 || (tail_excess_ == 0.0 && tail_q_ <= 1.0))
          throw DivergentIntegral("tabulated tail has infinite mass");
        const double vb = (*t)(end);
        // Mass of the tail envelope: the model with the log factor dropped
        // when the excess is positive, the exact model otherwise.
        const double base = kenv * vb * std::pow(end, -alpha);
        tail_mass_env_ = tail_excess_ > 0.0 ? base / tail_excess_ : base * tail_u_ / (tail_q_ - 1.0);
        tail_value_end_ = vb;
        tail_end_ = end;
        if (tail_mass_env_ > 0.0) {
          pieces_.push_back({end, kInf, vb});
          cumulative_.push_back(total() + tail_mass_env_);
        }
      }
    } else if (hi > lo) {
      add_piece(lo, hi, 1.0, kenv * detail::power_segment(lo, hi, -alpha));
    }
    if (!(total() > 0.0)) throw EmptyTail("Levy measure has no mass above the cutoff");
    if (pieces_.size() == 1 && nu.rho().table() == nullptr && !nu.modulated()) {
      direct_ = true;
      direct_ta_ = std::pow(pieces_[0].a, -alpha);
      direct_tb_ = std::isinf(pieces_[0].b) ? 0.0 : std::pow(pieces_[0].b, -alpha);
      direct_exponent_ = -1.0 / alpha;
    }
  }

  /// Mass of the proposal envelope; equals nu(|z| > delta) when every draw
  /// is accepted.
  double envelope_mass() const { return total(); }

  /// Whether radii come from a single closed-form inverse CDF.
  bool direct() const { return direct_; }
  double direct_radius(double u) const {
    return std::pow(direct_ta_ - u * (direct_ta_ - direct_tb_), direct_exponent_);
  }

  double sample_radius(Stream& rng) const {
    if (direct_) return std::pow(direct_ta_ - rng.uniform() * (direct_ta_ - direct_tb_), direct_exponent_);
    const double alpha = nu_.alpha();
    for (;;) {
      const double pick = rng.uniform() * total();
      const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), pick);
      const std::size_t i =
          std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), pieces_.size() - 1);
      const Piece& piece = pieces_[i];
      double r = 0.0;
      double accept = 1.0;
      if (std::isinf(piece.b) && nu_.rho().table() != nullptr) {
        // Beyond the table, sample u = ln r.
        double u = 0.0;
        if (tail_excess_ > 0.0) {
          u = tail_u_ + rng.exponential() / tail_excess_;
          accept = std::pow(u / tail_u_, -tail_q_);
        } else {
          u = tail_u_ * std::pow(rng.uniform(), -1.0 / (tail_q_ - 1.0));
        }
        r = std::exp(std::min(u, 709.0));
        if (u > 709.0) r = kInf;
      } else {
        const double ta = std::pow(piece.a, -alpha);
        const double tb = std::isinf(piece.b) ? 0.0 : std::pow(piece.b, -alpha);
        r = std::pow(ta - rng.uniform() * (ta - tb), -1.0 / alpha);
        if (nu_.rho().table() != nullptr)
          accept = piece.envelope > 0.0 ? nu_.rho()(r) / piece.envelope : 0.0;
      }
      if (nu_.modulated()) accept *= nu_.kappa_at(r) / nu_.kappa2();
      if (accept >= 1.0 || rng.uniform() < accept) return r;
    }
  }

  Vec sample(Stream& rng) const {
    const double r = sample_radius(rng);
    return r * rng.direction(nu_.dim());
  }

 private:
  struct Piece {
    double a;
    double b;
    double envelope;
  };

  void add_piece(double a, double b, double envelope, double mass) {
    if (!(mass > 0.0)) return;
    pieces_.push_back({a, b, envelope});
    cumulative_.push_back(total() + mass);
  }

  double total() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

  RadialLevyMeasure nu_;
  double delta_;
  std::vector<Piece> pieces_;
  std::vector<double> cumulative_;
  double tail_excess_ = 0.0;
  double tail_q_ = 0.0;
  double tail_u_ = 0.0;
  double tail_mass_env_ = 0.0;
  double tail_value_end_ = 0.0;
  double tail_end_ = 0.0;
  bool direct_ = false;
  double direct_ta_ = 0.0;
  double direct_tb_ = 0.0;
  double direct_exponent_ = 0.0;
};

/// One draw from nu restricted to {|z| > delta}, normalised.
inline Vec sample_jump_above(const RadialLevyMeasure& nu, double delta, Stream& rng) {
  return TailSampler(nu, delta).sample(rng);
}

}  // namespace jumpent
