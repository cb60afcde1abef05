#pragma once

// Driving-noise increments.
//
// Stable scale convention: an isotropic alpha-stable increment over time dt
// with scale gamma has characteristic function exp(-dt gamma^alpha |xi|^alpha).
// Its Levy measure is kappa |z|^(-d-alpha) dz with
//
//   kappa = gamma^alpha C(d, alpha),
//   C(d, alpha) = alpha 2^(alpha-1) Gamma((d+alpha)/2) / (pi^(d/2) Gamma(1-alpha/2)).

#include "jumpent/core.hpp"
#include "jumpent/levy_measure.hpp"
#include "jumpent/rng.hpp"

#include <cmath>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace jumpent {

inline double stable_norming_constant(int dim, double alpha) {
  return alpha * std::pow(2.0, alpha - 1.0) * std::tgamma(0.5 * (dim + alpha)) /
         (std::pow(std::numbers::pi, 0.5 * dim) * std::tgamma(1.0 - 0.5 * alpha));
}

inline double stable_scale_from_kappa(int dim, double alpha, double kappa) {
  return std::pow(kappa / stable_norming_constant(dim, alpha), 1.0 / alpha);
}

inline double kappa_from_stable_scale(int dim, double alpha, double scale) {
  return std::pow(scale, alpha) * stable_norming_constant(dim, alpha);
}

namespace detail {

// Symmetric standard stable variate, E exp(i xi X) = exp(-|xi|^alpha)
// (Chambers-Mallows-Stuck).
inline double symmetric_stable(double alpha, Stream& rng) {
  const double v = std::numbers::pi * (rng.uniform() - 0.5);
  if (alpha == 1.0) return std::tan(v);
  const double w = rng.exponential();
  return std::sin(alpha * v) / std::pow(std::cos(v), 1.0 / alpha) *
         std::pow(std::cos((1.0 - alpha) * v) / w, (1.0 - alpha) / alpha);
}

// Positive stable variate with E exp(-s A) = exp(-s^beta), beta in (0, 1)
// (Kanter's representation).
inline double positive_stable(double beta, Stream& rng) {
  const double u = std::numbers::pi * rng.uniform();
  const double w = rng.exponential();
  return std::sin(beta * u) / std::pow(std::sin(u), 1.0 / beta) *
         std::pow(std::sin((1.0 - beta) * u) / w, (1.0 - beta) / beta);
}

// factor times a standard isotropic stable vector.
inline Vec scaled_stable(double alpha, double factor, int dim, Stream& rng) {
  Vec out(dim);
  if (dim == 1) {
    out(0) = factor * symmetric_stable(alpha, rng);
    return out;
  }
  // Subordinated Gaussian: G ~ N(0, 2 I) gives E exp(i xi sqrt(A) G) = exp(-|xi|^alpha).
  const double root = std::sqrt(positive_stable(0.5 * alpha, rng));
  for (int i = 0; i < dim; ++i) out(i) = factor * root * std::numbers::sqrt2 * rng.normal();
  return out;
}

}  // namespace detail

/// One increment over time dt of the isotropic alpha-stable process with the
/// given scale (see the convention at the top of this file).
inline Vec stable_increment(double alpha, double dt, int dim, double scale, Stream& rng) {
  require(alpha > 0.0 && alpha < 2.0, "alpha must lie in (0, 2)");
  require(dt >= 0.0, "dt must be non-negative");
  require(dim >= 1 && dim <= kMaxDim, "dimension out of range");
  if (dt == 0.0) return zeros(dim);
  return detail::scaled_stable(alpha, scale * std::pow(dt, 1.0 / alpha), dim, rng);
}

enum class SmallJumpMode { gaussian_surrogate, drop_with_compensation, exact_stable };

inline std::string to_string(SmallJumpMode m) {
  switch (m) {
    case SmallJumpMode::gaussian_surrogate:
      return "gaussian_surrogate";
    case SmallJumpMode::drop_with_compensation:
      return "drop_with_compensation";
    case SmallJumpMode::exact_stable:
      return "exact_stable";
  }
  return "?";
}

inline constexpr double kDefaultCutoff = 1e-3;

/// How the Levy noise is discretised. Jumps above the cutoff are a compound
/// Poisson stream; jumps below it are replaced by a Gaussian with the same
/// covariance, or dropped. Compensation of jumps in (cutoff, 1] vanishes for
/// the radial measures used here.
class NoiseIncrementPlan {
 public:
  /// Brownian-only (or noiseless when brownian is false).
  explicit NoiseIncrementPlan(int dim, bool brownian = false) : dim_(dim), brownian_(brownian) {
    require(dim >= 1 && dim <= kMaxDim, "dimension out of range");
  }

  NoiseIncrementPlan(RadialLevyMeasure measure, double cutoff = kDefaultCutoff,
                     SmallJumpMode mode = SmallJumpMode::gaussian_surrogate, bool brownian = false)
      : dim_(measure.dim()), mode_(mode), cutoff_(cutoff), brownian_(brownian) {
    require(cutoff > 0.0, "cutoff must be positive");
    if (mode == SmallJumpMode::exact_stable) {
      require(measure.is_isotropic_stable(),
              "exact_stable needs rho = 1, kappa1 = kappa2 and no modulation");
      stable_scale_ = stable_scale_from_kappa(measure.dim(), measure.alpha(), measure.kappa2());
    } else {
      small_variance_ = mode == SmallJumpMode::gaussian_surrogate
                            ? moment_integral(measure, Moment::small_sq(cutoff)) / dim_
                            : 0.0;
      tail_rate_ = moment_integral(measure, Moment::tail_mass(cutoff));
      if (tail_rate_ > 0.0) sampler_ = std::make_shared<TailSampler>(measure, cutoff);
    }
    measure_ = std::move(measure);
  }

  int dim() const { return dim_; }
  const std::optional<RadialLevyMeasure>& measure() const { return measure_; }
  SmallJumpMode mode() const { return mode_; }
  double cutoff() const { return cutoff_; }
  bool brownian() const { return brownian_; }
  bool has_jumps() const { return measure_.has_value(); }

  /// Variance per unit time and coordinate of the small-jump surrogate.
  double small_jump_variance() const { return small_variance_; }
  /// Arrival rate of jumps above the cutoff.
  double tail_rate() const { return tail_rate_; }
  double stable_scale() const { return stable_scale_; }
  const TailSampler* sampler() const { return sampler_.get(); }

 private:
  int dim_;
  std::optional<RadialLevyMeasure> measure_;
  SmallJumpMode mode_ = SmallJumpMode::drop_with_compensation;
  double cutoff_ = kDefaultCutoff;
  bool brownian_ = false;
  double small_variance_ = 0.0;
  double tail_rate_ = 0.0;
  double stable_scale_ = 0.0;
  std::shared_ptr<TailSampler> sampler_;
};

struct JumpArrival {
  double time;
  Vec jump;
};

struct JumpStream {
  std::vector<JumpArrival> arrivals;
  /// -(t1 - t0) * int_{cutoff < |z| <= 1} z nu(dz); zero for radial measures.
  Vec compensation_drift;
};

/// Marked Poisson arrivals of jumps above the plan's cutoff on (t0, t1].
inline JumpStream jump_stream(const NoiseIncrementPlan& plan, double t0, double t1, Stream& rng) {
  require(t1 > t0, "jump_stream needs t0 < t1");
  JumpStream out{{}, zeros(plan.dim())};
  if (plan.sampler() == nullptr) return out;
  const std::uint64_t n = rng.poisson((t1 - t0) * plan.tail_rate());
  out.arrivals.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const double t = t0 + (t1 - t0) * rng.uniform();
    out.arrivals.push_back({t, plan.sampler()->sample(rng)});
  }
  std::sort(out.arrivals.begin(), out.arrivals.end(),
            [](const JumpArrival& a, const JumpArrival& b) { return a.time < b.time; });
  return out;
}

/// Noise of one Euler step. `levy` holds the part applied through a single
/// matrix (exact stable increment or small-jump surrogate), `jumps` the large
/// jumps in arrival order. With `sum_jumps` the large jumps are added into
/// `levy` instead, which is all an additive-noise step needs.
struct StepNoise {
  Vec brownian;
  Vec levy;
  std::vector<Vec> jumps;
  // scale h^(1/alpha) for the last step size seen
  double cached_h = -1.0;
  double cached_factor = 0.0;
};

inline void draw_step_noise(const NoiseIncrementPlan& plan, double h, Stream& rng, StepNoise& out,
                            bool sum_jumps = false) {
  const int d = plan.dim();
  out.jumps.clear();
  if (plan.brownian()) {
    out.brownian.resize(d);
    const double s = std::sqrt(h);
    for (int i = 0; i < d; ++i) out.brownian(i) = s * rng.normal();
  } else {
    out.brownian = zeros(d);
  }
  out.levy = zeros(d);
  if (!plan.has_jumps()) return;
  if (plan.mode() == SmallJumpMode::exact_stable) {
    const double alpha = plan.measure()->alpha();
    if (h == 0.0) return;
    if (h != out.cached_h) {
      out.cached_h = h;
      out.cached_factor = plan.stable_scale() * std::pow(h, 1.0 / alpha);
    }
    out.levy = detail::scaled_stable(alpha, out.cached_factor, d, rng);
    return;
  }
  if (plan.small_jump_variance() > 0.0) {
    const double s = std::sqrt(h * plan.small_jump_variance());
    for (int i = 0; i < d; ++i) out.levy(i) = s * rng.normal();
  }
  if (plan.sampler() != nullptr) {
    const std::uint64_t n = rng.poisson(h * plan.tail_rate());
    if (sum_jumps && d == 1 && plan.sampler()->direct()) {
      double total = 0.0;
      bool negative = false;
      for (std::uint64_t i = 0; i < n; ++i) {
        const double r = plan.sampler()->direct_radius(rng.uniform_with_sign(negative));
        total += negative ? -r : r;
      }
      out.levy(0) += total;
    } else if (sum_jumps && d == 1) {
      double total = 0.0;
      for (std::uint64_t i = 0; i < n; ++i) {
        const double r = plan.sampler()->sample_radius(rng);
        total += rng.uniform() < 0.5 ? -r : r;
      }
      out.levy(0) += total;
    } else if (sum_jumps) {
      for (std::uint64_t i = 0; i < n; ++i) out.levy += plan.sampler()->sample(rng);
    } else {
      for (std::uint64_t i = 0; i < n; ++i) out.jumps.push_back(plan.sampler()->sample(rng));
    }
  }
}

/// Total Levy increment of one step (sum of all parts but the Brownian one).
inline Vec levy_increment(const NoiseIncrementPlan& plan, double h, Stream& rng) {
  StepNoise noise;
  draw_step_noise(plan, h, rng, noise, true);
  return noise.levy;
}

}  // namespace jumpent
