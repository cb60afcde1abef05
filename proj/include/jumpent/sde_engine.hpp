#pragma once

// Euler schemes for
//
//   dX = b(X) dt + sigma dL                                  (constant sigma)
//   dX = b(X) dt + sigma1(X) dW + sigma2(X-) dL              (state dependent)
//
// Each step applies the drift, the Brownian increment, the small-jump part
// and then the large jumps one by one with the pre-jump state fed to sigma2.

#include "jumpent/core.hpp"
#include "jumpent/parallel.hpp"
#include "jumpent/rng.hpp"
#include "jumpent/stats.hpp"
#include "jumpent/stochastic_kernels.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace jumpent {

using VectorField = std::function<Vec(const Vec&)>;
using MatrixField = std::function<Mat(const Vec&)>;

inline constexpr double kOverflowGuard = 1e150;

struct CoefficientField {
  int dim = 1;
  VectorField drift;
  /// Constant noise matrix of the (1.1) form. Takes precedence over sigma2.
  std::optional<Mat> sigma_const;
  MatrixField sigma1;
  MatrixField sigma2;
  /// sigma1 and sigma2 do not depend on the state even though given as callables.
  bool state_independent_noise = false;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double lipschitz_b = 1.0;
  /// Drift grows faster than linearly; the scheme tames it.
  bool superlinear = false;
  /// Analytic drift Jacobian; central differences when empty.
  MatrixField drift_jacobian;
  std::string name = "custom";

  bool additive() const {
    return sigma_const.has_value() || state_independent_noise || (!sigma1 && !sigma2);
  }

  Mat jump_matrix(const Vec& x) const {
    if (sigma_const) return *sigma_const;
    if (sigma2) return sigma2(x);
    return identity(dim);
  }

  Mat jacobian(const Vec& x, double h = 1e-6) const {
    if (drift_jacobian) return drift_jacobian(x);
    Mat j(dim, dim);
    for (int k = 0; k < dim; ++k) {
      Vec xp = x;
      Vec xm = x;
      const double step = h * std::max(1.0, std::abs(x(k)));
      xp(k) += step;
      xm(k) -= step;
      j.col(k) = (drift(xp) - drift(xm)) / (2.0 * step);
    }
    return j;
  }
};

/// b(x) = A x with constant sigma; lambda1, lambda2 are the extreme
/// eigenvalues of the symmetric part of sigma^-1 A sigma.
inline CoefficientField linear_field(const Mat& a, const Mat& sigma) {
  require(a.rows() == a.cols() && sigma.rows() == a.rows() && sigma.cols() == a.cols(),
          "linear field needs square matrices of one size");
  const Eigen::FullPivLU<Mat> lu(sigma);
  require(lu.isInvertible(), "sigma must be invertible");
  CoefficientField c;
  c.dim = static_cast<int>(a.rows());
  c.drift = [a](const Vec& x) -> Vec { return a * x; };
  c.drift_jacobian = [a](const Vec&) -> Mat { return a; };
  c.sigma_const = sigma;
  const Mat conj = lu.inverse() * a * sigma;
  const Mat sym = 0.5 * (conj + conj.transpose());
  const Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
  c.lambda1 = eig.eigenvalues().minCoeff();
  c.lambda2 = eig.eigenvalues().maxCoeff();
  c.lipschitz_b = operator_norm(a);
  c.name = "linear";
  return c;
}

/// Ornstein-Uhlenbeck drift b(x) = -x with sigma = I.
inline CoefficientField ou_field(int dim) {
  CoefficientField c = linear_field(-identity(dim), identity(dim));
  c.name = "ou";
  return c;
}

/// b(x) = -c x |x|^(theta - 1), sigma = I. Dissipativity constants are those
/// away from the origin on the unit sphere; theta > 1 uses a tamed scheme.
inline CoefficientField power_drift_field(int dim, double theta, double c = 1.0) {
  require(theta > 0.0, "power drift needs theta > 0");
  CoefficientField f;
  f.dim = dim;
  f.drift = [theta, c](const Vec& x) -> Vec {
    const double r = x.norm();
    if (r == 0.0) return zeros(static_cast<int>(x.size()));
    return -c * std::pow(r, theta - 1.0) * x;
  };
  f.sigma_const = identity(dim);
  f.lambda1 = -c * std::max(1.0, theta);
  f.lambda2 = -c * std::min(1.0, theta);
  f.lipschitz_b = c * std::max(1.0, theta);
  f.superlinear = theta > 1.0;
  f.name = "power-drift";
  return f;
}

/// b(x) = -g(|x|) x / |x|, sigma = I, with g piecewise linear through the
/// table, g(0) = 0, and the last slope continued past the table.
inline CoefficientField tabulated_radial_field(int dim, std::vector<double> radii,
                                               std::vector<double> values) {
  require(radii.size() == values.size() && !radii.empty(), "drift table needs matching columns");
  if (radii.front() > 0.0) {
    radii.insert(radii.begin(), 0.0);
    values.insert(values.begin(), 0.0);
  }
  require(radii.size() >= 2 && radii.front() == 0.0 && values.front() == 0.0,
          "drift table must start at g(0) = 0");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < radii.size(); ++i) {
    require(radii[i] > radii[i - 1] && std::isfinite(values[i]), "drift table radii must increase");
    const double slope = (values[i] - values[i - 1]) / (radii[i] - radii[i - 1]);
    lo = std::min({lo, slope, values[i] / radii[i]});
    hi = std::max({hi, slope, values[i] / radii[i]});
  }
  auto g = [radii, values](double r) {
    const auto it = std::upper_bound(radii.begin(), radii.end(), r);
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(it - radii.begin()), 1,
                                                  radii.size() - 1);
    const double w = (r - radii[k - 1]) / (radii[k] - radii[k - 1]);
    return values[k - 1] + w * (values[k] - values[k - 1]);
  };
  CoefficientField f;
  f.dim = dim;
  f.drift = [g](const Vec& x) -> Vec {
    const double r = x.norm();
    if (r == 0.0) return zeros(static_cast<int>(x.size()));
    return -g(r) / r * x;
  };
  f.sigma_const = identity(dim);
  // radial eigenvalue -g', tangential -g / r
  f.lambda1 = -hi;
  f.lambda2 = -lo;
  f.lipschitz_b = std::max({std::abs(lo), std::abs(hi), 1e-12});
  f.name = "tabulated-drift";
  return f;
}

/// b(x) = +x: no invariant measure.
inline CoefficientField expanding_field(int dim) {
  CoefficientField c = linear_field(identity(dim), identity(dim));
  c.name = "expanding";
  return c;
}

/// Default step, min(1e-3, 1 / (10 L)).
inline double default_dt(const CoefficientField& c) {
  return std::min(1e-3, 1.0 / (10.0 * c.lipschitz_b));
}

struct DissipativityCheck {
  bool holds = true;
  double min_ratio = 0.0;
  double max_ratio = 0.0;
};

/// Spot-checks lambda1 |v|^2 <= <sigma^-1 grad b(x) sigma v, v> <= lambda2 |v|^2
/// at random points x (Gaussian with the given spread) and directions v.
inline DissipativityCheck check_dissipativity(const CoefficientField& c, int n_points,
                                              std::uint64_t seed, double spread = 3.0) {
  const Mat sigma = c.jump_matrix(zeros(c.dim));
  const Mat sigma_inv = Eigen::FullPivLU<Mat>(sigma).inverse();
  DissipativityCheck out{true, std::numeric_limits<double>::infinity(),
                         -std::numeric_limits<double>::infinity()};
  for (int i = 0; i < n_points; ++i) {
    Stream rng(seed, static_cast<std::uint64_t>(i));
    Vec x(c.dim);
    for (int k = 0; k < c.dim; ++k) x(k) = spread * rng.normal();
    const Vec v = rng.direction(c.dim);
    const double q = v.dot(sigma_inv * c.jacobian(x) * sigma * v);
    out.min_ratio = std::min(out.min_ratio, q);
    out.max_ratio = std::max(out.max_ratio, q);
    const double tol = 1e-4 * (1.0 + std::abs(q));
    if (q < c.lambda1 - tol || q > c.lambda2 + tol) out.holds = false;
  }
  return out;
}

struct TrajectoryEnsemble {
  int dim = 1;
  std::vector<Vec> terminal;
  std::vector<double> checkpoint_times;
  /// checkpoint_states[k][i]: state of path i at checkpoint_times[k].
  std::vector<std::vector<Vec>> checkpoint_states;
  std::uint64_t seed = 0;
  std::size_t n_paths = 0;
  double T = 0.0;
  double dt = 0.0;
  std::string scheme;
};

struct SimulationOptions {
  std::vector<double> checkpoints;
  const WorkerPool* pool = nullptr;
  /// Stream indices are offset by this, so that independent stages sharing
  /// a seed can use disjoint streams.
  std::uint64_t stream_offset = 0;
};

namespace detail {

inline void guard_state(const Vec& x) {
  if (!x.allFinite() || x.norm() > kOverflowGuard)
    throw ExplosionSuspected("state left the overflow guard");
}

inline Vec drift_step(const CoefficientField& c, const Vec& x, double h) {
  const Vec b = c.drift(x);
  if (c.superlinear) return x + h * b / (1.0 + h * b.norm());
  return x + h * b;
}

/// Advances every state in `states` by one Euler step. Several states are
/// only allowed for additive noise, where they share the noise increment.
inline void euler_step(const CoefficientField& c, const NoiseIncrementPlan& plan, double h,
                       Stream& rng, std::span<Vec> states, StepNoise& noise) {
  const bool additive = c.additive();
  draw_step_noise(plan, h, rng, noise, additive);
  if (additive) {
    Vec shift = zeros(c.dim);
    const bool any_levy = plan.has_jumps();
    if (any_levy) shift += c.jump_matrix(states[0]) * noise.levy;
    if (plan.brownian()) shift += (c.sigma1 ? c.sigma1(states[0]) : identity(c.dim)) * noise.brownian;
    for (Vec& x : states) {
      x = drift_step(c, x, h) + shift;
      guard_state(x);
    }
    return;
  }
  Vec& x = states[0];
  const Vec pre = x;
  Vec next = drift_step(c, pre, h);
  if (plan.brownian()) next += (c.sigma1 ? c.sigma1(pre) : identity(c.dim)) * noise.brownian;
  if (plan.has_jumps()) next += c.jump_matrix(pre) * noise.levy;
  for (const Vec& z : noise.jumps) next += c.jump_matrix(next) * z;
  x = next;
  guard_state(x);
}

inline std::size_t step_count(double T, double dt) {
  require(T >= 0.0 && dt > 0.0, "need T >= 0 and dt > 0");
  return static_cast<std::size_t>(std::llround(T / dt));
}

inline void check_step(const CoefficientField& c, double dt) {
  if (dt > 1.0 / (2.0 * c.lipschitz_b) * (1.0 + 1e-12))
    throw UnstableStep("dt exceeds 1 / (2 lipschitz_b)");
}

}  // namespace detail

/// Euler paths from x0s[i % x0s.size()], path i driven by Stream(seed, i).
/// The step is T / round(T / dt).
inline TrajectoryEnsemble simulate(const CoefficientField& c, const NoiseIncrementPlan& plan,
                                   const std::vector<Vec>& x0s, double T, double dt,
                                   std::size_t n_paths, std::uint64_t seed,
                                   const SimulationOptions& options = {}) {
  require(plan.dim() == c.dim, "noise plan and coefficients disagree on dimension");
  require(!x0s.empty() || n_paths == 0, "need at least one start point");
  detail::check_step(c, dt);
  const std::size_t n_steps = detail::step_count(T, dt);
  const double h = n_steps > 0 ? T / static_cast<double>(n_steps) : dt;

  TrajectoryEnsemble ens;
  ens.dim = c.dim;
  ens.seed = seed;
  ens.n_paths = n_paths;
  ens.T = T;
  ens.dt = h;
  ens.scheme = std::string(c.superlinear ? "tamed-euler" : "euler") + "/" +
               (plan.has_jumps() ? to_string(plan.mode()) : "brownian");
  ens.terminal.assign(n_paths, zeros(c.dim));

  std::vector<std::size_t> checkpoint_steps;
  for (double t : options.checkpoints) {
    require(t >= 0.0 && t <= T * (1.0 + 1e-12), "checkpoint outside [0, T]");
    checkpoint_steps.push_back(static_cast<std::size_t>(std::llround(t / h)));
    ens.checkpoint_times.push_back(static_cast<double>(checkpoint_steps.back()) * h);
  }
  ens.checkpoint_states.assign(checkpoint_steps.size(), std::vector<Vec>(n_paths, zeros(c.dim)));

  auto run_path = [&](std::size_t i) {
    Stream rng(seed, options.stream_offset + i);
    Vec x = x0s[i % x0s.size()];
    StepNoise noise;
    auto record = [&](std::size_t step) {
      for (std::size_t k = 0; k < checkpoint_steps.size(); ++k)
        if (checkpoint_steps[k] == step) ens.checkpoint_states[k][i] = x;
    };
    record(0);
    for (std::size_t s = 1; s <= n_steps; ++s) {
      detail::euler_step(c, plan, h, rng, std::span<Vec>(&x, 1), noise);
      record(s);
    }
    ens.terminal[i] = x;
  };
  const WorkerPool serial(1);
  (options.pool ? *options.pool : serial).for_each(n_paths, run_path);
  return ens;
}

inline TrajectoryEnsemble simulate(const CoefficientField& c, const NoiseIncrementPlan& plan,
                                   const Vec& x0, double T, double dt, std::size_t n_paths,
                                   std::uint64_t seed, const SimulationOptions& options = {}) {
  return simulate(c, plan, std::vector<Vec>{x0}, T, dt, n_paths, seed, options);
}

struct CouplingStats {
  std::vector<double> times;
  std::vector<double> max_distance;
  std::vector<double> min_distance;
  /// |x - y| e^(lambda2 t)
  std::vector<double> bound;
  double tolerance = 0.0;
  bool within_bound = true;
};

/// Drives X(x) and X(y) with the same noise and records the spread of
/// |X_t(x) - X_t(y)| over paths at evenly spaced checkpoints.
inline CouplingStats synchronous_coupling(const CoefficientField& c, const NoiseIncrementPlan& plan,
                                          const Vec& x, const Vec& y, double T, double dt,
                                          std::size_t n_paths, std::uint64_t seed,
                                          int n_checkpoints = 10, const WorkerPool* pool = nullptr) {
  if (!c.additive()) throw NotAdditiveNoise("synchronous coupling needs additive noise");
  detail::check_step(c, dt);
  const std::size_t n_steps = detail::step_count(T, dt);
  const double h = n_steps > 0 ? T / static_cast<double>(n_steps) : dt;
  std::vector<std::size_t> steps;
  CouplingStats out;
  for (int k = 1; k <= n_checkpoints; ++k) {
    steps.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(n_steps) * k / n_checkpoints)));
    out.times.push_back(static_cast<double>(steps.back()) * h);
  }
  std::vector<std::vector<double>> dist(n_paths, std::vector<double>(steps.size(), 0.0));
  auto run_path = [&](std::size_t i) {
    Stream rng(seed, i);
    std::array<Vec, 2> pair{x, y};
    StepNoise noise;
    std::size_t next = 0;
    for (std::size_t s = 1; s <= n_steps; ++s) {
      detail::euler_step(c, plan, h, rng, std::span<Vec>(pair), noise);
      while (next < steps.size() && steps[next] == s) dist[i][next++] = (pair[0] - pair[1]).norm();
    }
    while (next < steps.size()) dist[i][next++] = (pair[0] - pair[1]).norm();
  };
  const WorkerPool serial(1);
  (pool ? *pool : serial).for_each(n_paths, run_path);

  out.tolerance = 10.0 * h * c.lipschitz_b;
  const double gap = (x - y).norm();
  for (std::size_t k = 0; k < steps.size(); ++k) {
    double hi = 0.0;
    double lo = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_paths; ++i) {
      hi = std::max(hi, dist[i][k]);
      lo = std::min(lo, dist[i][k]);
    }
    if (n_paths == 0) lo = 0.0;
    out.max_distance.push_back(hi);
    out.min_distance.push_back(lo);
    out.bound.push_back(gap * std::exp(c.lambda2 * out.times[k]));
    if (hi > out.bound.back() * (1.0 + out.tolerance)) out.within_bound = false;
  }
  return out;
}

struct InvariantDiagnostic {
  double ks_statistic = 0.0;
  double ks_p_value = 1.0;
  /// median |X| at 2 burn_in over median |X| at burn_in.
  double median_radius_ratio = 1.0;
  bool stationary = true;
  bool diverging = false;
  bool weakly_dissipative = false;
};

struct InvariantSample {
  std::vector<Vec> samples;
  InvariantDiagnostic diagnostic;
  double burn_in = 0.0;
  double dt = 0.0;
};

inline double default_burn_in(const CoefficientField& c) {
  return c.lambda2 < 0.0 ? 10.0 / std::abs(c.lambda2) : 10.0;
}

/// Terminal states of independent paths from 0 after burn_in. The paths are
/// continued to 2 burn_in and the radii at both times compared (two-sample
/// KS and median ratio) as a convergence diagnostic.
inline InvariantSample invariant_ensemble(const CoefficientField& c, const NoiseIncrementPlan& plan,
                                          double burn_in, std::size_t n_samples, std::uint64_t seed,
                                          double dt, const WorkerPool* pool = nullptr,
                                          bool diagnose = true) {
  require(burn_in > 0.0, "burn_in must be positive");
  SimulationOptions opt;
  opt.pool = pool;
  InvariantSample out;
  out.burn_in = burn_in;
  out.diagnostic.weakly_dissipative = c.lambda2 >= 0.0;
  if (!diagnose) {
    auto ens = simulate(c, plan, zeros(c.dim), burn_in, dt, n_samples, seed, opt);
    out.samples = std::move(ens.terminal);
    out.dt = ens.dt;
    return out;
  }
  opt.checkpoints = {burn_in};
  TrajectoryEnsemble ens;
  try {
    ens = simulate(c, plan, zeros(c.dim), 2.0 * burn_in, dt, n_samples, seed, opt);
  } catch (const ExplosionSuspected&) {
    // The diagnostic run outlived the guard; report divergence from the
    // burn-in samples alone.
    auto first = simulate(c, plan, zeros(c.dim), burn_in, dt, n_samples, seed, {{}, pool, 0});
    out.samples = std::move(first.terminal);
    out.dt = first.dt;
    out.diagnostic.stationary = false;
    out.diagnostic.diverging = true;
    out.diagnostic.ks_statistic = 1.0;
    out.diagnostic.ks_p_value = 0.0;
    out.diagnostic.median_radius_ratio = std::numeric_limits<double>::infinity();
    return out;
  }
  out.samples = ens.checkpoint_states[0];
  out.dt = ens.dt;
  std::vector<double> r1;
  std::vector<double> r2;
  r1.reserve(n_samples);
  r2.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    r1.push_back(out.samples[i].norm());
    r2.push_back(ens.terminal[i].norm());
  }
  if (n_samples > 0) {
    const auto ks = ks_two_sample(r1, r2);
    out.diagnostic.ks_statistic = ks.statistic;
    out.diagnostic.ks_p_value = ks.p_value;
    const double m1 = quantile(r1, 0.5);
    const double m2 = quantile(r2, 0.5);
    out.diagnostic.median_radius_ratio = m1 > 0.0 ? m2 / m1 : (m2 > 0.0 ? kInf : 1.0);
  }
  out.diagnostic.diverging = out.diagnostic.median_radius_ratio > 2.0;
  out.diagnostic.stationary = out.diagnostic.ks_p_value > 1e-3 && !out.diagnostic.diverging;
  return out;
}

struct JacobianCheck {
  Mat jacobian;
  double determinant = 1.0;
  double norm = 1.0;
  double det_lower = 1.0;
  double det_upper = 1.0;
  double norm_upper = 1.0;
  double tolerance = 0.0;
  bool det_ok = true;
  bool norm_ok = true;
};

/// Central-difference Jacobian of x -> X_T(x) for the flow started at time s,
/// with one frozen noise path shared by all 2d + 1 trajectories.
inline JacobianCheck flow_jacobian_check(const CoefficientField& c, const NoiseIncrementPlan& plan,
                                         const Vec& x, double s, double T, double dt,
                                         std::uint64_t seed, double h = 1e-4) {
  if (!c.additive()) throw NotAdditiveNoise("frozen-noise Jacobian needs additive noise");
  require(T >= s, "need T >= s");
  detail::check_step(c, dt);
  const int d = c.dim;
  const double span = T - s;
  const std::size_t n_steps = detail::step_count(span, dt);
  const double step = n_steps > 0 ? span / static_cast<double>(n_steps) : dt;

  std::vector<Vec> states;
  states.push_back(x);
  for (int k = 0; k < d; ++k) {
    Vec e = zeros(d);
    e(k) = h;
    states.push_back(x + e);
    states.push_back(x - e);
  }
  Stream rng(seed, 0);
  StepNoise noise;
  for (std::size_t n = 0; n < n_steps; ++n)
    detail::euler_step(c, plan, step, rng, std::span<Vec>(states), noise);

  JacobianCheck out;
  out.jacobian.resize(d, d);
  for (int k = 0; k < d; ++k) out.jacobian.col(k) = (states[1 + 2 * k] - states[2 + 2 * k]) / (2.0 * h);
  out.determinant = out.jacobian.determinant();
  out.norm = operator_norm(out.jacobian);
  out.det_lower = std::exp(c.lambda1 * span * d);
  out.det_upper = std::exp(c.lambda2 * span * d);
  out.norm_upper = std::exp(c.lambda2 * span);
  out.tolerance = 10.0 * step * c.lipschitz_b + 10.0 * h;
  const double f = 1.0 + out.tolerance;
  out.det_ok = out.determinant >= out.det_lower / f && out.determinant <= out.det_upper * f;
  out.norm_ok = out.norm <= out.norm_upper * f;
  return out;
}

}  // namespace jumpent
