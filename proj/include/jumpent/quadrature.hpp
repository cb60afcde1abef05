#pragma once

// Thin wrappers over Boost.Math quadrature with a uniform result type.

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace jumpent {

struct Integral {
  double value = 0.0;
  double error = 0.0;

  Integral& operator+=(const Integral& other) {
    value += other.value;
    error += other.error;
    return *this;
  }
};

inline constexpr double kDefaultQuadTol = 1e-11;

/// Adaptive Gauss-Kronrod (21 point) on a finite interval. A positive
/// abs_tol stops refinement once the error is below it, which matters for
/// integrands that are rounding noise around zero.
template <class F>
Integral integrate_gk(F&& f, double a, double b, double tol = kDefaultQuadTol,
                      unsigned max_depth = 18, double abs_tol = 0.0) {
  if (!(b > a)) return {};
  using GK = boost::math::quadrature::gauss_kronrod<double, 21>;
  double err = 0.0;
  double l1 = 0.0;
  if (abs_tol > 0.0) {
    const double v = GK::integrate(f, a, b, 0, tol, &err, &l1);
    if (err <= abs_tol) return {v, err};
    tol = std::max(tol, abs_tol / std::max(l1, std::numeric_limits<double>::min()));
  }
  const double v = GK::integrate(f, a, b, max_depth, tol, &err);
  return {v, err};
}

/// Tanh-sinh on a finite interval; tolerant of integrable endpoint singularities.
template <class F>
Integral integrate_ts(F&& f, double a, double b, double tol = kDefaultQuadTol) {
  if (!(b > a)) return {};
  // Integrators extend their abscissa tables lazily, so keep one per thread.
  static thread_local boost::math::quadrature::tanh_sinh<double> integrator(12);
  double err = 0.0;
  const double v = integrator.integrate(f, a, b, tol, &err);
  return {v, err};
}

/// Exp-sinh on [a, +inf).
template <class F>
Integral integrate_half_line(F&& f, double a, double tol = kDefaultQuadTol) {
  static thread_local boost::math::quadrature::exp_sinh<double> integrator(12);
  double err = 0.0;
  const double v =
      integrator.integrate(f, a, std::numeric_limits<double>::infinity(), tol, &err);
  return {v, err};
}

}  // namespace jumpent
