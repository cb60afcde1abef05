#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace jumpent {

/// Largest supported state-space dimension. Vectors and matrices live on the
/// stack up to this size.
inline constexpr int kMaxDim = 8;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

inline Vec zeros(int dim) { return Vec::Zero(dim); }
inline Mat identity(int dim) { return Mat::Identity(dim, dim); }

/// Spectral norm of a small matrix.
inline double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()(0);
}

// Error taxonomy. Every failure mode named by the library has its own type so
// callers can react to e.g. a divergent moment without string matching.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DivergentIntegral : public Error {
 public:
  using Error::Error;
};

class InvalidRegion : public Error {
 public:
  using Error::Error;
};

class EmptyTail : public Error {
 public:
  using Error::Error;
};

class ExplosionSuspected : public Error {
 public:
  using Error::Error;
};

class UnstableStep : public Error {
 public:
  using Error::Error;
};

class NotAdditiveNoise : public Error {
 public:
  using Error::Error;
};

class NonPositiveInput : public Error {
 public:
  using Error::Error;
};

class NoFiniteLimit : public Error {
 public:
  using Error::Error;
};

class NotDissipativeEnough : public Error {
 public:
  using Error::Error;
};

class DegenerateDensity : public Error {
 public:
  using Error::Error;
};

class InconclusiveLimit : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Takes the message by pointer so hot paths do not build a string per call.
inline void require(bool cond, const char* what) {
  if (!cond) throw InvalidArgument(what);
}

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

}  // namespace jumpent
