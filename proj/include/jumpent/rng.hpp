#pragma once

// Counter-based random streams.
//
// Philox4x32-10 keyed by the run seed; the upper half of the counter holds the
// stream index and the lower half a block counter. Stream (seed, i) is
// therefore independent of how many other streams exist or in which order
// they are consumed, which is what makes ensembles order-independent.

#include "jumpent/core.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

namespace jumpent {

namespace detail {

inline void philox_round(std::array<std::uint32_t, 4>& ctr,
                         const std::array<std::uint32_t, 2>& key) {
  constexpr std::uint64_t kM0 = 0xD2511F53u;
  constexpr std::uint64_t kM1 = 0xCD9E8D57u;
  const std::uint64_t p0 = kM0 * ctr[0];
  const std::uint64_t p1 = kM1 * ctr[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
}

inline std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                  std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kW0 = 0x9E3779B9u;
  constexpr std::uint32_t kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    philox_round(ctr, key);
  }
  return ctr;
}

}  // namespace detail

/// One reproducible random stream. Satisfies UniformRandomBitGenerator so
/// standard distributions can be driven by it.
class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(std::uint64_t seed, std::uint64_t index)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        index_(index) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ == 2) refill();
    const result_type out =
        (static_cast<result_type>(block_[2 * pos_]) << 32) | block_[2 * pos_ + 1];
    ++pos_;
    return out;
  }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  /// Uniform on (0, 1) plus an independent fair coin from the bits the
  /// uniform does not use.
  double uniform_with_sign(bool& negative) {
    const result_type x = (*this)();
    negative = (x & 1u) != 0;
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
  }

  double exponential() { return -std::log(uniform()); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    // Box-Muller on open-interval uniforms.
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    std::poisson_distribution<std::uint64_t> dist(mean);
    return dist(*this);
  }

  /// Uniform direction on the unit sphere of R^dim.
  Vec direction(int dim) {
    Vec v(dim);
    if (dim == 1) {
      v(0) = uniform() < 0.5 ? -1.0 : 1.0;
      return v;
    }
    double norm = 0.0;
    do {
      for (int i = 0; i < dim; ++i) v(i) = normal();
      norm = v.norm();
    } while (norm == 0.0);
    return v / norm;
  }

  std::uint64_t index() const { return index_; }

 private:
  void refill() {
    const std::array<std::uint32_t, 4> ctr{
        static_cast<std::uint32_t>(block_counter_),
        static_cast<std::uint32_t>(block_counter_ >> 32), static_cast<std::uint32_t>(index_),
        static_cast<std::uint32_t>(index_ >> 32)};
    block_ = detail::philox4x32_10(ctr, key_);
    ++block_counter_;
    pos_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t index_;
  std::uint64_t block_counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int pos_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Derive a sub-seed so that independent experiment stages sharing one user
/// seed do not reuse streams. SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace jumpent
