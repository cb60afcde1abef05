// Mecke, Girsanov and Wu checks on the jumps of a stable process above
// size delta in a short window.

#include "jumpent/poisson_space.hpp"

#include <cstdio>

using namespace jumpent;

int main() {
  const FiniteIntensity lambda(RadialLevyMeasure(1, 1.0, 1.0, 1.0), 0.25, 0.25);
  std::printf("intensity mass %.6f\n", lambda.mass());

  for (const auto& m : mecke_corpus()) {
    const auto r = mecke_check(m.F, lambda, 50000, 3);
    std::printf("mecke %-14s lhs %.6f rhs %.6f se %.1e\n", m.name.c_str(), r.lhs, r.rhs, r.stderr_);
  }

  const auto g = named_density("mark_tilted", lambda);
  for (const auto& F : functional_corpus()) {
    if (!F.mean) continue;
    const auto r = girsanov_density_check(g, F.F, lambda, 200000, 5);
    std::printf("girsanov %-14s reweighted %.6f exact %.6f\n", F.name.c_str(), r.reweighted,
                F.mean(lambda));
  }

  for (const auto& F : functional_corpus()) {
    if (!F.positive) continue;
    const auto w = wu_entropy_check(PhiSpec::xlogx(), F.F, lambda, 50000, 7);
    std::printf("wu xlogx %-14s entropy %.6f rhs %.6f holds %d\n", F.name.c_str(), w.entropy, w.rhs,
                w.holds);
  }
}
