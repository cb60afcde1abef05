// Phi-entropy of P_T f against C(T) * mean Gamma for a 1-d stable OU process.
//
//   demo_ou_entropy_bound [alpha] [n_paths]

#include "jumpent/phi_entropy.hpp"
#include "jumpent/sde_engine.hpp"

#include <cstdio>
#include <cstdlib>

using namespace jumpent;

int main(int argc, char** argv) {
  const double alpha = argc > 1 ? std::atof(argv[1]) : 1.5;
  const std::size_t n = argc > 2 ? std::strtoul(argv[2], nullptr, 10) : 20000;

  const RadialLevyMeasure nu(1, alpha, 1.0, 1.0);
  const NoiseIncrementPlan plan(nu, kDefaultCutoff, SmallJumpMode::exact_stable);
  const auto ou = ou_field(1);
  const auto f = TestFunction::tanh_shift(1);
  const auto phi = PhiSpec::xlogx();

  std::printf("alpha=%g n=%zu phi=%s f=%s\n", alpha, n, phi.name().c_str(), f.name.c_str());
  std::printf("%6s %12s %12s %12s %s\n", "T", "entropy", "bound", "stderr", "holds");
  for (double T : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const auto ens = simulate(ou, plan, zeros(1), T, 0.01, n, 11);
    const auto fx = evaluate(f, ens.terminal);
    const auto gamma = gamma_at_states(phi, f, ens.terminal, nu, identity(1));
    const double C = bound_constant(ou.lambda1, ou.lambda2, 1, alpha, 1.0, 1.0, T);
    const auto b = check_entropy_bound(phi, fx, gamma, C);
    std::printf("%6.2f %12.6f %12.6f %12.2e %s\n", T, b.entropy, b.bound, b.joint_stderr,
                b.holds ? "yes" : "NO");
  }
  // T -> inf: the constant has a finite limit here.
  std::printf("C(inf) = %g\n", bound_constant(ou.lambda1, ou.lambda2, 1, alpha, 1.0, 1.0, kInf));
}
