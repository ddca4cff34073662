// Kick spectrum of hydrogen in a resonant cavity, photon-free propagation.
#include <qedlab/dynamics.hpp>

#include <cstdio>

using namespace qedlab;

int main() {
  SpectrumParams p;
  p.grid = Grid1D(101, 0.3, Boundary::dirichlet);
  const double w = 0.39;
  p.modes = {CavityMode{w, lambda_from_ratio(w, 0.136), 1.0}};
  SpectrumRun run;
  run.dt = 2e-3;
  run.t_end = 400;
  run.sample_stride = 5;
  run.damping = 0.01;
  auto r = kick_and_spectrum(SpectrumSystem::photon_free, p, {}, run);
  std::printf("ground energy %.8f, norm drift %.2e, energy drift %.2e\n", r.ground_energy, r.max_norm_drift,
              r.max_energy_drift);
  for (const auto& pk : dominant_peaks(r.spectrum, 4)) std::printf("peak at %.4f  height %.3e\n", pk.omega, pk.height);
}
