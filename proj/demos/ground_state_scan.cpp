// Ground-state energy of cavity-coupled 1D hydrogen: exact PZW, photon-free and pxLDA.
#include <qedlab/photon_free.hpp>
#include <qedlab/qedft.hpp>

#include <cstdio>

using namespace qedlab;

int main() {
  Grid1D grid(201, 0.15, Boundary::dirichlet);
  Potential1D v = soft_coulomb(grid, 1.0);
  const double omega = 0.4;
  std::printf("%8s %14s %14s %14s\n", "lambda", "exact", "photon-free", "pxLDA");
  for (double lam : {0.0, 0.1, 0.2, 0.3}) {
    ModeSet modes = dress_modes({{omega, lam, 1.0}});
    const double exact = ground_state(build_pzw_hamiltonian(grid, v, modes, {20})).energy;
    const double pf = ground_state(build_static_pf_free_hamiltonian(grid, v, modes)).energy;
    XcConfig lda;
    lda.functional = XcFunctional::pxlda;
    const double ks = scf_solve(grid, v, modes, lda).energy;
    std::printf("%8.3f %14.8f %14.8f %14.8f\n", lam, exact, pf, ks);
  }
}
