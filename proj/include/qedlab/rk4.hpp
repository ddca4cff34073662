#pragma once

#include "grid.hpp"

namespace qedlab {

// Wavefunction plus real auxiliary variables (classical mode coordinates).
struct PhaseState {
  ComplexVector psi;
  RealVector aux;
};

// Classic 4-stage Runge-Kutta with preallocated stage buffers.
// deriv(t, y, dy) must fill dy for state y.
class Rk4Stepper {
public:
  template <class Deriv>
  void step(PhaseState& y, double t, double dt, Deriv&& deriv) {
    ensure(y);
    deriv(t, y, k1_);
    stage(y, k1_, 0.5 * dt);
    deriv(t + 0.5 * dt, tmp_, k2_);
    stage(y, k2_, 0.5 * dt);
    deriv(t + 0.5 * dt, tmp_, k3_);
    stage(y, k3_, dt);
    deriv(t + dt, tmp_, k4_);
    const double w = dt / 6.0;
    y.psi += w * (k1_.psi + 2.0 * k2_.psi + 2.0 * k3_.psi + k4_.psi);
    if (y.aux.size()) y.aux += w * (k1_.aux + 2.0 * k2_.aux + 2.0 * k3_.aux + k4_.aux);
  }

private:
  void ensure(const PhaseState& y) {
    if (k1_.psi.size() == y.psi.size() && k1_.aux.size() == y.aux.size()) return;
    for (PhaseState* s : {&k1_, &k2_, &k3_, &k4_, &tmp_}) {
      s->psi.resize(y.psi.size());
      s->aux.resize(y.aux.size());
    }
  }
  void stage(const PhaseState& y, const PhaseState& k, double h) {
    tmp_.psi = y.psi + h * k.psi;
    if (y.aux.size()) tmp_.aux = y.aux + h * k.aux;
  }

  PhaseState k1_, k2_, k3_, k4_, tmp_;
};

}  // namespace qedlab
