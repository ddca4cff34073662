#pragma once

#include "exact_qed.hpp"
#include "rk4.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace qedlab {

enum class HistoryMode { memory_integral, auxiliary_ode };

struct PhotonFreeConfig {
  bool include_zero_point = false;
  HistoryMode history = HistoryMode::auxiliary_ode;
  FdOrder order = FdOrder::fourth;
};

// Matter-only Hamiltonian with the current-squared correction. Valid for
// real states (vanishing mean current), where the memory terms drop out.
inline MatterHamiltonian<cplx> build_static_pf_free_hamiltonian(const Grid1D& grid, const Potential1D& v,
                                                                 const ModeSet& modes,
                                                                 const PhotonFreeConfig& cfg = {}) {
  if (modes.n_electrons != 1) throw std::invalid_argument("photon-free matter Hamiltonian is one-electron");
  MatterOperators mat = matter_operators(grid, v, cfg.order);
  const double mass = 1.0 - modes.total_mass_shift();
  if (!(mass > 0.0)) throw std::logic_error("photon-free kinetic coefficient must stay positive");
  ComplexSparse h = (mass * mat.kinetic).cast<cplx>() + mat.potential;
  h.makeCompressed();
  assert_hermitian(h);
  MatterHamiltonian<cplx> out{h, mat};
  out.energy_offset = cfg.include_zero_point ? -modes.zero_point_dressed() : 0.0;
  RealSparse base = detail::preconditioner_base(mat) - (1.0 - mass) * mat.kinetic;
  out.preconditioner = block_preconditioner<cplx>(base, {0.0}, 1.0);
  return out;
}

// <J_p> for a unit-norm amplitude vector
inline double current_expectation(const MatterOperators& m, const ComplexVector& psi) {
  return std::real(psi.dot(m.momentum * psi));
}

inline double current_squared_expectation(const MatterOperators& m, const ComplexVector& psi) {
  return std::real(psi.dot(m.momentum_sq.cast<cplx>() * psi));
}

// The static form is only valid for states without a mean current.
inline void require_static_state(const MatterOperators& m, const ComplexVector& psi, double tol = 1e-8) {
  const double j = current_expectation(m, psi);
  if (std::abs(j) > tol * std::max(1.0, std::sqrt(std::abs(current_squared_expectation(m, psi)))))
    throw std::invalid_argument("static photon-free Hamiltonian used with a current-carrying state");
}

struct PhotonObservables {
  std::vector<double> photon_number;          // bare modes
  std::vector<double> dressed_photon_number;  // normal modes, adiabatic estimate
  std::vector<cplx> field_amplitude;          // <a> of the bare modes
  std::vector<cplx> dressed_amplitude;        // <a~> of the normal modes
};

// Adiabatic reconstruction: a~_b = -kappa_b J_p on top of the normal-mode vacuum.
inline PhotonObservables reconstruct_photon_observables(const MatterOperators& m, const ComplexVector& psi,
                                                        const ModeSet& modes) {
  const double j = current_expectation(m, psi);
  const double j2 = current_squared_expectation(m, psi);
  const int nm = modes.count();
  PhotonObservables out;
  for (int b = 0; b < nm; ++b) {
    const double s = modes.adiabatic_factor(b);
    out.dressed_photon_number.push_back(s * s * j2);
    out.dressed_amplitude.emplace_back(-s * j, 0.0);
  }
  for (int a = 0; a < nm; ++a) {
    const double w = modes.modes[a].omega;
    double q2 = 0, p2 = 0, q = 0;
    for (int b = 0; b < nm; ++b) {
      const double ub = modes.bogoliubov(b, a), wb = modes.dressed_omegas[b], sb = modes.adiabatic_factor(b);
      q2 += ub * ub / (2.0 * wb);
      p2 += ub * ub * wb / 2.0;
      q += ub * (-2.0 * sb * j) / std::sqrt(2.0 * wb);
      for (int c = 0; c < nm; ++c) {
        const double uc = modes.bogoliubov(c, a), wc = modes.dressed_omegas[c], sc = modes.adiabatic_factor(c);
        q2 += ub * uc * 4.0 * sb * sc * j2 / (2.0 * std::sqrt(wb * wc));
      }
    }
    out.photon_number.push_back(0.5 * (w * q2 + p2 / w) - 0.5);
    out.field_amplitude.emplace_back(std::sqrt(w / 2.0) * q, 0.0);
  }
  return out;
}

// History term M with M'' + w^2 M = w^2 J and zero initial data, by RK4.
inline RealVector memory_term_ode(const std::function<double(double)>& j, double omega, double dt, int steps) {
  RealVector out(steps + 1);
  double m = 0, mdot = 0;
  out[0] = 0;
  const double w2 = omega * omega;
  for (int n = 0; n < steps; ++n) {
    const double t = n * dt;
    auto f = [&](double tt, double mm, double vv, double& dm, double& dv) {
      dm = vv;
      dv = w2 * (j(tt) - mm);
    };
    double k1m, k1v, k2m, k2v, k3m, k3v, k4m, k4v;
    f(t, m, mdot, k1m, k1v);
    f(t + 0.5 * dt, m + 0.5 * dt * k1m, mdot + 0.5 * dt * k1v, k2m, k2v);
    f(t + 0.5 * dt, m + 0.5 * dt * k2m, mdot + 0.5 * dt * k2v, k3m, k3v);
    f(t + dt, m + dt * k3m, mdot + dt * k3v, k4m, k4v);
    m += dt / 6 * (k1m + 2 * k2m + 2 * k3m + k4m);
    mdot += dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    out[n + 1] = m;
  }
  return out;
}

// Same history term by trapezoidal quadrature of w int sin(w(t-t')) J(t') dt'.
// The sine is split so the sum runs in linear time; the weights are the
// plain trapezoid ones.
inline RealVector memory_term_quadrature(const RealVector& j_samples, double omega, double dt) {
  const int n = static_cast<int>(j_samples.size());
  RealVector out(n);
  double c_sum = 0, s_sum = 0;  // trapezoid sums of cos(w t') J and sin(w t') J
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    if (i > 0) {
      const double tp = (i - 1) * dt;
      c_sum += 0.5 * dt * (std::cos(omega * tp) * j_samples[i - 1] + std::cos(omega * t) * j_samples[i]);
      s_sum += 0.5 * dt * (std::sin(omega * tp) * j_samples[i - 1] + std::sin(omega * t) * j_samples[i]);
    }
    out[i] = omega * (std::sin(omega * t) * c_sum - std::cos(omega * t) * s_sum);
  }
  return out;
}

// Matter wavefunction coupled to classical normal-mode coordinates. The
// photon-free variant adds the fluctuation terms; the Maxwell variant keeps
// only the mean field; an optional adiabatic density functional can be added.
struct MatterFieldModel {
  MatterOperators matter;
  ModeSet modes;
  bool fluctuations = true;  // photon-free terms on top of the mean field
  bool mean_field = true;
  HistoryMode history = HistoryMode::auxiliary_ode;
  std::function<RealVector(const RealVector&)> xc_potential;  // density per length -> potential
  std::function<double(const RealVector&)> xc_energy;
  std::function<double(double)> kick;  // v_kick(x, t) = -kick(t) x
};

struct PropagationOptions {
  double dt = 5e-4;
  double t_end = 1000.0;
  int sample_stride = 20;
  double energy_reference_time = 2.0;  // drift measured after this time
  double norm_abort = 1e-6;
};

struct Trajectory {
  std::vector<double> time;
  std::vector<double> dipole;
  std::vector<double> current;
  std::vector<double> energy;
  std::vector<double> norm;
  std::vector<std::vector<double>> vector_potential;  // per sample, per normal mode
  ComplexVector final_state;
  double max_norm_drift = 0;
  double max_energy_drift = 0;  // relative, after the reference time
  long steps = 0;
};

class PropagationError : public std::runtime_error {
public:
  PropagationError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

private:
  long step_;
};

class MatterFieldPropagator {
public:
  explicit MatterFieldPropagator(MatterFieldModel model) : m_(std::move(model)) {
    if (m_.matter.plane_waves) throw std::invalid_argument("time propagation uses the real-space representation");
    if (m_.modes.n_electrons != 1) throw std::invalid_argument("matter-field propagation is one-electron");
    const int nb = m_.modes.count();
    c_.resize(nb);
    for (int b = 0; b < nb; ++b) c_[b] = m_.modes.mass_shift(b);
    mass_ = m_.fluctuations ? 1.0 - m_.modes.total_mass_shift() : 1.0;
    kin_ = (mass_ * m_.matter.kinetic).eval();
    deriv_ = first_derivative(m_.matter.grid, m_.matter.order);
    v_ = m_.matter.potential_diagonal;
    x_ = m_.matter.grid.coordinates();
    dx_ = m_.matter.grid.spacing();
  }

  const MatterFieldModel& model() const { return m_; }

  double current(const ComplexVector& psi) const {
    // <-i D> = Im(psi^dagger D psi) for real antisymmetric D
    return std::imag(psi.dot(deriv_ * psi));
  }

  RealVector density(const ComplexVector& psi) const { return psi.cwiseAbs2() / dx_; }

  // Hamiltonian applied with the field variables frozen; b multiplies J_p
  ComplexVector apply(const ComplexVector& psi, double t, double b, const RealVector* vxc) const {
    ComplexVector out = kin_ * psi;
    RealVector pot = v_;
    if (vxc) pot += *vxc;
    if (m_.kick) pot -= m_.kick(t) * x_;
    out += pot.cwiseProduct(psi.real()).cast<cplx>() + cplx(0, 1) * pot.cwiseProduct(psi.imag()).cast<cplx>();
    if (b != 0.0) out += (cplx(0.0, -b)) * (deriv_ * psi);
    return out;
  }

  Trajectory propagate(const ComplexVector& initial, const PropagationOptions& opt) const {
    const int nb = m_.modes.count();
    const bool ode = m_.history == HistoryMode::auxiliary_ode;
    PhaseState y{initial, RealVector::Zero(ode && m_.mean_field ? 2 * nb : 0)};
    Rk4Stepper stepper;
    Trajectory tr;
    const long steps = std::lround(opt.t_end / opt.dt);
    std::vector<double> c_sum(nb, 0.0), s_sum(nb, 0.0);
    double j_start = current(y.psi);
    double t_start = 0;

    auto history_m = [&](int b, double tau) {
      // trapezoid sums up to the step start plus the partial interval
      const double w = m_.modes.dressed_omegas[b];
      const double eps = m_.modes.dressed_polarizations[b];
      double val = w * (std::sin(w * tau) * c_sum[b] - std::cos(w * tau) * s_sum[b]);
      val += w * 0.5 * (tau - t_start) * std::sin(w * (tau - t_start)) * eps * j_start;
      return val;
    };

    auto deriv = [&](double t, const PhaseState& s, PhaseState& ds) {
      const double j = current(s.psi);
      double b = 0;
      for (int k = 0; k < nb; ++k) {
        const double eps = m_.modes.dressed_polarizations[k];
        if (m_.fluctuations) b += c_[k] * 0.5 * j;
        if (m_.mean_field) {
          const double mk = ode ? s.aux[2 * k] : history_m(k, t);
          b -= c_[k] * eps * mk;
        }
      }
      RealVector vxc;
      if (m_.xc_potential) vxc = m_.xc_potential(density(s.psi));
      ds.psi = cplx(0, -1) * apply(s.psi, t, b, m_.xc_potential ? &vxc : nullptr);
      if (ds.aux.size() != s.aux.size()) ds.aux.resize(s.aux.size());
      for (int k = 0; k < nb && ode && m_.mean_field; ++k) {
        const double w = m_.modes.dressed_omegas[k];
        const double eps = m_.modes.dressed_polarizations[k];
        ds.aux[2 * k] = s.aux[2 * k + 1];
        ds.aux[2 * k + 1] = w * w * (eps * j - s.aux[2 * k]);
      }
    };

    auto field_vars = [&](const PhaseState& s, double t, std::vector<double>& mm, std::vector<double>& md) {
      mm.assign(nb, 0.0);
      md.assign(nb, 0.0);
      if (!m_.mean_field) return;
      for (int k = 0; k < nb; ++k) {
        if (ode) {
          mm[k] = s.aux[2 * k];
          md[k] = s.aux[2 * k + 1];
        } else {
          const double w = m_.modes.dressed_omegas[k];
          mm[k] = w * (std::sin(w * t) * c_sum[k] - std::cos(w * t) * s_sum[k]);
          md[k] = w * w * (std::cos(w * t) * c_sum[k] + std::sin(w * t) * s_sum[k]);
        }
      }
    };

    double e_ref = std::numeric_limits<double>::quiet_NaN();
    auto record = [&](const PhaseState& s, double t) {
      std::vector<double> mm, md;
      field_vars(s, t, mm, md);
      const double nrm = s.psi.squaredNorm();
      const double e = energy(s.psi, mm, md);
      tr.time.push_back(t);
      tr.dipole.push_back(s.psi.cwiseAbs2().dot(x_));
      tr.current.push_back(current(s.psi));
      tr.energy.push_back(e);
      tr.norm.push_back(nrm);
      std::vector<double> a(nb);
      for (int k = 0; k < nb; ++k) a[k] = -speed_of_light * c_[k] * mm[k];
      tr.vector_potential.push_back(a);
      if (t >= opt.energy_reference_time) {
        if (std::isnan(e_ref)) e_ref = e;
        tr.max_energy_drift = std::max(tr.max_energy_drift, std::abs(e - e_ref) / std::max(std::abs(e_ref), 1e-300));
      }
    };

    record(y, 0.0);
    for (long n = 0; n < steps; ++n) {
      const double t = n * opt.dt;
      t_start = t;
      j_start = current(y.psi);
      stepper.step(y, t, opt.dt, deriv);
      const double t1 = (n + 1) * opt.dt;
      if (!ode && m_.mean_field) {
        const double j1 = current(y.psi);
        for (int k = 0; k < nb; ++k) {
          const double w = m_.modes.dressed_omegas[k];
          const double eps = m_.modes.dressed_polarizations[k];
          c_sum[k] += 0.5 * opt.dt * eps * (std::cos(w * t) * j_start + std::cos(w * t1) * j1);
          s_sum[k] += 0.5 * opt.dt * eps * (std::sin(w * t) * j_start + std::sin(w * t1) * j1);
        }
      }
      const double drift = std::abs(y.psi.squaredNorm() - 1.0);
      tr.max_norm_drift = std::max(tr.max_norm_drift, drift);
      if (drift > opt.norm_abort) {
        std::ostringstream msg;
        msg << "norm drift " << drift << " exceeded limit at step " << n + 1;
        throw PropagationError(msg.str(), n + 1);
      }
      if ((n + 1) % opt.sample_stride == 0) record(y, t1);
    }
    tr.steps = steps;
    tr.final_state = y.psi;
    return tr;
  }

  // conserved quantity once the external kick has died out
  double energy(const ComplexVector& psi, const std::vector<double>& mm, const std::vector<double>& md) const {
    ComplexVector kp = kin_ * psi;
    double e = std::real(psi.dot(kp)) + psi.cwiseAbs2().dot(v_);
    if (m_.xc_energy) e += m_.xc_energy(density(psi));
    const double j = current(psi);
    for (int k = 0; k < m_.modes.count(); ++k) {
      const double w = m_.modes.dressed_omegas[k];
      const double eps = m_.modes.dressed_polarizations[k];
      if (m_.fluctuations) e += 0.25 * c_[k] * j * j;
      if (m_.mean_field) e += c_[k] * (-eps * mm[k] * j + 0.5 * (mm[k] * mm[k] + md[k] * md[k] / (w * w)));
    }
    return e;
  }

private:
  MatterFieldModel m_;
  std::vector<double> c_;
  double mass_ = 1.0;
  RealSparse kin_;
  RealSparse deriv_;
  RealVector v_, x_;
  double dx_ = 1.0;
};

inline Trajectory propagate_pf_free(const ComplexVector& state, const Grid1D& grid, const Potential1D& v,
                                    const ModeSet& modes, const PhotonFreeConfig& cfg,
                                    std::function<double(double)> kick, const PropagationOptions& opt) {
  if (!(opt.dt > 0)) throw std::invalid_argument("time step must be positive");
  MatterFieldModel model{matter_operators(grid, v, cfg.order), modes};
  model.fluctuations = true;
  model.mean_field = true;
  model.history = cfg.history;
  model.kick = std::move(kick);
  return MatterFieldPropagator(model).propagate(state, opt);
}

}  // namespace qedlab
