#pragma once

#include "photon_free.hpp"
#include "qedft.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace qedlab {

// Lorentzian-shaped impulse; v_kick(x, t) = -amplitude(t) x
struct KickProtocol {
  double strength = 1e-4;
  double t0 = 1.0;
  double width = 1e-2;

  double amplitude(double t) const {
    const double s = t - t0;
    return strength / M_PI * width / (s * s + width * width);
  }
  std::function<double(double)> as_function() const {
    KickProtocol k = *this;
    return [k](double t) { return k.amplitude(t); };
  }
};

struct SpectrumRun {
  double dt = 5e-4;
  double t_end = 1000.0;
  double damping = 5e-3;
  int sample_stride = 20;
  double energy_reference_time = 2.0;
  double norm_abort = 1e-6;
  // output frequency axis
  double omega_min = 0.0;
  double omega_max = 1.5;
  int omega_points = 1501;

  PropagationOptions propagation() const {
    PropagationOptions p;
    p.dt = dt;
    p.t_end = t_end;
    p.sample_stride = sample_stride;
    p.energy_reference_time = energy_reference_time;
    p.norm_abort = norm_abort;
    return p;
  }
  std::vector<double> omega_axis() const {
    std::vector<double> w(omega_points);
    for (int i = 0; i < omega_points; ++i)
      w[i] = omega_points > 1 ? omega_min + (omega_max - omega_min) * i / (omega_points - 1.0) : omega_min;
    return w;
  }
};

// Classical normal-mode coordinate M driven by the paramagnetic current:
// M'' = w~^2 (eps~ J - M). The vector potential is A = -c c_b M.
class MaxwellMode {
public:
  MaxwellMode(double dressed_omega, double dressed_polarization, double mass_shift)
      : w_(dressed_omega), eps_(dressed_polarization), c_(mass_shift) {}

  double coordinate() const { return m_; }
  double velocity() const { return v_; }
  double vector_potential() const { return -speed_of_light * c_ * m_; }

  void step(const std::function<double(double)>& j, double t, double dt) {
    auto f = [&](double tt, double m, double v, double& dm, double& dv) {
      dm = v;
      dv = w_ * w_ * (eps_ * j(tt) - m);
    };
    double a1, b1, a2, b2, a3, b3, a4, b4;
    f(t, m_, v_, a1, b1);
    f(t + 0.5 * dt, m_ + 0.5 * dt * a1, v_ + 0.5 * dt * b1, a2, b2);
    f(t + 0.5 * dt, m_ + 0.5 * dt * a2, v_ + 0.5 * dt * b2, a3, b3);
    f(t + dt, m_ + dt * a3, v_ + dt * b3, a4, b4);
    m_ += dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    v_ += dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4);
  }

private:
  double w_, eps_, c_;
  double m_ = 0, v_ = 0;
};

using HamiltonianApply = std::function<void(double t, const ComplexVector& psi, ComplexVector& out)>;

struct Recorders {
  std::function<double(const ComplexVector&)> dipole;
  std::function<double(const ComplexVector&)> energy;  // optional
};

// RK4 for i d/dt psi = H(t) psi with a generic operator application
inline Trajectory propagate(const HamiltonianApply& h, const ComplexVector& state, const PropagationOptions& opt,
                            const Recorders& rec) {
  if (!(opt.dt > 0)) throw std::invalid_argument("time step must be positive");
  if (std::abs(state.squaredNorm() - 1.0) > 1e-10) throw std::invalid_argument("initial state must be normalized");
  PhaseState y{state, RealVector()};
  Rk4Stepper stepper;
  Trajectory tr;
  ComplexVector hpsi(state.size());
  auto deriv = [&](double t, const PhaseState& s, PhaseState& ds) {
    h(t, s.psi, hpsi);
    ds.psi = cplx(0, -1) * hpsi;
  };
  double e_ref = std::numeric_limits<double>::quiet_NaN();
  auto record = [&](double t) {
    tr.time.push_back(t);
    tr.dipole.push_back(rec.dipole ? rec.dipole(y.psi) : 0.0);
    tr.norm.push_back(y.psi.squaredNorm());
    if (rec.energy) {
      const double e = rec.energy(y.psi);
      tr.energy.push_back(e);
      if (t >= opt.energy_reference_time) {
        if (std::isnan(e_ref)) e_ref = e;
        tr.max_energy_drift = std::max(tr.max_energy_drift, std::abs(e - e_ref) / std::max(std::abs(e_ref), 1e-300));
      }
    }
  };
  const long steps = std::lround(opt.t_end / opt.dt);
  record(0.0);
  for (long n = 0; n < steps; ++n) {
    stepper.step(y, n * opt.dt, opt.dt, deriv);
    const double drift = std::abs(y.psi.squaredNorm() - 1.0);
    tr.max_norm_drift = std::max(tr.max_norm_drift, drift);
    if (drift > opt.norm_abort) {
      std::ostringstream msg;
      msg << "norm drift " << drift << " exceeded limit at step " << n + 1;
      throw PropagationError(msg.str(), n + 1);
    }
    if ((n + 1) % opt.sample_stride == 0) record((n + 1) * opt.dt);
  }
  tr.steps = steps;
  tr.final_state = y.psi;
  return tr;
}

struct Spectrum {
  std::vector<double> omega;
  std::vector<double> amplitude;
};

// |sum_n (d_n - d_0) exp(-eta t_n) exp(i w t_n) dt| on the requested axis
inline Spectrum damped_spectrum(const std::vector<double>& time, const std::vector<double>& dipole, double eta,
                                const std::vector<double>& omega) {
  if (time.size() != dipole.size()) throw std::invalid_argument("time and dipole traces differ in length");
  Spectrum s{omega, std::vector<double>(omega.size(), 0.0)};
  const std::size_t n = time.size();
  if (n < 2) return s;
  const double dt = time[1] - time[0];
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = (dipole[i] - dipole[0]) * std::exp(-eta * time[i]);
  for (std::size_t k = 0; k < omega.size(); ++k) {
    const cplx rot = std::polar(1.0, omega[k] * dt);
    cplx phase = std::polar(1.0, omega[k] * time[0]);
    cplx acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += f[i] * phase;
      phase *= rot;
      if ((i & 1023) == 1023) phase /= std::abs(phase);
    }
    s.amplitude[k] = std::abs(acc) * dt;
  }
  return s;
}

struct Peak {
  double omega = 0;
  double height = 0;
};

// local maxima above rel_height * global max, parabola-refined, ascending in omega
inline std::vector<Peak> find_peaks(const Spectrum& s, double rel_height = 0.05) {
  std::vector<Peak> out;
  const std::size_t n = s.amplitude.size();
  if (n < 3) return out;
  const double top = *std::max_element(s.amplitude.begin(), s.amplitude.end());
  if (!(top > 0)) return out;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    const double a = s.amplitude[i - 1], b = s.amplitude[i], c = s.amplitude[i + 1];
    if (!(b > a && b >= c) || b < rel_height * top) continue;
    const double den = a - 2 * b + c;
    const double shift = den != 0.0 ? 0.5 * (a - c) / den : 0.0;
    const double h = s.omega[i + 1] - s.omega[i];
    out.push_back({s.omega[i] + shift * h, b - 0.25 * (a - c) * shift});
  }
  return out;
}

// the k highest peaks, returned ascending in omega
inline std::vector<Peak> dominant_peaks(const Spectrum& s, int k, double rel_height = 0.05) {
  auto p = find_peaks(s, rel_height);
  std::sort(p.begin(), p.end(), [](const Peak& a, const Peak& b) { return a.height > b.height; });
  if (static_cast<int>(p.size()) > k) p.resize(k);
  std::sort(p.begin(), p.end(), [](const Peak& a, const Peak& b) { return a.omega < b.omega; });
  return p;
}

enum class SpectrumSystem { exact_pf, exact_pzw, photon_free, maxwell_classical, pxlda_maxwell };

inline const char* to_string(SpectrumSystem s) {
  switch (s) {
    case SpectrumSystem::exact_pf: return "exact-pf";
    case SpectrumSystem::exact_pzw: return "exact-pzw";
    case SpectrumSystem::photon_free: return "photon-free";
    case SpectrumSystem::maxwell_classical: return "maxwell";
    case SpectrumSystem::pxlda_maxwell: return "pxlda-maxwell";
  }
  return "?";
}

struct SpectrumParams {
  Grid1D grid{151, 0.2, Boundary::dirichlet};
  double softening = 1.0;
  std::vector<CavityMode> modes;
  FockTruncation truncation{20};
  FdOrder order = FdOrder::fourth;
  HistoryMode history = HistoryMode::auxiliary_ode;
  XcConfig xc{XcFunctional::pxlda};
  EigenOptions eigen{1e-11};
};

struct SpectrumResult {
  Spectrum spectrum;
  double ground_energy = 0;
  double max_norm_drift = 0;
  double max_energy_drift = 0;
  long steps = 0;
  Trajectory trajectory;
};

namespace detail {

// row-major copy for a single fused pass of out = H psi
template <class S>
struct RowApply {
  Eigen::SparseMatrix<S, Eigen::RowMajor> m;
  explicit RowApply(const Eigen::SparseMatrix<S>& h) : m(h) { m.makeCompressed(); }
  void operator()(const ComplexVector& psi, ComplexVector& out) const {
    const int* outer = m.outerIndexPtr();
    const int* inner = m.innerIndexPtr();
    const S* val = m.valuePtr();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      cplx acc = 0;
      for (int k = outer[i]; k < outer[i + 1]; ++k) acc += val[k] * psi[inner[k]];
      out[i] = acc;
    }
  }
};

inline Trajectory propagate_exact(const SpectrumParams& p, Gauge gauge, const KickProtocol& kick,
                                  const PropagationOptions& opt, double& e0) {
  const Potential1D v = soft_coulomb(p.grid, p.softening);
  const ModeSet modes = dress_modes(p.modes);
  ExactOptions eo;
  eo.order = p.order;
  const RealVector x = p.grid.coordinates();
  const int nm = p.grid.size();
  auto dipole = [x, nm](const ComplexVector& psi) {
    double d = 0;
    for (Eigen::Index f = 0; f < psi.size() / nm; ++f) d += psi.segment(f * nm, nm).cwiseAbs2().dot(x);
    return d;
  };
  auto add_kick = [x, nm, kick](double t, const ComplexVector& psi, ComplexVector& out) {
    const double k = kick.amplitude(t);
    for (Eigen::Index f = 0; f < psi.size() / nm; ++f)
      out.segment(f * nm, nm).array() -= k * x.array() * psi.segment(f * nm, nm).array();
  };
  ComplexVector psi0;
  Recorders rec;
  rec.dipole = dipole;
  HamiltonianApply h;
  if (gauge == Gauge::pf) {
    auto ham = std::make_shared<CoupledHamiltonian<cplx>>(
        build_pf_hamiltonian(p.grid, v, modes, p.truncation, PfForm::dressed_bilinear, eo));
    auto gs = ground_state(*ham, p.eigen);
    e0 = gs.energy;
    psi0 = gs.state.normalized();
    auto op = std::make_shared<RowApply<cplx>>(ham->matrix);
    h = [op, add_kick](double t, const ComplexVector& psi, ComplexVector& out) {
      (*op)(psi, out);
      add_kick(t, psi, out);
    };
    rec.energy = [ham](const ComplexVector& psi) {
      return std::real(psi.dot(ham->matrix * psi)) - ham->energy_offset;
    };
  } else {
    auto ham = std::make_shared<CoupledHamiltonian<double>>(build_pzw_hamiltonian(p.grid, v, modes, p.truncation, eo));
    auto gs = ground_state(*ham, p.eigen);
    e0 = gs.energy;
    psi0 = gs.state.normalized().cast<cplx>();
    auto op = std::make_shared<RowApply<double>>(ham->matrix);
    h = [op, add_kick](double t, const ComplexVector& psi, ComplexVector& out) {
      (*op)(psi, out);
      add_kick(t, psi, out);
    };
    rec.energy = [ham](const ComplexVector& psi) {
      const RealVector re = psi.real(), im = psi.imag();
      return re.dot(ham->matrix * re) + im.dot(ham->matrix * im) - ham->energy_offset;
    };
  }
  return propagate(h, psi0, opt, rec);
}

inline Trajectory propagate_matter_field(const SpectrumParams& p, SpectrumSystem system, const KickProtocol& kick,
                                         const PropagationOptions& opt, double& e0) {
  const Potential1D v = soft_coulomb(p.grid, p.softening);
  const ModeSet modes = dress_modes(p.modes);
  MatterFieldModel model{matter_operators(p.grid, v, p.order), modes};
  model.history = p.history;
  model.kick = kick.as_function();
  ComplexVector psi0;
  if (system == SpectrumSystem::photon_free) {
    PhotonFreeConfig cfg;
    cfg.order = p.order;
    auto gs = ground_state(build_static_pf_free_hamiltonian(p.grid, v, modes, cfg), p.eigen);
    e0 = gs.energy;
    psi0 = gs.state.normalized();
    model.fluctuations = true;
  } else if (system == SpectrumSystem::maxwell_classical) {
    XcConfig none;
    none.functional = XcFunctional::none;
    ScfOptions so;
    so.order = p.order;
    so.eigen = p.eigen;
    KsState ks = scf_solve(p.grid, v, modes, none, so);
    e0 = ks.energy;
    psi0 = (ks.orbital * std::sqrt(p.grid.spacing())).cast<cplx>();
    model.fluctuations = false;
  } else {
    XcConfig xc = p.xc;
    xc.functional = XcFunctional::pxlda;
    ScfOptions so;
    so.order = p.order;
    so.eigen = p.eigen;
    KsState ks = scf_solve(p.grid, v, modes, xc, so);
    if (!ks.converged) throw std::runtime_error("pxLDA ground state did not converge");
    e0 = ks.energy;
    psi0 = (ks.orbital * std::sqrt(p.grid.spacing())).cast<cplx>();
    model.fluctuations = false;
    const Grid1D g = p.grid;
    model.xc_potential = [g, modes, xc](const RealVector& rho) { return v_pxlda(rho, g, modes, xc); };
    model.xc_energy = [g, modes, xc](const RealVector& rho) { return pxlda_energy(rho, g, modes, xc); };
  }
  model.mean_field = true;
  psi0 /= psi0.norm();
  return MatterFieldPropagator(model).propagate(psi0, opt);
}

}  // namespace detail

inline SpectrumResult kick_and_spectrum(SpectrumSystem system, const SpectrumParams& params,
                                        const KickProtocol& kick = {}, const SpectrumRun& run = {}) {
  if (params.grid.periodic()) throw std::invalid_argument("spectra need a dirichlet grid");
  if (params.modes.empty()) throw std::invalid_argument("at least one cavity mode is required");
  SpectrumResult r;
  const PropagationOptions opt = run.propagation();
  if (system == SpectrumSystem::exact_pf || system == SpectrumSystem::exact_pzw)
    r.trajectory = detail::propagate_exact(params, system == SpectrumSystem::exact_pf ? Gauge::pf : Gauge::pzw, kick,
                                           opt, r.ground_energy);
  else
    r.trajectory = detail::propagate_matter_field(params, system, kick, opt, r.ground_energy);
  r.spectrum = damped_spectrum(r.trajectory.time, r.trajectory.dipole, run.damping, run.omega_axis());
  r.max_norm_drift = r.trajectory.max_norm_drift;
  r.max_energy_drift = r.trajectory.max_energy_drift;
  r.steps = r.trajectory.steps;
  r.trajectory.final_state.resize(0);
  return r;
}

struct SweepPoint {
  double omega_mode = 0;
  double lambda = 0;
  bool ok = false;
  std::string status = "pending";
  SpectrumResult result;
};

struct SpectrumMap {
  std::vector<double> omega;  // spectral axis
  std::vector<SweepPoint> points;  // ascending in the cavity frequency
  bool all_ok() const {
    return std::all_of(points.begin(), points.end(), [](const SweepPoint& p) { return p.ok; });
  }
};

inline int worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QEDLAB_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs independent jobs 0..n-1 on at most `workers` threads.
inline void parallel_for(int n, int workers, const std::function<void(int)>& job) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) job(i);
    });
  for (auto& t : pool) t.join();
}

// One kick-and-spectrum run per cavity frequency with lambda from the fixed g/omega ratio.
// A failing point keeps its status message; the others are still computed.
inline SpectrumMap spectrum_sweep(SpectrumSystem system, const std::vector<double>& omegas, double ratio,
                                  const SpectrumParams& base, const KickProtocol& kick = {},
                                  const SpectrumRun& run = {}, int workers = 0,
                                  const std::function<void(const SweepPoint&)>& on_done = {}) {
  if (!std::is_sorted(omegas.begin(), omegas.end())) throw std::invalid_argument("cavity frequencies must be ascending");
  SpectrumMap map;
  if (omegas.empty()) return map;
  map.omega = run.omega_axis();
  map.points.resize(omegas.size());
  std::mutex done_lock;
  parallel_for(static_cast<int>(omegas.size()), worker_count(workers), [&](int i) {
    SweepPoint& pt = map.points[i];
    pt.omega_mode = omegas[i];
    pt.lambda = lambda_from_ratio(omegas[i], ratio);
    SpectrumParams p = base;
    p.modes = {CavityMode{pt.omega_mode, pt.lambda, 1.0}};
    try {
      pt.result = kick_and_spectrum(system, p, kick, run);
      pt.ok = true;
      pt.status = "ok";
    } catch (const std::exception& e) {
      pt.ok = false;
      pt.status = e.what();
    }
    if (on_done) {
      std::lock_guard<std::mutex> g(done_lock);
      on_done(pt);
    }
  });
  return map;
}

}  // namespace qedlab
