// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
// Spectral criteria run on the reduced 151 x 0.2 grid with max_n = 20.
#include <qedlab/dynamics.hpp>
#include <qedlab/exact_qed.hpp>
#include <qedlab/pheg.hpp>
#include <qedlab/photon_free.hpp>
#include <qedlab/qedft.hpp>

#include <unsupported/Eigen/MatrixFunctions>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace qedlab;

namespace {

int failures = 0;

void report(int id, bool pass, const std::string& detail) {
  std::printf("criterion %2d: %s  %s\n", id, pass ? "PASS" : "FAIL", detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

void note(const std::string& s) {
  std::fprintf(stderr, "  %s\n", s.c_str());
  std::fflush(stderr);
}

std::string sci(double v) {
  char b[32];
  std::snprintf(b, sizeof b, "%.3e", v);
  return b;
}

std::string fix(double v, int digits = 5) {
  char b[32];
  std::snprintf(b, sizeof b, "%.*f", digits, v);
  return b;
}

const EigenOptions tight{1e-12};

const std::vector<double> lambda_grid{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};

double dense_bare_energy(const Grid1D& g, const Potential1D& v) {
  auto m = matter_operators(g, v);
  Eigen::MatrixXcd h = Eigen::MatrixXcd(m.kinetic.cast<cplx>() + m.potential);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(h, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

double exact_periodic(const Grid1D& g, const Potential1D& v, const ModeSet& ms, int max_n) {
  return ground_state(build_pf_hamiltonian(g, v, ms, {max_n}, PfForm::dressed_bilinear), tight).energy;
}

double pheg_energy(const Grid1D& g, const Potential1D& v, const ModeSet& ms, int max_n, PhegPotential pot) {
  PhegOptions opt;
  opt.potential = pot;
  opt.eigen = tight;
  return pheg_ground_state(build_pheg_hamiltonian(g, v, ms, {max_n}, opt), tight).energy;
}

double scf_energy(const Grid1D& g, const Potential1D& v, const ModeSet& ms, XcConfig cfg) {
  KsState st = scf_solve(g, v, ms, cfg);
  if (!st.converged) throw std::runtime_error("SCF did not converge");
  return st.energy;
}

XcConfig functional(XcFunctional f, bool mollify = false) {
  XcConfig c;
  c.functional = f;
  c.mollify_external = mollify;
  return c;
}

// ---- criterion 1

void gauge_invariance() {
  const Grid1D g(301, 0.1, Boundary::dirichlet);
  const auto v = soft_coulomb(g, 1.0);
  double worst = 0;
  for (double lam : {0.05, 0.1, 0.2})
    for (double w : {0.2, 0.4, 0.8}) {
      const ModeSet ms = dress_modes({{w, lam, 1.0}});
      const double pf = ground_state(build_pf_hamiltonian(g, v, ms, {40}, PfForm::dressed_bilinear), tight).energy;
      const double pzw = ground_state(build_pzw_hamiltonian(g, v, ms, {40}), tight).energy;
      worst = std::max(worst, std::abs(pf - pzw));
      note("lambda " + fix(lam, 2) + " omega " + fix(w, 1) + ": |PF - PZW| = " + sci(std::abs(pf - pzw)));
    }
  report(1, worst <= 1e-6, "max |E_PF - E_PZW| = " + sci(worst) + " (<= 1e-6) on 3x3 lattice, max_n 40");
}

// ---- criterion 2

void decoupled_limit() {
  double worst = 0;
  std::string who;
  auto check = [&](const std::string& name, double e, double ref) {
    if (std::abs(e - ref) > worst) {
      worst = std::abs(e - ref);
      who = name;
    }
  };
  {
    const Grid1D g(301, 0.1, Boundary::dirichlet);
    const auto v = soft_coulomb(g, 1.0);
    const double ref = dense_bare_energy(g, v);
    const ModeSet ms = dress_modes({{0.4, 0.0, 1.0}});
    check("exact-pf", ground_state(build_pf_hamiltonian(g, v, ms, {4}, PfForm::dressed_bilinear), tight).energy, ref);
    check("exact-pzw", ground_state(build_pzw_hamiltonian(g, v, ms, {4}), tight).energy, ref);
    check("photon-free", ground_state(build_static_pf_free_hamiltonian(g, v, ms), tight).energy, ref);
    check("qedft-px", scf_energy(g, v, ms, functional(XcFunctional::px_orbital)), ref);
    check("qedft-pxlda", scf_energy(g, v, ms, functional(XcFunctional::pxlda)), ref);
  }
  {
    const Grid1D g(31, 0.5, Boundary::periodic);
    const auto v = soft_coulomb(g, 1.0);
    const double ref = dense_bare_energy(g, v);
    const ModeSet ms = dress_modes({{1.0, 0.0, 1.0}});
    check("pheg", pheg_energy(g, v, ms, 4, PhegPotential::raw), ref);
    check("pheg-mollified", pheg_energy(g, v, ms, 0, PhegPotential::mollified_00), ref);
  }
  report(2, worst <= 1e-9, "max deviation from dense oracle at lambda = 0: " + sci(worst) + " (" + who + ", <= 1e-9)");
}

// ---- criterion 3

void homogeneous_photon_number() {
  const Grid1D g(31, 0.5, Boundary::periodic);
  const auto v0 = zero_potential(g);
  double worst = 0;
  for (double w : {0.4, 1.0})
    for (double lam : {0.3, 1.0}) {
      const ModeSet ms = dress_modes({{w, lam, 1.0}});
      const double wt = ms.dressed_omegas[0];
      const double target = (wt - w) * (wt - w) / (4 * wt * w);
      auto hx = build_pf_hamiltonian(g, v0, ms, {30}, PfForm::dressed_bilinear);
      const double n_exact = observables(hx, ground_state(hx, tight).state).photon_number[0];
      auto hf = build_static_pf_free_hamiltonian(g, v0, ms);
      const double n_free = reconstruct_photon_observables(hf.matter, ground_state(hf, tight).state.normalized(), ms)
                                .photon_number[0];
      auto hp = build_pheg_hamiltonian(g, v0, ms, {4});
      const double n_pheg = pheg_observables(hp, pheg_ground_state(hp, tight).state.normalized()).photon_number[0];
      for (double n : {n_exact, n_free, n_pheg}) worst = std::max(worst, std::abs(n / target - 1));
    }
  report(3, worst <= 1e-6, "max relative deviation from (wt-w)^2/(4 wt w): " + sci(worst) + " (<= 1e-6)");
}

// ---- criterion 4

void pheg_completeness() {
  const Grid1D g(31, 0.5, Boundary::periodic);
  const auto v = soft_coulomb(g, 1.0);
  double worst = 0;
  bool beats = true;
  std::ostringstream d;
  for (double lam : {0.25, 0.5, 1.0}) {
    const ModeSet ms = dress_modes({{1.0, lam, 1.0}});
    const double ref = exact_periodic(g, v, ms, 100);
    worst = std::max(worst, std::abs(pheg_energy(g, v, ms, 20, PhegPotential::raw) - ref));
    if (lam >= 0.5) {
      const double e4 = std::abs(pheg_energy(g, v, ms, 4, PhegPotential::raw) - ref);
      const double b4 = std::abs(ground_state(build_pf_hamiltonian(g, v, ms, {4}, PfForm::bare_with_A2), tight).energy - ref);
      beats = beats && e4 < b4;
      d << " lambda " << lam << ": pheg4 " << sci(e4) << " vs pf4 " << sci(b4) << ";";
    }
  }
  report(4, worst <= 1e-7 && beats, "|pheg20 - pf100| max " + sci(worst) + " (<= 1e-7);" + d.str());
}

// ---- criteria 5, 6, 7 share the resonant lambda grid

struct ResonantData {
  std::vector<double> exact, free, px, px_moll, pxlda, bare;
};

ResonantData resonant_sweep(double& omega_res) {
  const Grid1D g(301, 0.1, Boundary::dirichlet);
  const auto v = soft_coulomb(g, 1.0);
  auto m = matter_operators(g, v);
  auto e = lowest_eigenpairs<cplx>(ComplexSparse(m.kinetic.cast<cplx>() + m.potential), 2, tight);
  omega_res = e.values[1] - e.values[0];
  ResonantData r;
  for (double lam : lambda_grid) {
    const ModeSet ms = dress_modes({{omega_res, lam, 1.0}});
    r.exact.push_back(ground_state(build_pzw_hamiltonian(g, v, ms, {40}), tight).energy);
    r.free.push_back(ground_state(build_static_pf_free_hamiltonian(g, v, ms), tight).energy);
    r.px.push_back(scf_energy(g, v, ms, functional(XcFunctional::px_orbital)));
    r.px_moll.push_back(scf_energy(g, v, ms, functional(XcFunctional::px_orbital, true)));
    r.pxlda.push_back(scf_energy(g, v, ms, functional(XcFunctional::pxlda)));
    r.bare.push_back(scf_energy(g, v, ms, functional(XcFunctional::none)));
    note("lambda " + fix(lam, 2) + ": exact " + fix(r.exact.back(), 8) + " px " + fix(r.px.back(), 8) + " pxlda " +
         fix(r.pxlda.back(), 8) + " bare " + fix(r.bare.back(), 8));
  }
  return r;
}

void mollification(const ResonantData& r) {
  // pHEG zero sector lives on a ring; its reference is the periodic exact solution
  const Grid1D g(31, 0.5, Boundary::periodic);
  const auto v = soft_coulomb(g, 1.0);
  auto m = matter_operators(g, v);
  auto e = lowest_eigenpairs<cplx>(ComplexSparse(m.kinetic.cast<cplx>() + m.potential), 2, tight);
  const double w = e.values[1] - e.values[0];
  double worst = 0;  // most negative E_mollified - E_exact
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
    const ModeSet ms = dress_modes({{w, lambda_grid[i], 1.0}});
    const double ref = exact_periodic(g, v, ms, 60);
    worst = std::min(worst, pheg_energy(g, v, ms, 0, PhegPotential::mollified_00) - ref);
    worst = std::min(worst, r.px_moll[i] - r.exact[i]);
  }
  report(5, worst >= -1e-8, "min (E_mollified - E_exact) over 11 lambdas = " + sci(worst) + " (>= -1e-8)");
}

void px_equivalence(const ResonantData& r) {
  double worst = 0;
  for (std::size_t i = 0; i < lambda_grid.size(); ++i) worst = std::max(worst, std::abs(r.px[i] - r.free[i]));
  report(6, worst <= 1e-7, "max |E_px - E_photon-free| over 11 lambdas = " + sci(worst) + " (<= 1e-7)");
}

void pxlda_window(const ResonantData& r) {
  std::string bad;
  for (std::size_t i = 0; i < lambda_grid.size() && lambda_grid[i] <= 0.3 + 1e-12; ++i) {
    const double lda = std::abs(r.pxlda[i] - r.exact[i]);
    const double bare = std::abs(r.bare[i] - r.exact[i]);
    if (lda > bare + 1e-10) bad += " " + fix(lambda_grid[i], 2) + "(" + sci(lda) + ">" + sci(bare) + ")";
  }
  const std::size_t k = 6;  // lambda = 0.3
  const double lda = std::abs(r.pxlda[k] - r.exact[k]), px = std::abs(r.px[k] - r.exact[k]);
  const bool cancel = lda < px;
  std::string d = "pxLDA error <= bare-KS error for lambda <= 0.3: " + std::string(bad.empty() ? "yes" : "violated at" + bad) +
                  "; at lambda 0.3 pxLDA " + sci(lda) + (cancel ? " < " : " >= ") + "px " + sci(px);
  report(7, bad.empty() && cancel, d);
}

// ---- criteria 8, 9, 10: kick spectra

struct BareLines {
  double first = 0;   // brightest transition
  double second = 0;  // next bright transition
};

BareLines bare_lines(const Grid1D& g) {
  auto m = matter_operators(g, soft_coulomb(g, 1.0));
  auto e = lowest_eigenpairs<cplx>(ComplexSparse(m.kinetic.cast<cplx>() + m.potential), 8, tight);
  const RealVector x = g.coordinates();
  std::vector<std::pair<double, double>> lines;  // (|dipole|, energy)
  for (int n = 1; n < static_cast<int>(e.values.size()); ++n) {
    const double d = std::abs(e.vectors[0].dot(x.cast<cplx>().cwiseProduct(e.vectors[n])));
    lines.push_back({d, e.values[n] - e.values[0]});
  }
  std::sort(lines.rbegin(), lines.rend());
  return {lines[0].second, lines[1].second};
}

double strongest_in(const Spectrum& s, double lo, double hi) {
  double best = std::nan(""), h = -1;
  for (const Peak& p : find_peaks(s, 2e-3))
    if (p.omega > lo && p.omega < hi && p.height > h) {
      h = p.height;
      best = p.omega;
    }
  return best;
}

struct Drift {
  double norm = 0, energy = 0;
  int runs = 0;
  void add(const SpectrumResult& r) {
    norm = std::max(norm, r.max_norm_drift);
    energy = std::max(energy, r.max_energy_drift);
    ++runs;
  }
};

void spectra() {
  using clock = std::chrono::steady_clock;
  SpectrumParams base;  // 151 x 0.2, max_n 20
  const double ratio = 0.136;
  const BareLines bare = bare_lines(base.grid);
  const double w_res = bare.first;
  note("bare lines " + fix(bare.first) + ", " + fix(bare.second));
  const KickProtocol kick;
  const SpectrumRun run;
  Drift drift;
  bool all_ran = true;

  // exact reference at resonance
  SpectrumParams p = base;
  p.modes = {CavityMode{w_res, lambda_from_ratio(w_res, ratio), 1.0}};
  auto t0 = clock::now();
  std::vector<Peak> exact_peaks;
  try {
    SpectrumResult ex = kick_and_spectrum(SpectrumSystem::exact_pf, p, kick, run);
    drift.add(ex);
    exact_peaks = dominant_peaks(ex.spectrum, 2);
  } catch (const std::exception& e) {
    all_ran = false;
    note(std::string("exact run failed: ") + e.what());
  }
  note("exact-pf run " + fix(std::chrono::duration<double>(clock::now() - t0).count(), 0) + " s");

  // reduced frequency sweep for the photon-free and adiabatic maps
  const std::vector<double> omegas{0.1, 0.2, w_res, 0.7, 1.0};
  auto on_done = [](const SweepPoint& pt) {
    note("  omega " + fix(pt.omega_mode, 3) + (pt.ok ? " done" : " failed: " + pt.status));
  };
  t0 = clock::now();
  SpectrumMap free_map = spectrum_sweep(SpectrumSystem::photon_free, omegas, ratio, base, kick, run, 0, on_done);
  SpectrumMap lda_map = spectrum_sweep(SpectrumSystem::pxlda_maxwell, omegas, ratio, base, kick, run, 0, on_done);
  note("sweeps " + fix(std::chrono::duration<double>(clock::now() - t0).count(), 0) + " s");
  for (const SpectrumMap* m : {&free_map, &lda_map})
    for (const auto& pt : m->points) {
      if (pt.ok) drift.add(pt.result);
      all_ran = all_ran && pt.ok;
    }

  // criterion 8
  const SweepPoint& free_res = free_map.points[2];
  std::vector<Peak> free_peaks = free_res.ok ? dominant_peaks(free_res.result.spectrum, 2) : std::vector<Peak>{};
  bool ok8 = exact_peaks.size() == 2 && free_peaks.size() == 2;
  std::string d8 = "exact peaks missing";
  double pf_dev = std::nan("");
  if (ok8) {
    const double split = exact_peaks[1].omega - exact_peaks[0].omega;
    const double two_g = 2 * ratio * w_res;
    pf_dev = std::max(std::abs(free_peaks[0].omega - exact_peaks[0].omega),
                      std::abs(free_peaks[1].omega - exact_peaks[1].omega));
    ok8 = std::abs(split / two_g - 1) <= 0.2 && pf_dev <= 0.02;
    d8 = "exact peaks " + fix(exact_peaks[0].omega) + ", " + fix(exact_peaks[1].omega) + "; splitting " + fix(split) +
         " vs 2g " + fix(two_g) + "; photon-free peaks " + fix(free_peaks[0].omega) + ", " + fix(free_peaks[1].omega) +
         " (max offset " + fix(pf_dev) + ")";
  }
  report(8, ok8, d8);

  // criterion 9: peak loci at the low-frequency end of the maps
  bool ok9 = all_ran && std::isfinite(pf_dev) && pf_dev <= 0.02;
  std::ostringstream d9;
  for (std::size_t i = 0; i < omegas.size() && omegas[i] <= 0.2 + 1e-12; ++i) {
    const double f1 = free_map.points[i].ok ? strongest_in(free_map.points[i].result.spectrum, 0.3, 0.55) : std::nan("");
    const double l2 = lda_map.points[i].ok
                          ? strongest_in(lda_map.points[i].result.spectrum, 0.5 * (bare.first + bare.second), 0.66)
                          : std::nan("");
    // the photon-free first excitation sits above the bare line, the pxLDA second excitation too
    ok9 = ok9 && f1 > bare.first + 5e-3 && l2 > bare.second + 1e-2;
    d9 << "omega_a " << omegas[i] << ": photon-free first " << fix(f1, 4) << " (bare " << fix(bare.first, 4)
       << "), pxlda-maxwell second " << fix(l2, 4) << " (bare " << fix(bare.second, 4) << "); ";
  }
  d9 << "resonance exact vs photon-free " << fix(pf_dev, 4);
  report(9, ok9, d9.str());

  // criterion 10
  report(10, all_ran && drift.norm <= 1e-8 && drift.energy <= 1e-7,
         std::to_string(drift.runs) + " propagations: max norm drift " + sci(drift.norm) +
             ", max relative energy drift " + sci(drift.energy) + (all_ran ? "" : "; some runs failed"));
}

// ---- criterion 11

struct RandomOrbital {
  std::vector<double> amp, centre, width;
  explicit RandomOrbital(unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> a(0.2, 1.0), c(-1.5, 1.5), w(0.6, 1.4);
    for (int i = 0; i < 4; ++i) {
      amp.push_back(a(gen));
      centre.push_back(c(gen));
      width.push_back(w(gen));
    }
  }
  Jet at(const RealVector& x) const {
    const int n = static_cast<int>(x.size());
    Jet j{RealVector::Zero(n), RealVector::Zero(n), RealVector::Zero(n), RealVector::Zero(n)};
    for (std::size_t k = 0; k < amp.size(); ++k)
      for (int i = 0; i < n; ++i) {
        const double s = 1.0 / (width[k] * width[k]);
        const double y = x[i] - centre[k];
        const double e = amp[k] * std::exp(-0.5 * s * y * y);
        j.f[i] += e;
        j.d1[i] += -s * y * e;
        j.d2[i] += (s * s * y * y - s) * e;
        j.d3[i] += (-s * s * s * y * y * y + 3 * s * s * y) * e;
      }
    return j;
  }
};

void dual_forms() {
  // px gradient: orbital-current form vs density form
  double px = 0;
  const RealVector x = RealVector::LinSpaced(801, -6.0, 6.0);
  for (unsigned seed = 1; seed <= 5; ++seed) {
    const Jet p = RandomOrbital(seed).at(x);
    const Jet rho{p.f.cwiseAbs2(), 2 * p.f.cwiseProduct(p.d1), 2 * p.d1.cwiseAbs2() + 2 * p.f.cwiseProduct(p.d2),
                  6 * p.d1.cwiseProduct(p.d2) + 2 * p.f.cwiseProduct(p.d3)};
    const RealVector a = px_gradient_current_form(p, 0.37), b = px_gradient_density_form(rho, 0.37);
    px = std::max(px, (a - b).cwiseAbs().maxCoeff() / std::max(1.0, b.cwiseAbs().maxCoeff()));
  }

  // pxLDA closed form vs Poisson route
  const Grid1D g(601, 0.05, Boundary::dirichlet);
  RealVector phi(g.size());
  for (int i = 0; i < g.size(); ++i) phi[i] = std::exp(-0.5 * g.x(i) * g.x(i));
  phi /= std::sqrt(g.integrate(phi.cwiseAbs2()));
  const RealVector rho = phi.cwiseAbs2();
  const ModeSet ms = dress_modes({{0.4, 0.3, 1.0}});
  XcConfig cfg = functional(XcFunctional::pxlda);
  const RealVector closed = v_pxlda(rho, g, ms, cfg);
  cfg.lda_route = LdaRoute::poisson;
  const double lda = (closed - v_pxlda(rho, g, ms, cfg)).cwiseAbs().maxCoeff();

  // history: memory integral vs auxiliary ODE
  const double dt = 1e-3, w = 1.3;
  const int steps = 100000;
  auto j = [](double t) { return std::sin(0.7 * t) * std::exp(-0.01 * t) + 0.3 * std::cos(2.1 * t) * (1 - std::exp(-t)); };
  RealVector samples(steps + 1);
  for (int i = 0; i <= steps; ++i) samples[i] = j(i * dt);
  const RealVector ode = memory_term_ode(j, w, dt, steps);
  const double hist = (ode - memory_term_quadrature(samples, w, dt)).cwiseAbs().maxCoeff() / ode.cwiseAbs().maxCoeff();

  // displaced overlaps vs exp(d (a^+ - a)) on a 60-level space
  double ov = 0;
  for (double d : {0.3, -0.7, 1.5}) {
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(60, 60);
    for (int n = 1; n < 60; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
    const Eigen::MatrixXd dm = (d * (a.transpose() - a)).exp();
    for (int n = 0; n < 10; ++n)
      for (int m = 0; m < 10; ++m) ov = std::max(ov, std::abs(displaced_overlap(n, m, d) - dm(n, m)));
  }
  report(11, px <= 1e-8 && lda <= 1e-8 && hist <= 1e-6 && ov <= 1e-10,
         "px forms " + sci(px) + " (1e-8), pxLDA routes " + sci(lda) + " (1e-8), history " + sci(hist) +
             " (1e-6), displaced overlaps " + sci(ov) + " (1e-10)");
}

template <class F>
void guarded(int id, F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    report(id, false, std::string("exception: ") + e.what());
  }
}

}  // namespace

int main() {
  guarded(1, gauge_invariance);
  guarded(2, decoupled_limit);
  guarded(3, homogeneous_photon_number);
  guarded(4, pheg_completeness);
  double w_res = 0;
  ResonantData r;
  bool have_sweep = false;
  try {
    r = resonant_sweep(w_res);
    have_sweep = true;
  } catch (const std::exception& e) {
    for (int id : {5, 6, 7}) report(id, false, std::string("resonant sweep failed: ") + e.what());
  }
  if (have_sweep) {
    guarded(5, [&] { mollification(r); });
    guarded(6, [&] { px_equivalence(r); });
    guarded(7, [&] { pxlda_window(r); });
  }
  guarded(8, spectra);
  guarded(11, dual_forms);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
