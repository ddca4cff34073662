#pragma once

#include "exact_qed.hpp"

#include <cmath>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace qedlab {

enum class XcFunctional { none, px_orbital, pxlda };
enum class SpinFactor { closed_shell, single_electron_x2 };
enum class PxForm { density_curvature, current_force };
enum class LdaRoute { closed_form, poisson };

inline const char* to_string(XcFunctional f) {
  switch (f) {
    case XcFunctional::none: return "none";
    case XcFunctional::px_orbital: return "px_orbital";
    case XcFunctional::pxlda: return "pxlda";
  }
  return "?";
}

// longitudinal soft-Coulomb interaction s / sqrt(d^2 + a^2)
struct SoftInteraction {
  double strength = 0.0;
  double softening = 1.0;

  double operator()(double d) const { return strength / std::sqrt(d * d + softening * softening); }
  double derivative(double d) const { return -strength * d / std::pow(d * d + softening * softening, 1.5); }
};

struct XcConfig {
  XcFunctional functional = XcFunctional::px_orbital;
  double kappa = 1.0;
  int dimension = 1;
  SpinFactor spin_factor = SpinFactor::closed_shell;
  bool mollify_external = false;
  PxForm px_form = PxForm::density_curvature;
  LdaRoute lda_route = LdaRoute::closed_form;
  int occupation = 1;
  SoftInteraction interaction;  // only felt by a doubly occupied orbital
  double trust_floor = 1e-12;   // relative density below which v_px is extrapolated
};

inline void validate(const XcConfig& c) {
  if (!(c.kappa >= 0.0)) throw std::invalid_argument("kappa must be non-negative");
  if (c.dimension < 1 || c.dimension > 3) throw std::invalid_argument("dimension must be 1, 2 or 3");
  if (c.occupation != 1 && c.occupation != 2) throw std::invalid_argument("occupation must be 1 or 2");
}

// sum over modes of w_d^2 / (2 N_e w~^2)
inline double px_prefactor(const ModeSet& modes) {
  double s = 0;
  for (int b = 0; b < modes.count(); ++b) s += 0.5 * modes.mass_shift(b);
  return s;
}

// Values and derivatives of a function at sample points.
struct Jet {
  RealVector f, d1, d2, d3;
};

// gradient of v_px from the current-current form, given the orbital jet
inline RealVector px_gradient_current_form(const Jet& phi, double prefactor) {
  // d/dx [ (phi')^2 - phi'' phi ] = phi' phi'' - phi''' phi
  RealVector ds = phi.d1.cwiseProduct(phi.d2) - phi.d3.cwiseProduct(phi.f);
  return -prefactor * ds.cwiseQuotient(phi.f.cwiseAbs2());
}

// gradient of v_px from the sqrt-density form, given the density jet
inline RealVector px_gradient_density_form(const Jet& rho, double prefactor) {
  const RealVector& r = rho.f;
  RealVector r2 = r.cwiseAbs2();
  RealVector r3 = r2.cwiseProduct(r);
  // sqrt(rho)''/sqrt(rho) = rho''/(2 rho) - rho'^2/(4 rho^2)
  RealVector g = rho.d3.cwiseQuotient(2.0 * r) - rho.d2.cwiseProduct(rho.d1).cwiseQuotient(r2) +
                 rho.d1.cwiseAbs2().cwiseProduct(rho.d1).cwiseQuotient(2.0 * r3);
  return prefactor * g;
}

namespace detail {

// indices [lo, hi] where rho exceeds floor * max
inline std::pair<int, int> trusted_range(const RealVector& rho, double floor) {
  const double cut = floor * rho.maxCoeff();
  int lo = 0, hi = static_cast<int>(rho.size()) - 1;
  while (lo < hi && !(rho[lo] > cut)) ++lo;
  while (hi > lo && !(rho[hi] > cut)) --hi;
  return {lo, hi};
}

inline void extend_constant(RealVector& v, int lo, int hi) {
  for (int i = 0; i < lo; ++i) v[i] = v[lo];
  for (int i = hi + 1; i < v.size(); ++i) v[i] = v[hi];
}

}  // namespace detail

// Orbital photon-exchange potential of one real orbital (unit norm in the
// integral sense) on a dirichlet grid.
inline RealVector v_px_orbital(const RealVector& orbital, const Grid1D& grid, const ModeSet& modes,
                               PxForm form = PxForm::density_curvature, double floor = 1e-12,
                               FdOrder order = FdOrder::fourth) {
  if (grid.periodic()) throw std::invalid_argument("v_px_orbital needs a dirichlet grid");
  if (orbital.size() != grid.size()) throw std::invalid_argument("orbital does not match grid");
  const int n = grid.size();
  RealVector phi = orbital.cwiseAbs();
  RealVector rho = phi.cwiseAbs2();
  if (!(rho.maxCoeff() > 0.0)) throw std::invalid_argument("empty orbital");
  const double c = px_prefactor(modes);
  if (c == 0.0) return RealVector::Zero(n);
  auto [lo, hi] = detail::trusted_range(rho, floor);
  RealSparse lap = laplacian(grid, order);
  RealVector lp = lap * phi;
  if (form == PxForm::density_curvature) {
    RealVector v = RealVector::Zero(n);
    for (int i = lo; i <= hi; ++i) v[i] = c * lp[i] / phi[i];
    detail::extend_constant(v, lo, hi);
    return zero_edge_gauge(v, grid);
  }
  RealSparse d = first_derivative(grid, order);
  RealVector dp = d * phi;
  RealVector s = dp.cwiseAbs2() - lp.cwiseProduct(phi);
  RealVector ds = d * s;
  RealVector g = RealVector::Zero(n);
  for (int i = lo; i <= hi; ++i) g[i] = -c * ds[i] / rho[i];
  // d^2 v = d g, with the poisson convention d^2 v = -source
  RealVector src = -(d * g);
  return poisson_solve_1d(src, grid, order);
}

inline double pxlda_coefficient(const ModeSet& modes, const XcConfig& cfg) {
  double s = 0;
  for (int b = 0; b < modes.count(); ++b) {
    const double wt = modes.dressed_omegas[b];
    s += 2.0 * cfg.kappa * M_PI * M_PI * modes.omega_d2(b) / (modes.n_electrons * wt * wt);
  }
  return cfg.spin_factor == SpinFactor::single_electron_x2 ? 2.0 * s : s;
}

inline double unit_sphere_volume(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return M_PI;
    case 3: return 4.0 * M_PI / 3.0;
  }
  throw std::invalid_argument("dimension must be 1, 2 or 3");
}

inline RealVector v_pxlda(const RealVector& density, const Grid1D& grid, const ModeSet& modes, const XcConfig& cfg) {
  validate(cfg);
  if (density.size() != grid.size()) throw std::invalid_argument("density does not match grid");
  const double c = pxlda_coefficient(modes, cfg);
  const double vd = unit_sphere_volume(cfg.dimension);
  RealVector g = (density.cwiseMax(0.0) / (2.0 * vd)).array().pow(2.0 / cfg.dimension).matrix();
  if (cfg.lda_route == LdaRoute::closed_form) return -(c / cfg.dimension) * g;
  if (cfg.dimension != 1) throw std::invalid_argument("poisson route is one-dimensional");
  RealVector src = c * (laplacian(grid, FdOrder::fourth) * g);
  return poisson_solve_1d(src, grid);
}

// energy whose density derivative is the closed-form pxLDA potential
inline double pxlda_energy(const RealVector& density, const Grid1D& grid, const ModeSet& modes, const XcConfig& cfg) {
  const double c = pxlda_coefficient(modes, cfg);
  const double d = cfg.dimension;
  const double p = 2.0 / d;
  const double pref = c / d * std::pow(2.0 * unit_sphere_volume(cfg.dimension), -p) / (1.0 + p);
  return -pref * grid.integrate(density.cwiseMax(0.0).array().pow(1.0 + p).matrix());
}

// Gaussian width (variance) of the lowest-order mollifier along the polarization
inline double mollifier_variance(const ModeSet& modes) {
  double s = 0;
  for (int b = 0; b < modes.count(); ++b) {
    const double wt = modes.dressed_omegas[b];
    s += modes.omega_d2(b) / (2.0 * modes.n_electrons * wt * wt * wt);
  }
  return s;
}

// v convolved with the normalized Gaussian, by Simpson quadrature over +-10 sigma
inline Potential1D mollify_external(const Potential1D& v, const Grid1D& grid, const ModeSet& modes,
                                    int intervals = 2000) {
  const double var = mollifier_variance(modes);
  if (var == 0.0) return v;
  const double sigma = std::sqrt(var);
  const double h = 20.0 * sigma / intervals;
  RealVector out(grid.size());
  for (int i = 0; i < grid.size(); ++i) {
    const double x = grid.x(i);
    double s = 0;
    for (int j = 0; j <= intervals; ++j) {
      const double y = -10.0 * sigma + j * h;
      const double w = (j == 0 || j == intervals) ? 1.0 : (j % 2 ? 4.0 : 2.0);
      s += w * v(x - y) * std::exp(-0.5 * y * y / var);
    }
    out[i] = s * h / 3.0 / std::sqrt(2.0 * M_PI * var);
  }
  return tabulated_potential(grid, out);
}

// Hartree-exchange potential of a doubly occupied orbital from the
// interaction force; a single electron has no partner and gets zero.
inline RealVector v_hx(const RealVector& orbital, const Grid1D& grid, const SoftInteraction& w, int occupation) {
  const int n = grid.size();
  if (occupation == 1) {
    std::clog << "qedlab: v_hx requested for one electron, returning zero\n";
    return RealVector::Zero(n);
  }
  if (occupation != 2) throw std::invalid_argument("v_hx handles one doubly occupied orbital");
  if (w.strength == 0.0) return RealVector::Zero(n);
  RealVector rho = occupation * orbital.cwiseAbs2();
  const double dx = grid.spacing();
  // F_W / rho = -1/2 int rho(x') dw(x - x') dx', also needed at midpoints
  auto force = [&](double x) {
    double s = 0;
    for (int j = 0; j < n; ++j) s += rho[j] * w.derivative(x - grid.x(j));
    return -0.5 * s * dx;
  };
  // d^2 v = -d g in one dimension: v' = -g, integrated with Simpson panels
  RealVector v(n);
  v[0] = 0.0;
  double prev = force(grid.x(0));
  for (int i = 1; i < n; ++i) {
    const double mid = force(grid.x(i) - 0.5 * dx), cur = force(grid.x(i));
    v[i] = v[i - 1] - dx / 6.0 * (prev + 4.0 * mid + cur);
    prev = cur;
  }
  return zero_edge_gauge(v, grid);
}

struct ScfOptions {
  double mixing = 0.3;
  int max_iterations = 3000;
  double density_tolerance = 1e-9;
  double energy_tolerance = 1e-10;
  bool include_zero_point = false;
  FdOrder order = FdOrder::fourth;
  EigenOptions eigen{1e-12};
};

struct KsState {
  RealVector orbital;  // integral-normalized
  RealVector density;
  RealVector v_ext;    // as used, mollified if requested
  RealVector v_xc;
  RealVector v_hx;
  double eigenvalue = 0;
  double energy = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> density_residuals;
  std::vector<double> energy_history;
};

class ScfError : public std::runtime_error {
public:
  ScfError(const std::string& what, std::vector<double> residuals)
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }

private:
  std::vector<double> residuals_;
};

// E_Mx of a real orbital; the cavity term is dropped when no functional is active
inline double total_energy_mx(const RealVector& orbital, const Grid1D& grid, const RealVector& v_ext,
                              const ModeSet& modes, const XcConfig& cfg, const ScfOptions& opt = {}) {
  const double dx = grid.spacing();
  RealSparse lap = laplacian(grid, opt.order);
  const double occ = cfg.occupation;
  const double grad2 = -orbital.dot(lap * orbital) * dx;  // int (phi')^2
  RealVector rho = occ * orbital.cwiseAbs2();
  double e = 0.5 * occ * grad2 + grid.integrate(v_ext.cwiseProduct(rho));
  if (cfg.functional != XcFunctional::none) {
    e -= px_prefactor(modes) * occ * grad2;
    if (opt.include_zero_point) e += modes.zero_point_dressed();
  }
  if (cfg.occupation == 2 && cfg.interaction.strength != 0.0) {
    double s = 0;
    for (int i = 0; i < grid.size(); ++i)
      for (int j = 0; j < grid.size(); ++j) s += rho[i] * rho[j] * cfg.interaction(grid.x(i) - grid.x(j));
    e += 0.25 * s * dx * dx;
  }
  return e;
}

inline RealVector xc_potential(const RealVector& density, const Grid1D& grid, const ModeSet& modes,
                               const XcConfig& cfg) {
  switch (cfg.functional) {
    case XcFunctional::none: return RealVector::Zero(grid.size());
    case XcFunctional::px_orbital: {
      RealVector phi = (density.cwiseMax(0.0) / cfg.occupation).cwiseSqrt();
      return v_px_orbital(phi, grid, modes, cfg.px_form, cfg.trust_floor);
    }
    case XcFunctional::pxlda: return v_pxlda(density, grid, modes, cfg);
  }
  return RealVector::Zero(grid.size());
}

inline KsState scf_solve(const Grid1D& grid, const Potential1D& v, const ModeSet& modes, const XcConfig& cfg,
                         const ScfOptions& opt = {}) {
  validate(cfg);
  if (grid.periodic()) throw std::invalid_argument("scf_solve needs a dirichlet grid");
  if (v.values.size() != grid.size()) throw std::invalid_argument("potential does not match grid");
  const int n = grid.size();
  const double dx = grid.spacing();
  KsState st;
  st.v_ext = cfg.mollify_external ? mollify_external(v, grid, modes).values : v.values;
  RealSparse kin = (-0.5 * laplacian(grid, opt.order)).eval();

  auto solve = [&](const RealVector& vtot, const RealVector* guess, double& eig) {
    RealSparse h = kin;
    std::vector<Eigen::Triplet<double>> t;
    const double vmin = vtot.minCoeff();
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, vtot[i]);
    RealSparse vd(n, n);
    vd.setFromTriplets(t.begin(), t.end());
    h += vd;
    auto pre = block_preconditioner<double>(h, {0.0}, 1.0 - vmin);
    RealVector g;
    if (guess) g = *guess * std::sqrt(dx);
    auto res = lowest_eigenpairs<double>(h, 1, opt.eigen, pre, guess ? &g : nullptr);
    eig = res.values[0];
    RealVector phi = res.vectors[0] / std::sqrt(dx);
    if (phi.sum() < 0) phi = -phi;
    return phi;
  };

  double eig = 0;
  RealVector phi = solve(st.v_ext, nullptr, eig);
  RealVector rho_in = cfg.occupation * phi.cwiseAbs2();
  const bool hx = cfg.occupation == 2 && cfg.interaction.strength != 0.0;
  double e_prev = total_energy_mx(phi, grid, st.v_ext, modes, cfg, opt);
  for (int it = 1; it <= opt.max_iterations; ++it) {
    RealVector vxc = xc_potential(rho_in, grid, modes, cfg);
    RealVector vh = hx ? v_hx((rho_in / 2.0).cwiseSqrt(), grid, cfg.interaction, 2) : RealVector::Zero(n);
    phi = solve(st.v_ext + vxc + vh, &phi, eig);
    RealVector rho_out = cfg.occupation * phi.cwiseAbs2();
    const double res = (rho_out - rho_in).cwiseAbs().maxCoeff();
    const double e = total_energy_mx(phi, grid, st.v_ext, modes, cfg, opt);
    st.density_residuals.push_back(res);
    st.energy_history.push_back(e);
    if (res <= opt.density_tolerance && std::abs(e - e_prev) <= opt.energy_tolerance) {
      st.orbital = phi;
      st.density = rho_out;
      st.v_xc = vxc;
      st.v_hx = vh;
      st.eigenvalue = eig;
      st.energy = e;
      st.iterations = it;
      st.converged = true;
      return st;
    }
    e_prev = e;
    rho_in = (1.0 - opt.mixing) * rho_in + opt.mixing * rho_out;
  }
  std::ostringstream msg;
  msg << "SCF did not converge in " << opt.max_iterations << " iterations, last density residual "
      << st.density_residuals.back();
  throw ScfError(msg.str(), st.density_residuals);
}

}  // namespace qedlab
