#pragma once

#include "eigensolver.hpp"
#include "fock.hpp"
#include "grid.hpp"
#include "modes.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qedlab {

// One-particle operators in the representation matching the grid: finite
// differences on dirichlet boxes, plane waves k_j on periodic ones.
struct MatterOperators {
  Grid1D grid;
  FdOrder order = FdOrder::fourth;
  bool plane_waves = false;
  RealSparse kinetic;       // -1/2 d^2
  RealSparse momentum_sq;   // -d^2
  ComplexSparse momentum;   // -i d/dx
  ComplexSparse potential;
  RealVector potential_diagonal;  // real diagonal of the potential matrix
  RealSparse position;            // empty for plane waves

  int size() const { return grid.size(); }
};

inline ComplexSparse plane_wave_potential(const Grid1D& grid, const RealVector& v) {
  const int n = grid.size();
  // vhat(q) for every difference k - k' on the grid
  std::vector<cplx> vhat(2 * n - 1);
  const double dk = 2.0 * M_PI / (n * grid.spacing());
  for (int d = -(n - 1); d <= n - 1; ++d) {
    cplx s = 0;
    for (int j = 0; j < n; ++j) s += v[j] * std::exp(cplx(0.0, -d * dk * grid.x(j)));
    vhat[d + n - 1] = s / static_cast<double>(n);
  }
  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      cplx val = vhat[(a - b) + n - 1];
      if (a == b) val = cplx(val.real(), 0.0);
      t.emplace_back(a, b, val);
    }
  ComplexSparse m(n, n);
  m.setFromTriplets(t.begin(), t.end());
  // enforce exact Hermiticity
  ComplexSparse herm = (0.5 * (m + ComplexSparse(m.adjoint()))).pruned(0.0);
  herm.makeCompressed();
  return herm;
}

inline MatterOperators matter_operators(const Grid1D& grid, const Potential1D& v, FdOrder order = FdOrder::fourth) {
  if (v.values.size() != grid.size()) throw std::invalid_argument("potential does not match grid");
  MatterOperators m{grid};
  m.order = order;
  const int n = grid.size();
  if (!grid.periodic()) {
    RealSparse lap = laplacian(grid, order);
    m.momentum_sq = -lap;
    m.kinetic = -0.5 * lap;
    RealSparse d = first_derivative(grid, order);
    m.momentum = d.cast<cplx>() * cplx(0.0, -1.0);
    std::vector<Eigen::Triplet<cplx>> tv;
    std::vector<Eigen::Triplet<double>> tx;
    for (int i = 0; i < n; ++i) {
      tv.emplace_back(i, i, cplx(v.values[i], 0.0));
      tx.emplace_back(i, i, grid.x(i));
    }
    m.potential.resize(n, n);
    m.potential.setFromTriplets(tv.begin(), tv.end());
    m.position.resize(n, n);
    m.position.setFromTriplets(tx.begin(), tx.end());
    m.potential_diagonal = v.values;
  } else {
    m.plane_waves = true;
    std::vector<Eigen::Triplet<double>> tk, tk2;
    std::vector<Eigen::Triplet<cplx>> tp;
    for (int j = 0; j < n; ++j) {
      const double k = grid.k(j);
      tk.emplace_back(j, j, 0.5 * k * k);
      tk2.emplace_back(j, j, k * k);
      tp.emplace_back(j, j, cplx(k, 0.0));
    }
    m.kinetic.resize(n, n);
    m.kinetic.setFromTriplets(tk.begin(), tk.end());
    m.momentum_sq.resize(n, n);
    m.momentum_sq.setFromTriplets(tk2.begin(), tk2.end());
    m.momentum.resize(n, n);
    m.momentum.setFromTriplets(tp.begin(), tp.end());
    m.potential = plane_wave_potential(grid, v.values);
    m.potential_diagonal.resize(n);
    for (int j = 0; j < n; ++j) m.potential_diagonal[j] = m.potential.coeff(j, j).real();
  }
  m.kinetic.makeCompressed();
  m.momentum.makeCompressed();
  m.potential.makeCompressed();
  return m;
}

enum class PfForm { bare_with_A2, dressed_bilinear };
enum class Gauge { pf, pzw };

struct ExactOptions {
  FdOrder order = FdOrder::fourth;
  bool include_zero_point = false;
  EigenOptions eigen{};
};

template <class S>
struct CoupledHamiltonian {
  Eigen::SparseMatrix<S> matrix;
  Gauge gauge = Gauge::pf;
  PfForm form = PfForm::dressed_bilinear;
  MatterOperators matter;
  ModeSet modes;
  FockSpace fock;
  double energy_offset = 0.0;  // subtracted from eigenvalues when reporting
  Preconditioner<S> preconditioner;
  Vec<S> initial_guess;

  int dimension() const { return static_cast<int>(matrix.rows()); }
};

template <class S>
struct MatterHamiltonian {
  Eigen::SparseMatrix<S> matrix;
  MatterOperators matter;
  double energy_offset = 0.0;
  Preconditioner<S> preconditioner;
};

namespace detail {

inline void require_single_electron(const ModeSet& modes) {
  if (modes.n_electrons != 1) throw std::invalid_argument("exact coupled solvers are single-electron only");
}

inline double reported_offset(const ModeSet& modes, bool include_zero_point) {
  return include_zero_point ? 0.0 : modes.zero_point_dressed();
}

// matter ground state used to seed the coupled solve
inline RealVector matter_seed(const MatterOperators& m) {
  RealSparse h = m.kinetic;
  RealSparse vd(m.size(), m.size());
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < m.size(); ++i) t.emplace_back(i, i, m.potential_diagonal[i]);
  vd.setFromTriplets(t.begin(), t.end());
  h += vd;
  EigenOptions opt;
  opt.tolerance = 1e-6;
  const double vmin = m.potential_diagonal.minCoeff();
  auto pre = block_preconditioner<double>(h, {0.0}, 1.0 - vmin);
  auto res = lowest_eigenpairs<double>(h, 1, opt, pre);
  return res.vectors[0];
}

template <class S>
Vec<S> vacuum_guess(const MatterOperators& m, int fock_dim) {
  RealVector seed = matter_seed(m);
  Vec<S> g = Vec<S>::Zero(static_cast<Eigen::Index>(m.size()) * fock_dim);
  for (int i = 0; i < m.size(); ++i) g[i] = seed[i];
  return g;
}

inline RealSparse preconditioner_base(const MatterOperators& m) {
  RealSparse base = m.kinetic;
  const double vmin = m.potential_diagonal.minCoeff();
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < m.size(); ++i) t.emplace_back(i, i, m.potential_diagonal[i] - vmin);
  RealSparse vd(m.size(), m.size());
  vd.setFromTriplets(t.begin(), t.end());
  return base + vd;
}

inline std::vector<double> photon_block_energies(const FockSpace& fock, const std::vector<double>& omegas) {
  std::vector<double> e(fock.dimension());
  for (int f = 0; f < fock.dimension(); ++f) {
    double s = 0;
    for (int a = 0; a < fock.modes(); ++a) s += omegas[a] * fock.occupation(f, a);
    e[f] = s;
  }
  return e;
}

}  // namespace detail

inline CoupledHamiltonian<cplx> build_pf_hamiltonian(const Grid1D& grid, const Potential1D& v, const ModeSet& modes,
                                                      FockTruncation trunc, PfForm form,
                                                      const ExactOptions& opt = {}) {
  detail::require_single_electron(modes);
  MatterOperators mat = matter_operators(grid, v, opt.order);
  FockSpace fock(modes.count(), trunc);
  const int np = fock.dimension();
  ComplexSparse h = coupled_kron(fock.identity(), ComplexSparse(mat.kinetic.cast<cplx>() + mat.potential));
  std::vector<double> omegas;
  if (form == PfForm::bare_with_A2) {
    RealSparse field(np, np);  // sum_a lambda_a eps_a q_a
    RealSparse photon(np, np);
    RealSparse a2(np, np);
    for (int a = 0; a < modes.count(); ++a) {
      const auto& md = modes.modes[a];
      field += md.lambda * md.polarization * fock.coordinate(a, md.omega);
      photon += md.omega * fock.number(a);
      omegas.push_back(md.omega);
      a2 += (0.5 * md.lambda * md.lambda) * fock.coordinate_squared(a, md.omega);
      for (int b = a + 1; b < modes.count(); ++b) {
        const auto& mb = modes.modes[b];
        RealSparse cross = fock.coordinate(a, md.omega) * fock.coordinate(b, mb.omega);
        a2 += (md.lambda * mb.lambda * md.polarization * mb.polarization) * cross;
      }
    }
    RealSparse id(np, np);
    id.setIdentity();
    photon += modes.zero_point_bare() * id;
    RealSparse mid(mat.size(), mat.size());
    mid.setIdentity();
    h += coupled_kron(RealSparse(photon + a2), mid).cast<cplx>();
    h += coupled_kron(field, mat.momentum);
  } else {
    RealSparse photon(np, np);
    for (int b = 0; b < modes.count(); ++b) {
      const double w = modes.dressed_omegas[b];
      photon += w * fock.number(b);
      omegas.push_back(w);
      const double g = modes.coupling(b);
      if (g != 0.0) h += coupled_kron(RealSparse(g * fock.coordinate(b, w)), mat.momentum);
    }
    RealSparse id(np, np);
    id.setIdentity();
    photon += modes.zero_point_dressed() * id;
    RealSparse mid(mat.size(), mat.size());
    mid.setIdentity();
    h += coupled_kron(photon, mid).cast<cplx>();
  }
  h.makeCompressed();
  assert_hermitian(h);
  CoupledHamiltonian<cplx> out{h, Gauge::pf, form, mat, modes, fock};
  out.energy_offset = detail::reported_offset(modes, opt.include_zero_point);
  out.preconditioner =
      block_preconditioner<cplx>(detail::preconditioner_base(mat), detail::photon_block_energies(fock, omegas), 1.0);
  out.initial_guess = detail::vacuum_guess<cplx>(mat, np);
  return out;
}

inline CoupledHamiltonian<double> build_pzw_hamiltonian(const Grid1D& grid, const Potential1D& v,
                                                         const ModeSet& modes, FockTruncation trunc,
                                                         const ExactOptions& opt = {}) {
  detail::require_single_electron(modes);
  if (grid.periodic()) throw std::invalid_argument("PZW form needs a dirichlet grid");
  MatterOperators mat = matter_operators(grid, v, opt.order);
  FockSpace fock(modes.count(), trunc);
  const int np = fock.dimension();
  const int nm = mat.size();
  RealSparse hm = mat.kinetic;
  RealSparse x2 = mat.position * mat.position;
  RealSparse vd(nm, nm);
  {
    std::vector<Eigen::Triplet<double>> t;
    for (int i = 0; i < nm; ++i) t.emplace_back(i, i, v.values[i]);
    vd.setFromTriplets(t.begin(), t.end());
  }
  hm += vd;
  double selfpol = 0;
  for (const auto& md : modes.modes) selfpol += 0.5 * md.lambda * md.lambda;
  hm += selfpol * x2;
  RealSparse photon(np, np);
  std::vector<double> omegas;
  RealSparse h = coupled_kron(fock.identity(), hm);
  for (int a = 0; a < modes.count(); ++a) {
    const auto& md = modes.modes[a];
    photon += md.omega * fock.number(a);
    omegas.push_back(md.omega);
    if (md.lambda != 0.0)
      h += coupled_kron(RealSparse(md.omega * md.lambda * md.polarization * fock.coordinate(a, md.omega)),
                        mat.position);
  }
  RealSparse id(np, np);
  id.setIdentity();
  photon += modes.zero_point_bare() * id;
  RealSparse mid(nm, nm);
  mid.setIdentity();
  h += coupled_kron(photon, mid);
  h.makeCompressed();
  assert_hermitian(h);
  CoupledHamiltonian<double> out{h, Gauge::pzw, PfForm::dressed_bilinear, mat, modes, fock};
  out.energy_offset = detail::reported_offset(modes, opt.include_zero_point);
  RealSparse base = detail::preconditioner_base(mat) + selfpol * x2;
  out.preconditioner = block_preconditioner<double>(base, detail::photon_block_energies(fock, omegas), 1.0);
  out.initial_guess = detail::vacuum_guess<double>(mat, np);
  return out;
}

// matter Hamiltonian with the dipole self-energy but no photons
inline MatterHamiltonian<double> build_pzw_selfpol_hamiltonian(const Grid1D& grid, const Potential1D& v,
                                                                const ModeSet& modes,
                                                                const ExactOptions& opt = {}) {
  if (grid.periodic()) throw std::invalid_argument("self-polarization form needs a dirichlet grid");
  MatterOperators mat = matter_operators(grid, v, opt.order);
  const int nm = mat.size();
  double selfpol = 0;
  for (const auto& md : modes.modes) selfpol += 0.5 * md.lambda * md.lambda;
  std::vector<Eigen::Triplet<double>> t;
  for (int i = 0; i < nm; ++i) t.emplace_back(i, i, v.values[i] + selfpol * grid.x(i) * grid.x(i));
  RealSparse vd(nm, nm);
  vd.setFromTriplets(t.begin(), t.end());
  RealSparse h = mat.kinetic + vd;
  h.makeCompressed();
  assert_hermitian(h);
  MatterHamiltonian<double> out{h, mat};
  out.energy_offset = opt.include_zero_point ? -modes.zero_point_dressed() : 0.0;
  RealVector d = vd.diagonal();
  const double vmin = d.minCoeff();
  out.preconditioner = block_preconditioner<double>(h, {0.0}, 1.0 - vmin);
  return out;
}

template <class S>
struct GroundState {
  double energy = 0;
  Vec<S> state;
  int iterations = 0;
  double residual = 0;
};

template <class S>
GroundState<S> ground_state(const CoupledHamiltonian<S>& h, const EigenOptions& opt = {}) {
  auto res = lowest_eigenpairs<S>(h.matrix, 1, opt, h.preconditioner,
                                  h.initial_guess.size() ? &h.initial_guess : nullptr);
  return {res.values[0] - h.energy_offset, res.vectors[0], res.iterations[0], res.residuals[0]};
}

template <class S>
GroundState<S> ground_state(const MatterHamiltonian<S>& h, const EigenOptions& opt = {}) {
  auto res = lowest_eigenpairs<S>(h.matrix, 1, opt, h.preconditioner);
  return {res.values[0] - h.energy_offset, res.vectors[0], res.iterations[0], res.residuals[0]};
}

template <class S>
EigenResult<S> lowest_states(const CoupledHamiltonian<S>& h, int k, const EigenOptions& opt = {}) {
  auto res = lowest_eigenpairs<S>(h.matrix, k, opt, h.preconditioner,
                                  h.initial_guess.size() ? &h.initial_guess : nullptr);
  res.values.array() -= h.energy_offset;
  return res;
}

struct CoupledObservables {
  double energy = 0;
  std::vector<double> photon_number;
  double dipole = std::numeric_limits<double>::quiet_NaN();
  double dipole_variance = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> excitation_distribution;
};

template <class S>
RealVector matter_density(const CoupledHamiltonian<S>& h, const Vec<S>& psi) {
  const int nm = h.matter.size();
  RealVector rho = RealVector::Zero(nm);
  for (int f = 0; f < h.fock.dimension(); ++f)
    rho += psi.segment(static_cast<Eigen::Index>(f) * nm, nm).cwiseAbs2();
  return rho;
}

namespace detail {

template <class S, class Op>
cplx expect(const Vec<S>& psi, const Op& op) {
  Vec<cplx> z = psi.template cast<cplx>();
  return z.dot(op * z);
}

}  // namespace detail

template <class S>
CoupledObservables observables(const CoupledHamiltonian<S>& h, const Vec<S>& psi) {
  CoupledObservables o;
  const int nm = h.matter.size();
  const int np = h.fock.dimension();
  const ModeSet& ms = h.modes;
  o.energy = std::real(detail::expect<S>(psi, h.matrix)) / psi.squaredNorm() - h.energy_offset;
  RealVector rho = matter_density(h, psi);
  if (!h.matter.plane_waves) {
    const RealVector x = h.matter.grid.coordinates();
    o.dipole = rho.dot(x);
    o.dipole_variance = rho.dot(x.cwiseProduct(x)) - o.dipole * o.dipole;
  }
  o.excitation_distribution.assign(h.fock.max_total() + 1, 0.0);
  for (int f = 0; f < np; ++f)
    o.excitation_distribution[h.fock.total(f)] += psi.segment(static_cast<Eigen::Index>(f) * nm, nm).squaredNorm();

  RealSparse mid(nm, nm);
  mid.setIdentity();
  for (int a = 0; a < ms.count(); ++a) {
    const auto& md = ms.modes[a];
    double n = 0;
    if (h.gauge == Gauge::pzw) {
      n = std::real(detail::expect<S>(psi, coupled_kron(h.fock.number(a), mid)));
      if (md.lambda != 0.0) {
        const double xq =
            std::real(detail::expect<S>(psi, coupled_kron(h.fock.coordinate(a, md.omega), h.matter.position)));
        const RealVector x = h.matter.grid.coordinates();
        const double x2 = rho.dot(x.cwiseProduct(x));
        n += md.lambda * md.polarization * xq + md.lambda * md.lambda * x2 / (2.0 * md.omega);
      }
    } else if (h.form == PfForm::bare_with_A2) {
      n = std::real(detail::expect<S>(psi, coupled_kron(h.fock.number(a), mid)));
    } else {
      // bare mode a from the normal modes: q_a = sum_b U(b,a) q_b
      RealSparse q2(np, np);
      ComplexSparse pi2(np, np);
      for (int b = 0; b < ms.count(); ++b) {
        const double wb = ms.dressed_omegas[b], ub = ms.bogoliubov(b, a);
        q2 += (ub * ub) * h.fock.coordinate_squared(b, wb);
        pi2 += RealSparse((ub * ub) * h.fock.momentum_squared(b, wb)).template cast<cplx>();
        for (int c = b + 1; c < ms.count(); ++c) {
          const double wc = ms.dressed_omegas[c], uc = ms.bogoliubov(c, a);
          RealSparse qq = h.fock.coordinate(b, wb) * h.fock.coordinate(c, wc);
          ComplexSparse pp = h.fock.momentum(b, wb) * h.fock.momentum(c, wc);
          q2 += (2.0 * ub * uc) * qq;
          pi2 += cplx(2.0 * ub * uc, 0.0) * pp;
        }
      }
      const double eq = std::real(detail::expect<S>(psi, coupled_kron(q2, mid)));
      const double ep = std::real(detail::expect<S>(psi, coupled_kron(pi2, mid)));
      n = 0.5 * (md.omega * eq + ep / md.omega) - 0.5;
    }
    o.photon_number.push_back(n);
  }
  return o;
}

}  // namespace qedlab
