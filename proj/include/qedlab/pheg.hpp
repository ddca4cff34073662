#pragma once

#include "exact_qed.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qedlab {

// <n| exp(delta (a^dagger - a)) |n'> for real delta
inline double displaced_overlap(int n, int n_prime, double delta) {
  if (n < 0 || n_prime < 0) throw std::invalid_argument("number-state indices must be non-negative");
  if (n < n_prime) return ((n_prime - n) % 2 ? -1.0 : 1.0) * displaced_overlap(n_prime, n, delta);
  const int d = n - n_prime;
  const double x = delta * delta;
  if (delta == 0.0) return d == 0 ? 1.0 : 0.0;
  // generalized Laguerre L_{n'}^{(d)}(x) by upward recurrence
  double lm1 = 1.0, l = 1.0 + d - x;
  if (n_prime == 0) l = 1.0;
  for (int k = 1; k < n_prime; ++k) {
    const double next = ((2.0 * k + 1.0 + d - x) * l - (k + d) * lm1) / (k + 1.0);
    lm1 = l;
    l = next;
  }
  const double log_pref = 0.5 * (std::lgamma(n_prime + 1.0) - std::lgamma(n + 1.0)) + d * std::log(std::abs(delta)) - 0.5 * x;
  const double sign = (delta < 0 && d % 2) ? -1.0 : 1.0;
  return sign * std::exp(log_pref) * l;
}

enum class PhegPotential {
  raw,           // full displaced-state factors for every (n, n')
  mollified_00,  // zero-excitation sector with the Gaussian-smoothed potential
  unmollified    // zero-excitation sector with the bare potential
};

inline const char* to_string(PhegPotential p) {
  switch (p) {
    case PhegPotential::raw: return "raw";
    case PhegPotential::mollified_00: return "mollified_00";
    case PhegPotential::unmollified: return "unmollified";
  }
  return "?";
}

struct PhegOptions {
  PhegPotential potential = PhegPotential::raw;
  bool include_zero_point = false;
  EigenOptions eigen{};
};

struct PhegHamiltonian {
  ComplexSparse matrix;
  Grid1D grid;
  ModeSet modes;
  FockSpace fock;
  PhegPotential potential = PhegPotential::raw;
  std::vector<cplx> potential_fourier;  // vhat(k_a - k_b) at offset (a - b) + n - 1
  std::vector<std::vector<double>> beta;  // [mode][k slot]
  double energy_offset = 0.0;

  int k_points() const { return grid.size(); }
  int dimension() const { return static_cast<int>(matrix.rows()); }
};

// coherent shift per mode and k-point
inline double pheg_beta(const ModeSet& modes, int mode, double k) {
  const double wt = modes.dressed_omegas[mode];
  return modes.coupling(mode) * k / std::sqrt(2.0 * wt * wt * wt);
}

// Fourier factor of the lowest-order mollifier for a momentum transfer q
inline double mollifier_factor(const ModeSet& modes, double q) {
  double s = 0;
  for (int b = 0; b < modes.count(); ++b) {
    const double db = pheg_beta(modes, b, q);
    s += db * db;
  }
  return std::exp(-0.5 * s);
}

inline PhegHamiltonian build_pheg_hamiltonian(const Grid1D& grid, const Potential1D& v, const ModeSet& modes,
                                              FockTruncation trunc, const PhegOptions& opt = {}) {
  if (!grid.periodic()) throw std::invalid_argument("pHEG basis needs a periodic grid");
  if (modes.n_electrons != 1) throw std::invalid_argument("pHEG basis is single-particle");
  if (v.values.size() != grid.size()) throw std::invalid_argument("potential does not match grid");
  if (opt.potential != PhegPotential::raw) trunc.max_n = 0;
  const int nk = grid.size();
  const int nm = modes.count();
  FockSpace fock(nm, trunc);
  const int np = fock.dimension();
  PhegHamiltonian h{ComplexSparse(), grid, modes, fock, opt.potential};

  const double dk = 2.0 * M_PI / (nk * grid.spacing());
  h.potential_fourier.resize(2 * nk - 1);
  for (int d = -(nk - 1); d <= nk - 1; ++d) {
    cplx s = 0;
    for (int j = 0; j < nk; ++j) s += v.values[j] * std::exp(cplx(0.0, -d * dk * grid.x(j)));
    h.potential_fourier[d + nk - 1] = s / static_cast<double>(nk);
  }
  h.beta.assign(nm, std::vector<double>(nk));
  for (int b = 0; b < nm; ++b)
    for (int j = 0; j < nk; ++j) h.beta[b][j] = pheg_beta(modes, b, grid.k(j));

  // overlap tables per mode: ov[b][(ka * nk + kb) * L * L + n * L + n']
  const int levels = fock.levels();
  std::vector<std::vector<double>> ov(nm, std::vector<double>(static_cast<std::size_t>(nk) * nk * levels * levels));
  for (int b = 0; b < nm; ++b)
    for (int ka = 0; ka < nk; ++ka)
      for (int kb = 0; kb < nk; ++kb) {
        const double delta = h.beta[b][ka] - h.beta[b][kb];
        for (int n = 0; n < levels; ++n)
          for (int n2 = 0; n2 < levels; ++n2) {
            double val = displaced_overlap(n, n2, delta);
            if (opt.potential == PhegPotential::unmollified) val = 1.0;
            ov[b][((static_cast<std::size_t>(ka) * nk + kb) * levels + n) * levels + n2] = val;
          }
      }

  std::vector<Eigen::Triplet<cplx>> t;
  t.reserve(static_cast<std::size_t>(np) * np * nk * nk);
  for (int f = 0; f < np; ++f)
    for (int f2 = 0; f2 < np; ++f2)
      for (int ka = 0; ka < nk; ++ka)
        for (int kb = 0; kb < nk; ++kb) {
          double fac = 1.0;
          for (int b = 0; b < nm && fac != 0.0; ++b)
            fac *= ov[b][((static_cast<std::size_t>(ka) * nk + kb) * levels + fock.occupation(f, b)) * levels +
                         fock.occupation(f2, b)];
          cplx val = h.potential_fourier[(ka - kb) + nk - 1] * fac;
          if (f == f2 && ka == kb) {
            const double k = grid.k(ka);
            double diag = 0.5 * k * k;
            for (int b = 0; b < nm; ++b) {
              const double wt = modes.dressed_omegas[b];
              diag += -wt * h.beta[b][ka] * h.beta[b][ka] + wt * (fock.occupation(f, b) + 0.5);
            }
            val = cplx(val.real() + diag, 0.0);
          }
          if (val != 0.0) t.emplace_back(f * nk + ka, f2 * nk + kb, val);
        }
  const int dim = np * nk;
  ComplexSparse m(dim, dim);
  m.setFromTriplets(t.begin(), t.end());
  h.matrix = (0.5 * (m + ComplexSparse(m.adjoint()))).pruned(0.0);
  h.matrix.makeCompressed();
  assert_hermitian(h.matrix);
  h.energy_offset = detail::reported_offset(modes, opt.include_zero_point);
  return h;
}

inline GroundState<cplx> pheg_ground_state(const PhegHamiltonian& h, const EigenOptions& opt = {}) {
  RealVector diag = h.matrix.diagonal().real();
  auto pre = diagonal_preconditioner<cplx>(diag, 1.0 - diag.minCoeff());
  auto res = lowest_eigenpairs<cplx>(h.matrix, 1, opt, pre);
  return {res.values[0] - h.energy_offset, res.vectors[0], res.iterations[0], res.residuals[0]};
}

struct PhegObservables {
  std::vector<double> photon_number;        // bare modes, full back transformation
  std::vector<double> shift_photon_number;  // (w / w~) <beta^2>, the zero-excitation estimate; one-mode only
  std::vector<double> excitation_distribution;
};

// Bare photon numbers from the normal-mode quadratures, with the displaced
// operators c = b + beta. Same-mode squares use exact matrix elements.
inline PhegObservables pheg_observables(const PhegHamiltonian& h, const ComplexVector& psi) {
  const int nk = h.k_points();
  const int np = h.fock.dimension();
  const int nm = h.modes.count();
  const ModeSet& ms = h.modes;
  PhegObservables o;
  o.excitation_distribution.assign(h.fock.max_total() + 1, 0.0);
  for (int f = 0; f < np; ++f)
    o.excitation_distribution[h.fock.total(f)] += psi.segment(static_cast<Eigen::Index>(f) * nk, nk).squaredNorm();

  RealSparse id_k(nk, nk);
  id_k.setIdentity();
  RealSparse id_f = h.fock.identity();
  // per normal mode: q~ = X - S with X = (c + c^dagger)/sqrt(2w~), S = 2 beta / sqrt(2w~)
  std::vector<RealSparse> q(nm), q2(nm), p2(nm);
  std::vector<ComplexSparse> p(nm);
  for (int b = 0; b < nm; ++b) {
    const double wt = ms.dressed_omegas[b];
    std::vector<Eigen::Triplet<double>> ts, ts2;
    for (int j = 0; j < nk; ++j) {
      const double s = 2.0 * h.beta[b][j] / std::sqrt(2.0 * wt);
      ts.emplace_back(j, j, s);
      ts2.emplace_back(j, j, s * s);
    }
    RealSparse sd(nk, nk), sd2(nk, nk);
    sd.setFromTriplets(ts.begin(), ts.end());
    sd2.setFromTriplets(ts2.begin(), ts2.end());
    RealSparse x = coupled_kron(h.fock.coordinate(b, wt), id_k);
    RealSparse sfull = coupled_kron(id_f, sd);
    q[b] = x - sfull;
    q2[b] = coupled_kron(h.fock.coordinate_squared(b, wt), id_k) - 2.0 * RealSparse(x * sfull) +
            coupled_kron(id_f, sd2);
    p[b] = coupled_kron(h.fock.momentum(b, wt), id_k);
    p2[b] = coupled_kron(h.fock.momentum_squared(b, wt), id_k);
  }
  auto ev = [&](const auto& op) { return std::real(psi.dot(op.template cast<cplx>() * psi)); };
  for (int a = 0; a < nm; ++a) {
    const double w = ms.modes[a].omega;
    double eq = 0, ep = 0, eb = 0;
    for (int b = 0; b < nm; ++b) {
      const double ub = ms.bogoliubov(b, a);
      eq += ub * ub * ev(q2[b]);
      ep += ub * ub * ev(p2[b]);
      for (int c = b + 1; c < nm; ++c) {
        const double uc = ms.bogoliubov(c, a);
        eq += 2.0 * ub * uc * ev(RealSparse(q[b] * q[c]));
        ep += 2.0 * ub * uc * std::real(psi.dot(ComplexSparse(p[b] * p[c]) * psi));
      }
    }
    for (int f = 0; f < np; ++f)
      for (int j = 0; j < nk; ++j) {
        const double bt = h.beta[a][j];
        eb += std::norm(psi[static_cast<Eigen::Index>(f) * nk + j]) * bt * bt;
      }
    o.photon_number.push_back(0.5 * (w * eq + ep / w) - 0.5);
    o.shift_photon_number.push_back(w / ms.dressed_omegas[a] * eb);
  }
  return o;
}

}  // namespace qedlab
