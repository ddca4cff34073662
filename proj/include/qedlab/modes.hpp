#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace qedlab {

inline constexpr double speed_of_light = 137.035999;

struct CavityMode {
  double omega = 1.0;
  double lambda = 0.0;
  double polarization = 1.0;  // +1 or -1 along the matter axis
};

// lambda that gives coupling g = ratio * omega, with g = sqrt(omega/2) lambda
inline double lambda_from_ratio(double omega, double ratio) { return ratio * std::sqrt(2.0 * omega); }

// Normal modes of the photon field once the A^2 term is absorbed.
// dressed coupling of normal mode b: g_b = sum_a U(b,a) lambda_a eps_a,
// split into |g_b| (lambda_tilde) and its sign (eps_tilde).
struct ModeSet {
  std::vector<CavityMode> modes;
  int n_electrons = 1;
  Eigen::VectorXd dressed_omegas;
  Eigen::VectorXd dressed_polarizations;
  Eigen::VectorXd dressed_lambdas;
  Eigen::VectorXd diamagnetic_freqs2;  // N_e lambda_tilde^2 per normal mode
  Eigen::MatrixXd bogoliubov;          // rows: normal modes, columns: bare modes

  int count() const { return static_cast<int>(modes.size()); }

  double omega_d2(int b) const { return diamagnetic_freqs2[b]; }

  // dressed coupling g_b carrying its sign
  double coupling(int b) const { return dressed_lambdas[b] * dressed_polarizations[b]; }

  // omega_d^2 / (N_e omega_tilde^2): weight of the current-squared term
  double mass_shift(int b) const {
    return diamagnetic_freqs2[b] / (n_electrons * dressed_omegas[b] * dressed_omegas[b]);
  }

  // signed adiabatic factor: a_tilde_b ~ -kappa_b J
  double adiabatic_factor(int b) const {
    const double w = dressed_omegas[b];
    return std::sqrt(diamagnetic_freqs2[b] / (2.0 * n_electrons * w * w * w)) * dressed_polarizations[b];
  }

  double zero_point_dressed() const { return 0.5 * dressed_omegas.sum(); }
  double zero_point_bare() const {
    double s = 0;
    for (const auto& m : modes) s += 0.5 * m.omega;
    return s;
  }
  double total_mass_shift() const {
    double s = 0;
    for (int b = 0; b < count(); ++b) s += mass_shift(b);
    return s;
  }
};

inline ModeSet dress_modes(const std::vector<CavityMode>& modes, int n_electrons = 1) {
  if (n_electrons < 1) throw std::invalid_argument("need at least one electron");
  const int m = static_cast<int>(modes.size());
  for (const auto& md : modes) {
    if (!(md.omega > 0)) throw std::invalid_argument("mode frequency must be positive");
    if (md.lambda < 0) throw std::invalid_argument("coupling strength must be non-negative");
    if (std::abs(std::abs(md.polarization) - 1.0) > 1e-12)
      throw std::invalid_argument("polarization must be +1 or -1");
  }
  ModeSet set;
  set.modes = modes;
  set.n_electrons = n_electrons;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      w(a, b) = (a == b ? modes[a].omega * modes[a].omega : 0.0) +
                n_electrons * modes[a].lambda * modes[b].lambda * modes[a].polarization * modes[b].polarization;
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 0.0)
    throw std::logic_error("mode coupling matrix is not symmetric");

  Eigen::MatrixXd u = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd w2(m);
  bool coupled = false;
  for (const auto& md : modes) coupled = coupled || md.lambda != 0.0;
  if (coupled && m > 1) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(w);
    w2 = es.eigenvalues();
    u = es.eigenvectors().transpose();
    // fix the sign of each row so the largest entry is positive
    for (int b = 0; b < m; ++b) {
      Eigen::Index idx;
      u.row(b).cwiseAbs().maxCoeff(&idx);
      if (u(b, idx) < 0) u.row(b) *= -1.0;
    }
  } else {
    w2 = w.diagonal();
  }
  set.bogoliubov = u;
  set.dressed_omegas = w2.cwiseSqrt();
  set.dressed_polarizations.resize(m);
  set.dressed_lambdas.resize(m);
  set.diamagnetic_freqs2.resize(m);
  for (int b = 0; b < m; ++b) {
    double g = 0;
    for (int a = 0; a < m; ++a) g += u(b, a) * modes[a].lambda * modes[a].polarization;
    double eps = 0;
    for (int a = 0; a < m; ++a) eps += u(b, a) * modes[a].polarization;
    set.dressed_lambdas[b] = std::abs(g);
    // with no coupling the sign is inherited from the rotated polarization
    set.dressed_polarizations[b] = g != 0.0 ? (g > 0 ? 1.0 : -1.0) : (eps >= 0 ? 1.0 : -1.0);
    set.diamagnetic_freqs2[b] = n_electrons * g * g;
  }
  return set;
}

}  // namespace qedlab
