#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace qedlab {

using cplx = std::complex<double>;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;
using RealSparse = Eigen::SparseMatrix<double>;
using ComplexSparse = Eigen::SparseMatrix<cplx>;

enum class Boundary { dirichlet, periodic };
enum class FdOrder { second = 2, fourth = 4 };

inline const char* to_string(Boundary b) { return b == Boundary::dirichlet ? "dirichlet" : "periodic"; }

class Grid1D {
public:
  Grid1D(int n_points, double spacing, Boundary boundary)
      : n_(n_points), dx_(spacing), boundary_(boundary) {
    if (n_points < 3) throw std::invalid_argument("grid needs at least 3 points");
    if (!(spacing > 0.0)) throw std::invalid_argument("grid spacing must be positive");
  }

  int size() const { return n_; }
  double spacing() const { return dx_; }
  Boundary boundary() const { return boundary_; }
  bool periodic() const { return boundary_ == Boundary::periodic; }

  // centered so that x = 0 sits in the middle of the box
  double x(int i) const { return (i - 0.5 * (n_ - 1)) * dx_; }
  double x_min() const { return x(0); }
  double x_max() const { return x(n_ - 1); }

  RealVector coordinates() const {
    RealVector out(n_);
    for (int i = 0; i < n_; ++i) out[i] = x(i);
    return out;
  }

  int k_index(int slot) const { return slot - n_ / 2; }
  double k(int slot) const { return 2.0 * M_PI * k_index(slot) / (n_ * dx_); }

  RealVector kpoints() const {
    RealVector out(n_);
    for (int j = 0; j < n_; ++j) out[j] = k(j);
    return out;
  }

  double integrate(const RealVector& f) const { return f.sum() * dx_; }

  bool operator==(const Grid1D& o) const {
    return n_ == o.n_ && dx_ == o.dx_ && boundary_ == o.boundary_;
  }

private:
  int n_;
  double dx_;
  Boundary boundary_;
};

inline Grid1D build_grid(int n_points, double spacing, Boundary boundary) {
  return Grid1D(n_points, spacing, boundary);
}

struct FdStencil {
  FdOrder order;
  std::vector<double> coefficients;  // offsets -h..h, unscaled
  double scale;                      // divide by this power of dx-multiple
  int half_width() const { return static_cast<int>(coefficients.size() / 2); }
};

inline FdStencil second_derivative_stencil(FdOrder order) {
  if (order == FdOrder::second) return {order, {1.0, -2.0, 1.0}, 1.0};
  return {order, {-1.0 / 12, 16.0 / 12, -30.0 / 12, 16.0 / 12, -1.0 / 12}, 1.0};
}

inline FdStencil first_derivative_stencil(FdOrder order) {
  if (order == FdOrder::second) return {order, {-0.5, 0.0, 0.5}, 1.0};
  return {order, {1.0 / 12, -8.0 / 12, 0.0, 8.0 / 12, -1.0 / 12}, 1.0};
}

namespace detail {

inline RealSparse stencil_matrix(const Grid1D& grid, const FdStencil& st, double factor) {
  const int n = grid.size();
  const int h = st.half_width();
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(n) * st.coefficients.size());
  for (int i = 0; i < n; ++i) {
    for (int o = -h; o <= h; ++o) {
      const double c = st.coefficients[o + h] * factor;
      if (c == 0.0) continue;
      int j = i + o;
      if (grid.periodic()) {
        j = ((j % n) + n) % n;
      } else if (j < 0 || j >= n) {
        continue;
      }
      trip.emplace_back(i, j, c);
    }
  }
  RealSparse m(n, n);
  m.setFromTriplets(trip.begin(), trip.end());
  m.makeCompressed();
  return m;
}

}  // namespace detail

// discrete d^2/dx^2; zero wavefunction outside a dirichlet box
inline RealSparse laplacian(const Grid1D& grid, FdOrder order = FdOrder::fourth) {
  const double dx = grid.spacing();
  return detail::stencil_matrix(grid, second_derivative_stencil(order), 1.0 / (dx * dx));
}

// discrete d/dx, antisymmetric
inline RealSparse first_derivative(const Grid1D& grid, FdOrder order = FdOrder::fourth) {
  return detail::stencil_matrix(grid, first_derivative_stencil(order), 1.0 / grid.spacing());
}

// Solves L v = -source with v = 0 on both box edges. The edge rows are pinned;
// the next rows fall back to the 3-point stencil where the wide one would
// reach outside the box.
inline RealVector poisson_solve_1d(const RealVector& source, const Grid1D& grid,
                                   FdOrder order = FdOrder::fourth) {
  if (grid.periodic()) throw std::invalid_argument("poisson_solve_1d needs a dirichlet grid");
  const int n = grid.size();
  if (source.size() != n) throw std::invalid_argument("source size does not match grid");
  const double inv = 1.0 / (grid.spacing() * grid.spacing());
  std::vector<Eigen::Triplet<double>> trip;
  RealVector rhs = RealVector::Zero(n);
  trip.emplace_back(0, 0, 1.0);
  trip.emplace_back(n - 1, n - 1, 1.0);
  for (int i = 1; i < n - 1; ++i) {
    const bool narrow = order == FdOrder::second || i == 1 || i == n - 2;
    const FdStencil st = second_derivative_stencil(narrow ? FdOrder::second : FdOrder::fourth);
    const int h = st.half_width();
    for (int o = -h; o <= h; ++o) trip.emplace_back(i, i + o, st.coefficients[o + h] * inv);
    rhs[i] = -source[i];
  }
  RealSparse a(n, n);
  a.setFromTriplets(trip.begin(), trip.end());
  a.makeCompressed();
  Eigen::SparseLU<RealSparse> lu;
  lu.compute(a);
  if (lu.info() != Eigen::Success) throw std::runtime_error("poisson factorization failed");
  RealVector v = lu.solve(rhs);
  v[0] = 0.0;
  v[n - 1] = 0.0;
  return v;
}

// subtract a + b x so that f vanishes at both ends of the box
inline RealVector zero_edge_gauge(const RealVector& f, const Grid1D& grid) {
  const int n = grid.size();
  const double x0 = grid.x_min(), x1 = grid.x_max();
  const double f0 = f[0], f1 = f[n - 1];
  RealVector out(n);
  for (int i = 0; i < n; ++i) {
    const double t = (grid.x(i) - x0) / (x1 - x0);
    out[i] = f[i] - (f0 + t * (f1 - f0));
  }
  return out;
}

enum class PotentialKind { soft_coulomb, zero, tabulated };

struct Potential1D {
  RealVector values;
  PotentialKind kind = PotentialKind::zero;
  double softening = 0.0;
  double charge = 1.0;
  // tabulated potentials remember their sample points for interpolation
  double table_x0 = 0.0, table_dx = 1.0;

  double operator()(double x) const {
    switch (kind) {
      case PotentialKind::soft_coulomb:
        return -charge / std::sqrt(x * x + softening * softening);
      case PotentialKind::zero:
        return 0.0;
      case PotentialKind::tabulated: {
        const int n = static_cast<int>(values.size());
        double s = (x - table_x0) / table_dx;
        if (s <= 0) return values[0];
        if (s >= n - 1) return values[n - 1];
        const int i = static_cast<int>(s);
        s -= i;
        return (1 - s) * values[i] + s * values[i + 1];
      }
    }
    return 0.0;
  }
};

inline Potential1D soft_coulomb(const Grid1D& grid, double xi, double charge = 1.0) {
  if (!(xi > 0)) throw std::invalid_argument("soft-Coulomb softening must be positive");
  Potential1D p;
  p.kind = PotentialKind::soft_coulomb;
  p.softening = xi;
  p.charge = charge;
  p.values.resize(grid.size());
  for (int i = 0; i < grid.size(); ++i) p.values[i] = p(grid.x(i));
  p.table_x0 = grid.x_min();
  p.table_dx = grid.spacing();
  return p;
}

inline Potential1D zero_potential(const Grid1D& grid) {
  Potential1D p;
  p.values = RealVector::Zero(grid.size());
  p.table_x0 = grid.x_min();
  p.table_dx = grid.spacing();
  return p;
}

inline Potential1D tabulated_potential(const Grid1D& grid, RealVector values) {
  if (values.size() != grid.size()) throw std::invalid_argument("tabulated potential size mismatch");
  Potential1D p;
  p.kind = PotentialKind::tabulated;
  p.values = std::move(values);
  p.table_x0 = grid.x_min();
  p.table_dx = grid.spacing();
  return p;
}

}  // namespace qedlab
