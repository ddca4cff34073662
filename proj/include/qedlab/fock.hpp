#pragma once

#include "grid.hpp"

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace qedlab {

struct FockTruncation {
  int max_n = 0;  // inclusive cap per mode
};

// Product of truncated number bases; mode 0 runs fastest.
class FockSpace {
public:
  FockSpace(int n_modes, FockTruncation trunc) : modes_(n_modes), levels_(trunc.max_n + 1) {
    if (trunc.max_n < 0) throw std::invalid_argument("max_n must be non-negative");
    if (n_modes < 0) throw std::invalid_argument("negative mode count");
    dim_ = 1;
    for (int a = 0; a < modes_; ++a) dim_ *= levels_;
  }

  int modes() const { return modes_; }
  int levels() const { return levels_; }
  int dimension() const { return dim_; }

  int occupation(int index, int mode) const {
    for (int a = 0; a < mode; ++a) index /= levels_;
    return index % levels_;
  }

  int total(int index) const {
    int s = 0;
    for (int a = 0; a < modes_; ++a) {
      s += index % levels_;
      index /= levels_;
    }
    return s;
  }

  int max_total() const { return modes_ * (levels_ - 1); }

  // lowering operator of one mode on the product space
  RealSparse lowering(int mode) const { return embed(single_lowering(), mode); }
  RealSparse number(int mode) const { return embed(single_number(), mode); }

  // (a + a^dagger) / sqrt(2 w)
  RealSparse coordinate(int mode, double w) const {
    RealSparse a = lowering(mode);
    RealSparse at = a.transpose();
    return (a + at) * (1.0 / std::sqrt(2.0 * w));
  }

  // i sqrt(w/2) (a^dagger - a)
  ComplexSparse momentum(int mode, double w) const {
    RealSparse a = lowering(mode);
    RealSparse at = a.transpose();
    RealSparse d = at - a;
    return d.cast<cplx>() * cplx(0.0, std::sqrt(0.5 * w));
  }

  // exact matrix elements of q^2 within the truncated space
  RealSparse coordinate_squared(int mode, double w) const {
    return embed(single_quadratic(+1.0), mode) * (1.0 / (2.0 * w));
  }

  // exact matrix elements of pi^2 within the truncated space
  RealSparse momentum_squared(int mode, double w) const { return embed(single_quadratic(-1.0), mode) * (0.5 * w); }

  RealSparse identity() const {
    RealSparse id(dim_, dim_);
    id.setIdentity();
    return id;
  }

private:
  RealSparse single_lowering() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int n = 1; n < levels_; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
    RealSparse a(levels_, levels_);
    a.setFromTriplets(t.begin(), t.end());
    return a;
  }
  RealSparse single_number() const {
    std::vector<Eigen::Triplet<double>> t;
    for (int n = 0; n < levels_; ++n) t.emplace_back(n, n, static_cast<double>(n));
    RealSparse a(levels_, levels_);
    a.setFromTriplets(t.begin(), t.end());
    return a;
  }
  // a^2 + a^dagger^2 (times sign) + 2 n + 1
  RealSparse single_quadratic(double sign) const {
    std::vector<Eigen::Triplet<double>> t;
    for (int n = 0; n < levels_; ++n) {
      t.emplace_back(n, n, 2.0 * n + 1.0);
      if (n + 2 < levels_) {
        const double v = sign * std::sqrt(static_cast<double>((n + 1) * (n + 2)));
        t.emplace_back(n, n + 2, v);
        t.emplace_back(n + 2, n, v);
      }
    }
    RealSparse a(levels_, levels_);
    a.setFromTriplets(t.begin(), t.end());
    return a;
  }
  RealSparse embed(const RealSparse& op, int mode) const {
    if (mode < 0 || mode >= modes_) throw std::out_of_range("mode index");
    RealSparse out(1, 1);
    out.insert(0, 0) = 1.0;
    // kron(A, B) makes B fastest, so build from the slowest mode down
    for (int a = modes_ - 1; a >= 0; --a) {
      RealSparse factor(levels_, levels_);
      if (a == mode) {
        factor = op;
      } else {
        factor.setIdentity();
      }
      RealSparse next = Eigen::kroneckerProduct(out, factor).eval();
      out = next;
    }
    out.makeCompressed();
    return out;
  }

  int modes_;
  int levels_;
  int dim_;
};

// photon (slow) x matter (fast) product: index = f * n_matter + m
template <class S1, class S2>
Eigen::SparseMatrix<typename Eigen::ScalarBinaryOpTraits<S1, S2>::ReturnType> coupled_kron(
    const Eigen::SparseMatrix<S1>& photon, const Eigen::SparseMatrix<S2>& matter) {
  using S = typename Eigen::ScalarBinaryOpTraits<S1, S2>::ReturnType;
  Eigen::SparseMatrix<S> p = photon.template cast<S>();
  Eigen::SparseMatrix<S> m = matter.template cast<S>();
  Eigen::SparseMatrix<S> out = Eigen::kroneckerProduct(p, m).eval();
  out.makeCompressed();
  return out;
}

}  // namespace qedlab
