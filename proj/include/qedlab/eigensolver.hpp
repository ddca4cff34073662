#pragma once

#include "grid.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>
#include <type_traits>
#include <vector>

namespace qedlab {

template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using Preconditioner = std::function<Vec<S>(const Vec<S>&)>;

struct EigenOptions {
  double tolerance = 1e-9;  // relative to the max-row-sum norm of H
  int max_iterations = 20000;
  int dense_threshold = 300;
  unsigned seed = 20240611u;
};

template <class S>
struct EigenResult {
  RealVector values;
  std::vector<Vec<S>> vectors;
  std::vector<int> iterations;
  std::vector<double> residuals;
  bool dense = false;
};

class ConvergenceError : public std::runtime_error {
public:
  ConvergenceError(const std::string& what, int iterations, double residual, std::vector<double> history)
      : std::runtime_error(what), iterations_(iterations), residual_(residual), history_(std::move(history)) {}
  int iterations() const { return iterations_; }
  double residual() const { return residual_; }
  const std::vector<double>& history() const { return history_; }

private:
  int iterations_;
  double residual_;
  std::vector<double> history_;
};

template <class S>
double norm_scale(const Eigen::SparseMatrix<S>& h) {
  RealVector rows = RealVector::Zero(h.rows());
  for (int k = 0; k < h.outerSize(); ++k)
    for (typename Eigen::SparseMatrix<S>::InnerIterator it(h, k); it; ++it) rows[it.row()] += std::abs(it.value());
  return std::max(rows.maxCoeff(), 1e-300);
}

template <class S>
double hermiticity_defect(const Eigen::SparseMatrix<S>& h) {
  Eigen::SparseMatrix<S> d = h - Eigen::SparseMatrix<S>(h.adjoint());
  double m = 0;
  for (int k = 0; k < d.outerSize(); ++k)
    for (typename Eigen::SparseMatrix<S>::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}

template <class S>
void assert_hermitian(const Eigen::SparseMatrix<S>& h) {
  if (hermiticity_defect(h) != 0.0) throw std::logic_error("assembled Hamiltonian is not Hermitian");
}

namespace detail {

template <class S>
S dot(const Vec<S>& a, const Vec<S>& b) {
  return a.dot(b);  // conjugates a
}

template <class S>
void fix_phase(Vec<S>& v) {
  Eigen::Index idx;
  v.cwiseAbs().maxCoeff(&idx);
  if constexpr (std::is_same_v<S, double>) {
    if (v[idx] < 0) v = -v;
  } else {
    const S ph = v[idx] / std::abs(v[idx]);
    v *= std::conj(ph);
  }
}

template <class S>
Vec<S> random_vector(int n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Vec<S> v(n);
  for (int i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<S, double>) {
      v[i] = u(rng);
    } else {
      const double re = u(rng);
      v[i] = S(re, 0.0);
    }
  }
  return v;
}

template <class S>
EigenResult<S> dense_lowest(const Eigen::SparseMatrix<S>& h, int k) {
  using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
  Mat d = Mat(h);
  Eigen::SelfAdjointEigenSolver<Mat> es(d);
  if (es.info() != Eigen::Success) throw std::runtime_error("dense eigensolver failed");
  EigenResult<S> out;
  out.dense = true;
  out.values = es.eigenvalues().head(k);
  for (int i = 0; i < k; ++i) {
    Vec<S> v = es.eigenvectors().col(i);
    fix_phase(v);
    out.vectors.push_back(v);
    out.iterations.push_back(0);
    out.residuals.push_back((h * v - es.eigenvalues()[i] * v).norm());
  }
  return out;
}

}  // namespace detail

// Lowest k eigenpairs of a Hermitian sparse matrix. Small problems go to a
// dense solver; larger ones use preconditioned single-vector LOBPCG with
// deflation against the pairs already found.
template <class S>
EigenResult<S> lowest_eigenpairs(const Eigen::SparseMatrix<S>& h, int k, const EigenOptions& opt = {},
                                 const Preconditioner<S>& pre = {}, const Vec<S>* guess = nullptr) {
  const int n = static_cast<int>(h.rows());
  if (h.cols() != n) throw std::invalid_argument("operator must be square");
  if (k < 1 || k > n) throw std::invalid_argument("requested eigenpair count out of range");
  if (n <= opt.dense_threshold) return detail::dense_lowest(h, k);

  const double scale = norm_scale(h);
  const double target = opt.tolerance * scale;
  EigenResult<S> out;
  out.values.resize(k);
  std::vector<Vec<S>> locked;

  auto project = [&](Vec<S>& v) {
    for (const auto& y : locked) v -= y * y.dot(v);
  };

  for (int state = 0; state < k; ++state) {
    Vec<S> x = (guess && state == 0) ? *guess : detail::random_vector<S>(n, opt.seed + 7919u * state);
    project(x);
    if (x.norm() < 1e-12) x = detail::random_vector<S>(n, opt.seed + 104729u + state);
    project(x);
    x.normalize();
    Vec<S> hx = h * x;
    Vec<S> p, hp;
    bool have_p = false;
    std::vector<double> history;
    double rn = 0;
    int it = 0;
    double theta = 0;
    for (; it < opt.max_iterations; ++it) {
      if (it > 0 && it % 20 == 0) {
        project(x);
        x.normalize();
        hx = h * x;
      }
      theta = std::real(x.dot(hx));
      Vec<S> r = hx - theta * x;
      rn = r.norm();
      history.push_back(rn);
      if (rn <= target) break;

      Vec<S> w = pre ? pre(r) : r;
      project(w);

      std::vector<Vec<S>> basis{x};
      std::vector<Vec<S>> hbasis{hx};
      if (have_p) {
        S c = x.dot(p);
        p -= x * c;
        hp -= hx * c;
        const double pn = p.norm();
        if (pn > 1e-14) {
          p /= pn;
          hp /= pn;
          basis.push_back(p);
          hbasis.push_back(hp);
        }
      }
      for (int pass = 0; pass < 2; ++pass)
        for (const auto& b : basis) w -= b * b.dot(w);
      const double wn = w.norm();
      if (wn > 1e-14 * std::max(1.0, rn)) {
        w /= wn;
        basis.push_back(w);
        hbasis.push_back(h * w);
      }
      const int m = static_cast<int>(basis.size());
      Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> g(m, m), ov(m, m);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          g(i, j) = basis[i].dot(hbasis[j]);
          ov(i, j) = basis[i].dot(basis[j]);
        }
      g = (0.5 * (g + g.adjoint())).eval();
      ov = (0.5 * (ov + ov.adjoint())).eval();
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>> es(g, ov);
      Vec<S> c = es.eigenvectors().col(0);
      Vec<S> xn = Vec<S>::Zero(n), hxn = Vec<S>::Zero(n);
      Vec<S> pn = Vec<S>::Zero(n), hpn = Vec<S>::Zero(n);
      for (int i = 0; i < m; ++i) {
        xn += c[i] * basis[i];
        hxn += c[i] * hbasis[i];
        if (i > 0) {
          pn += c[i] * basis[i];
          hpn += c[i] * hbasis[i];
        }
      }
      const double xnorm = xn.norm();
      x = xn / xnorm;
      hx = hxn / xnorm;
      p = pn;
      hp = hpn;
      have_p = m > 1;
    }
    if (rn > target) {
      std::ostringstream msg;
      msg << "eigensolver did not converge for state " << state << " after " << it
          << " iterations (residual " << rn << ", target " << target << ")";
      throw ConvergenceError(msg.str(), it, rn, history);
    }
    detail::fix_phase(x);
    out.values[state] = std::real(x.dot(h * x));
    out.vectors.push_back(x);
    out.iterations.push_back(it);
    out.residuals.push_back(rn);
    locked.push_back(x);
  }
  return out;
}

// Block preconditioner for matter (fast) x photon (slow) problems:
// block f is solved with (base + (offset_f + shift) I)^{-1}.
template <class S>
Preconditioner<S> block_preconditioner(const RealSparse& base, const std::vector<double>& offsets, double shift) {
  const int nm = static_cast<int>(base.rows());
  using Solver = Eigen::SimplicialLDLT<RealSparse>;
  auto cache = std::make_shared<std::map<long long, std::shared_ptr<Solver>>>();
  std::vector<std::shared_ptr<Solver>> per_block;
  RealSparse id(nm, nm);
  id.setIdentity();
  for (double e : offsets) {
    const long long key = std::llround(e * 1e9);
    auto it = cache->find(key);
    if (it == cache->end()) {
      auto solver = std::make_shared<Solver>();
      RealSparse m = base + (e + shift) * id;
      solver->compute(m);
      if (solver->info() != Eigen::Success) throw std::runtime_error("preconditioner factorization failed");
      it = cache->emplace(key, solver).first;
    }
    per_block.push_back(it->second);
  }
  return [per_block, nm](const Vec<S>& r) {
    Vec<S> out(r.size());
    for (std::size_t f = 0; f < per_block.size(); ++f) {
      auto seg = r.segment(static_cast<Eigen::Index>(f) * nm, nm);
      if constexpr (std::is_same_v<S, double>) {
        out.segment(static_cast<Eigen::Index>(f) * nm, nm) = per_block[f]->solve(RealVector(seg));
      } else {
        RealVector re = seg.real(), im = seg.imag();
        RealVector sr = per_block[f]->solve(re), si = per_block[f]->solve(im);
        for (int i = 0; i < nm; ++i) out[static_cast<Eigen::Index>(f) * nm + i] = cplx(sr[i], si[i]);
      }
    }
    return out;
  };
}

template <class S>
Preconditioner<S> diagonal_preconditioner(const RealVector& diag, double shift) {
  return [diag, shift](const Vec<S>& r) {
    Vec<S> out(r.size());
    for (Eigen::Index i = 0; i < r.size(); ++i) out[i] = r[i] / (diag[i] + shift);
    return out;
  };
}

}  // namespace qedlab
