#pragma once

#include "fragtop/core.hpp"

#include <array>

namespace fragtop {

/// Real-space lattice with basis e_i (columns) and dual basis v_j satisfying <e_i, v_j> = 2 pi delta_ij.
class Lattice {
 public:
  explicit Lattice(RMatrix basis) : basis_(std::move(basis)) {
    const auto d = basis_.rows();
    if (basis_.cols() != d || (d != 2 && d != 3))
      raise(ErrorKind::InvalidArgument, "lattice basis must be square with dimension 2 or 3");
    Eigen::FullPivLU<RMatrix> lu(basis_);
    if (!lu.isInvertible()) raise(ErrorKind::InvalidArgument, "lattice basis is linearly dependent");
    dual_ = kTwoPi * basis_.transpose().inverse();
    const RMatrix pairing = basis_.transpose() * dual_;
    const RMatrix expected = kTwoPi * RMatrix::Identity(d, d);
    if ((pairing - expected).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, dual_.norm() * basis_.norm()))
      raise(ErrorKind::InvalidArgument, "duality relation violated");
  }

  static Lattice square(int dim) { return Lattice(RMatrix::Identity(dim, dim)); }

  int dim() const { return static_cast<int>(basis_.rows()); }
  const RMatrix& basis() const { return basis_; }
  const RMatrix& dual_basis() const { return dual_; }

  RVector e(int i) const { return basis_.col(i); }
  RVector v(int j) const { return dual_.col(j); }

  /// Cartesian position of a point given in lattice coordinates.
  RVector position(const RVector& lattice_coords) const { return basis_ * lattice_coords; }
  /// Cartesian momentum of a point given in dual-lattice (fractional) coordinates.
  RVector momentum(const RVector& frac) const { return dual_ * frac; }

  bool operator==(const Lattice& other) const { return basis_ == other.basis_; }

 private:
  RMatrix basis_;
  RMatrix dual_;
};

/// One link of the periodic grid: target node and whether the step crossed a Gamma* boundary.
struct Link {
  std::size_t target;
  bool wrapped;
};

/// Discretized Brillouin torus; nodes k = sum_i (m_i / N_i) v_i with m_0 the slowest index.
class KGrid {
 public:
  KGrid(Lattice lattice, std::vector<int> sizes) : lattice_(std::move(lattice)), sizes_(std::move(sizes)) {
    if (static_cast<int>(sizes_.size()) != lattice_.dim())
      raise(ErrorKind::InvalidArgument, "grid sizes must match lattice dimension");
    for (int n : sizes_)
      if (n < 1) raise(ErrorKind::InvalidArgument, "grid sizes must be positive");
    count_ = 1;
    for (int n : sizes_) count_ *= static_cast<std::size_t>(n);
  }

  static KGrid square(int dim, int n) { return KGrid(Lattice::square(dim), std::vector<int>(dim, n)); }

  int dim() const { return lattice_.dim(); }
  const Lattice& lattice() const { return lattice_; }
  const std::vector<int>& sizes() const { return sizes_; }
  int size(int dir) const { return sizes_[dir]; }
  std::size_t node_count() const { return count_; }

  std::array<int, 3> coords(std::size_t index) const {
    std::array<int, 3> m{0, 0, 0};
    for (int i = dim() - 1; i >= 0; --i) {
      m[i] = static_cast<int>(index % sizes_[i]);
      index /= sizes_[i];
    }
    return m;
  }

  /// Linear index with periodic wrapping of the coordinates.
  std::size_t index(std::array<int, 3> m) const {
    std::size_t idx = 0;
    for (int i = 0; i < dim(); ++i) {
      const int n = sizes_[i];
      const int w = ((m[i] % n) + n) % n;
      idx = idx * n + w;
    }
    return idx;
  }

  Link step(std::size_t from, int dir) const {
    auto m = coords(from);
    m[dir] += 1;
    const bool wrapped = m[dir] == sizes_[dir];
    return {index(m), wrapped};
  }

  RVector frac(std::size_t index) const {
    const auto m = coords(index);
    RVector t(dim());
    for (int i = 0; i < dim(); ++i) t(i) = static_cast<Real>(m[i]) / sizes_[i];
    return t;
  }

  RVector k(std::size_t index) const { return lattice_.momentum(frac(index)); }

  bool same_shape(const KGrid& other) const { return lattice_ == other.lattice_ && sizes_ == other.sizes_; }

 private:
  Lattice lattice_;
  std::vector<int> sizes_;
  std::size_t count_ = 0;
};

}  // namespace fragtop
