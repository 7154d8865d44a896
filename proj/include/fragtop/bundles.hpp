#pragma once

#include "fragtop/core.hpp"
#include "fragtop/lattice.hpp"

#include <optional>
#include <string>

namespace fragtop {

/// Antiunitary involution v -> S conj(v) acting on the fiber.
class RealStructure {
 public:
  explicit RealStructure(CMatrix s) : s_(std::move(s)) {
    const auto n = s_.rows();
    if (s_.cols() != n) raise(ErrorKind::InvalidArgument, "real structure must be square");
    const Real res = (s_ * s_.conjugate() - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
    if (res > 1e-12) raise(ErrorKind::InvalidArgument, "S conj(S) != 1 (residual ", res, ")");
    const Real unit = (s_.adjoint() * s_ - CMatrix::Identity(n, n)).cwiseAbs().maxCoeff();
    if (unit > 1e-12) raise(ErrorKind::InvalidArgument, "S is not unitary (residual ", unit, ")");
  }

  static RealStructure conjugation(Eigen::Index n) { return RealStructure(CMatrix::Identity(n, n)); }

  /// S with a single unimodular entry phases(i) at (i, perm(i)); validated in O(n).
  static RealStructure monomial(std::vector<Eigen::Index> perm, CVector phases) {
    const auto n = static_cast<Eigen::Index>(perm.size());
    if (phases.size() != n) raise(ErrorKind::ShapeMismatch, "one phase per row required");
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index j = perm[i];
      if (j < 0 || j >= n || perm[j] != i) raise(ErrorKind::InvalidArgument, "S must pair indices");
      if (std::abs(std::abs(phases(i)) - 1.0) > 1e-12) raise(ErrorKind::InvalidArgument, "S entries must be unimodular");
      if (std::abs(phases(i) * std::conj(phases(j)) - 1.0) > 1e-12)
        raise(ErrorKind::InvalidArgument, "S conj(S) != 1 at index ", i);
    }
    RealStructure out;
    out.s_ = CMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) out.s_(i, perm[i]) = phases(i);
    out.perm_ = std::move(perm);
    out.phases_ = std::move(phases);
    return out;
  }

  const CMatrix& matrix() const { return s_; }
  Eigen::Index dim() const { return s_.rows(); }
  bool is_monomial() const { return !perm_.empty(); }
  const std::vector<Eigen::Index>& permutation() const { return perm_; }
  const CVector& phases() const { return phases_; }

  CMatrix apply(const CMatrix& v) const {
    if (perm_.empty()) return s_ * v.conjugate();
    CMatrix out(v.rows(), v.cols());
    for (Eigen::Index i = 0; i < v.rows(); ++i) out.row(i) = phases_(i) * v.row(perm_[i]).conjugate();
    return out;
  }

  /// Norm of the commutator [I, P] viewed as a real-linear map: S conj(P) - P S.
  Real commutator_norm(const CMatrix& projector) const {
    return (s_ * projector.conjugate() - projector * s_).norm();
  }

 private:
  RealStructure() = default;

  CMatrix s_;
  std::vector<Eigen::Index> perm_;
  CVector phases_;
};

inline RealStructure block_sum(const RealStructure& a, const RealStructure& b) {
  CMatrix s = CMatrix::Zero(a.dim() + b.dim(), a.dim() + b.dim());
  s.topLeftCorner(a.dim(), a.dim()) = a.matrix();
  s.bottomRightCorner(b.dim(), b.dim()) = b.matrix();
  return RealStructure(s);
}

/// Either an index range [lo, hi) of sorted eigenvalues or an energy interval.
struct BandWindow {
  int lo = 0;
  int hi = 1;
  std::optional<std::pair<Real, Real>> energy;

  static BandWindow bands(int lo, int hi) { return {lo, hi, std::nullopt}; }
  static BandWindow energies(Real emin, Real emax) { return {0, 0, std::make_pair(emin, emax)}; }
};

/// Orbital positions (rows, lattice coordinates) fix tau(gamma) = diag(exp(-i <x_a, gamma>)).
inline CVector tau_phases(const RMatrix& positions, const IVector& gamma) {
  CVector phases(positions.rows());
  for (Eigen::Index a = 0; a < positions.rows(); ++a) {
    Real arg = 0;
    for (Eigen::Index j = 0; j < gamma.size(); ++j) arg += positions(a, j) * gamma(j);
    phases(a) = std::polar(1.0, -kTwoPi * arg);
  }
  return phases;
}

inline IVector unit_gamma(int dim, int dir) {
  IVector g = IVector::Zero(dim);
  g(dir) = 1;
  return g;
}

/// k -> H(k), with H(k + gamma) = tau(gamma) H(k) tau(gamma)^*.
struct HermitianFamily {
  std::string name;
  int fiber_dim = 0;
  std::function<CMatrix(const RVector&)> eval;
  RMatrix positions;
  BandWindow window;
  std::optional<RealStructure> real_structure;
  /// Complex structure J on the ambient fiber used to orient rank-2 real windows.
  std::optional<CMatrix> complex_structure;
  Real relative_gap_tol = 1e-6;

  CVector tau(const IVector& gamma) const { return tau_phases(positions, gamma); }
};

inline RMatrix zero_positions(int n, int dim) { return RMatrix::Zero(n, dim); }

/// Per-node orthonormal frames for ran P(k) plus the data that glues them into a bundle.
class ProjectorGrid {
 public:
  ProjectorGrid(KGrid grid, int fiber_dim, int rank, std::vector<CMatrix> frames, RMatrix positions)
      : grid_(std::move(grid)),
        fiber_dim_(fiber_dim),
        rank_(rank),
        frames_(std::move(frames)),
        positions_(std::move(positions)) {
    if (frames_.size() != grid_.node_count()) raise(ErrorKind::ShapeMismatch, "frame count != node count");
    if (positions_.rows() != fiber_dim_ || positions_.cols() != grid_.dim())
      raise(ErrorKind::ShapeMismatch, "positions must be fiber_dim x dim");
    for (const auto& f : frames_)
      if (f.rows() != fiber_dim_ || f.cols() != rank_) raise(ErrorKind::ShapeMismatch, "frame has wrong shape");
  }

  const KGrid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  int fiber_dim() const { return fiber_dim_; }
  int rank() const { return rank_; }
  const std::vector<CMatrix>& frames() const { return frames_; }
  const CMatrix& frame(std::size_t node) const { return frames_[node]; }
  CMatrix& frame(std::size_t node) { return frames_[node]; }
  const RMatrix& positions() const { return positions_; }

  const std::optional<RealStructure>& real_structure() const { return real_; }
  void set_real_structure(std::optional<RealStructure> s) { real_ = std::move(s); }
  /// J as an n x n matrix, or as an n x 1 column holding a diagonal J.
  const std::optional<CMatrix>& complex_structure() const { return complex_structure_; }
  void set_complex_structure(std::optional<CMatrix> j) {
    if (j && (j->rows() != fiber_dim_ || (j->cols() != fiber_dim_ && j->cols() != 1)))
      raise(ErrorKind::ShapeMismatch, "complex structure must be n x n or a diagonal n x 1");
    complex_structure_ = std::move(j);
  }
  CMatrix apply_complex_structure(const CMatrix& v) const {
    if (!complex_structure_) raise(ErrorKind::InvalidArgument, "no complex structure attached");
    const CMatrix& j = *complex_structure_;
    if (j.cols() == 1 && fiber_dim_ != 1) return j.col(0).asDiagonal() * v;
    return j * v;
  }

  CVector tau(const IVector& gamma) const { return tau_phases(positions_, gamma); }

  /// Frame at the forward neighbour in direction `dir`, expressed in the fiber over
  /// the un-wrapped point (tau applied when the step crosses the boundary).
  CMatrix forward_frame(std::size_t node, int dir) const {
    const Link link = grid_.step(node, dir);
    if (!link.wrapped) return frames_[link.target];
    return tau(unit_gamma(dim(), dir)).asDiagonal() * frames_[link.target];
  }

  /// F(k)^* F(k + dk_dir) with the boundary identification applied.
  CMatrix link_overlap(std::size_t node, int dir) const {
    return frames_[node].adjoint() * forward_frame(node, dir);
  }

  CMatrix projector(std::size_t node) const { return frames_[node] * frames_[node].adjoint(); }

  /// max over nodes of ||F^*F - 1||, ||P^2 - P||, ||P - P^*||.
  Real orthonormality_residual() const {
    Real worst = 0;
    for (const auto& f : frames_)
      worst = std::max(worst, (f.adjoint() * f - CMatrix::Identity(rank_, rank_)).cwiseAbs().maxCoeff());
    return worst;
  }

  Real idempotency_residual() const {
    Real worst = 0;
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const CMatrix p = projector(i);
      worst = std::max(worst, (p * p - p).cwiseAbs().maxCoeff());
      worst = std::max(worst, (p - p.adjoint()).cwiseAbs().maxCoeff());
    }
    return worst;
  }

  Real symmetry_residual() const {
    if (!real_) return 0.0;
    Real worst = 0;
    for (std::size_t i = 0; i < frames_.size(); ++i) worst = std::max(worst, real_->commutator_norm(projector(i)));
    return worst;
  }

 protected:
  KGrid grid_;
  int fiber_dim_;
  int rank_;
  std::vector<CMatrix> frames_;
  RMatrix positions_;
  std::optional<RealStructure> real_;
  std::optional<CMatrix> complex_structure_;
};

/// Real subbundle realised inside the complex fibers. Columns satisfy
/// I F = exp(i <twist, k>) F; twist = 0 is the fixed-point bundle E_R,
/// twist = c realises E_R (x) L_c.
class RealProjectorGrid : public ProjectorGrid {
 public:
  RealProjectorGrid(ProjectorGrid base, IVector twist, int orientation = 0)
      : ProjectorGrid(std::move(base)), twist_(std::move(twist)), orientation_(orientation) {
    if (twist_.size() != dim()) raise(ErrorKind::ShapeMismatch, "twist must have one entry per direction");
  }

  const IVector& twist() const { return twist_; }
  /// +1 / -1 when frames carry a consistent orientation, 0 when unknown.
  int orientation() const { return orientation_; }
  void set_orientation(int o) { orientation_ = o; }

  /// Real overlap Re(F(k)^* F(k + dk_dir)), the O(r) transport candidate.
  RMatrix real_link_overlap(std::size_t node, int dir) const { return link_overlap(node, dir).real(); }

  /// max over nodes and columns of ||I f - exp(i <twist, k>) f||.
  Real compatibility_residual() const {
    if (!real_) return 0.0;
    Real worst = 0;
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const Real arg = kTwoPi * grid_.frac(i).dot(twist_.cast<Real>());
      const CMatrix lhs = real_->apply(frames_[i]);
      worst = std::max(worst, (lhs - std::polar(1.0, arg) * frames_[i]).cwiseAbs().maxCoeff());
    }
    return worst;
  }

 private:
  IVector twist_;
  int orientation_;
};

/// Makes the largest-magnitude entry of each column real and positive.
inline void fix_column_phases(CMatrix& frame) {
  for (Eigen::Index j = 0; j < frame.cols(); ++j) {
    Eigen::Index imax = 0;
    frame.col(j).cwiseAbs().maxCoeff(&imax);
    const Complex z = frame(imax, j);
    if (std::abs(z) > 0) frame.col(j) *= std::conj(z) / std::abs(z);
  }
}

inline Real family_equivariance_residual(const HermitianFamily& family, const RVector& k, int dir,
                                         const Lattice& lattice) {
  const IVector gamma = unit_gamma(lattice.dim(), dir);
  const CVector t = family.tau(gamma);
  const CMatrix shifted = family.eval(k + lattice.v(dir));
  const CMatrix expected = t.asDiagonal() * family.eval(k) * t.conjugate().asDiagonal();
  return (shifted - expected).cwiseAbs().maxCoeff();
}

/// Spectral frames of the band window at every node.
inline ProjectorGrid sample_projector(const HermitianFamily& family, const KGrid& grid) {
  const std::size_t count = grid.node_count();
  std::vector<CMatrix> frames(count);
  std::vector<int> ranks(count, 0);
  std::vector<Real> gaps(count, 0.0);
  std::vector<Real> tols(count, 0.0);
  parallel_for(count, [&](std::size_t i) {
    const CMatrix h = family.eval(grid.k(i));
    if (h.rows() != family.fiber_dim || h.cols() != family.fiber_dim)
      raise(ErrorKind::ShapeMismatch, "family '", family.name, "' returned wrong matrix size");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (h + h.adjoint()));
    const RVector& e = es.eigenvalues();
    const int n = family.fiber_dim;
    int lo = family.window.lo;
    int hi = family.window.hi;
    if (family.window.energy) {
      const auto [emin, emax] = *family.window.energy;
      lo = 0;
      while (lo < n && e(lo) < emin) ++lo;
      hi = lo;
      while (hi < n && e(hi) <= emax) ++hi;
    }
    if (lo < 0 || hi > n || lo > hi) raise(ErrorKind::InvalidArgument, "band window out of range");
    Real gap = std::numeric_limits<Real>::infinity();
    if (lo > 0 && hi > lo) gap = std::min(gap, e(lo) - e(lo - 1));
    if (hi < n && hi > lo) gap = std::min(gap, e(hi) - e(hi - 1));
    const Real radius = std::max(std::abs(e(0)), std::abs(e(n - 1)));
    gaps[i] = gap;
    tols[i] = family.relative_gap_tol * std::max(radius, 1e-300);
    CMatrix f = es.eigenvectors().middleCols(lo, hi - lo);
    fix_column_phases(f);
    frames[i] = std::move(f);
    ranks[i] = hi - lo;
  });
  for (std::size_t i = 0; i < count; ++i) {
    if (ranks[i] != ranks[0]) raise(ErrorKind::RankDrift, "window size ", ranks[i], " at node ", i, " vs ", ranks[0]);
    if (gaps[i] < tols[i]) raise(ErrorKind::GapClosure, "node ", i, " gap ", gaps[i]);
  }
  ProjectorGrid out(grid, family.fiber_dim, ranks[0], std::move(frames), family.positions);
  out.set_real_structure(family.real_structure);
  out.set_complex_structure(family.complex_structure);
  return out;
}

// ---------------------------------------------------------------------------
// Model zoo

namespace detail {
inline CMatrix pauli_combination(Real x, Real y, Real z) {
  CMatrix h(2, 2);
  h << Complex(z, 0), Complex(x, -y), Complex(x, y), Complex(-z, 0);
  return h;
}

/// Realification of a complex-linear map: a + ib -> (a; b).
inline CMatrix realify(const CMatrix& h) {
  const auto n = h.rows();
  RMatrix r(2 * n, 2 * n);
  r.topLeftCorner(n, n) = h.real();
  r.topRightCorner(n, n) = -h.imag();
  r.bottomLeftCorner(n, n) = h.imag();
  r.bottomRightCorner(n, n) = h.real();
  return r.cast<Complex>();
}

inline CMatrix realified_complex_structure(Eigen::Index n) {
  RMatrix j = RMatrix::Zero(2 * n, 2 * n);
  j.topRightCorner(n, n) = -RMatrix::Identity(n, n);
  j.bottomLeftCorner(n, n) = RMatrix::Identity(n, n);
  return j.cast<Complex>();
}

inline Real dual_coord(const RVector& k, int j) { return k(j); }
}  // namespace detail

/// H(k) = sin k1 s1 + sin k2 s2 + (m - cos k1 - cos k2) s3 on the square lattice, lower band.
inline HermitianFamily model_qwz(Real m) {
  HermitianFamily f;
  f.name = "qwz";
  f.fiber_dim = 2;
  f.eval = [m](const RVector& k) {
    return detail::pauli_combination(std::sin(k(0)), std::sin(k(1)), m - std::cos(k(0)) - std::cos(k(1)));
  };
  f.positions = zero_positions(2, 2);
  f.window = BandWindow::bands(0, 1);
  return f;
}

/// Unit map T^2 -> S^2 of degree `degree` (square lattice coordinates).
inline Eigen::Vector3d nvec_field(int degree, const RVector& k) {
  if (degree == 0) return Eigen::Vector3d(0, 0, 1);
  const Real g = degree;
  Eigen::Vector3d d(std::sin(k(0)), -std::sin(g * k(1)), 1.0 - std::cos(k(0)) - std::cos(g * k(1)));
  return d.normalized();
}

/// QWZ Bloch vector d(k)/|d(k)|.
inline Eigen::Vector3d qwz_field(Real m, const RVector& k) {
  Eigen::Vector3d d(std::sin(k(0)), std::sin(k(1)), m - std::cos(k(0)) - std::cos(k(1)));
  return d.normalized();
}

/// Real-symmetric 4-band family: the realification of n(k).sigma. Its lower two-band window
/// is an oriented rank-2 real bundle whose Euler number equals the degree of n.
inline HermitianFamily model_nvec(int target_degree) {
  if (std::abs(target_degree) > 4) raise(ErrorKind::InvalidArgument, "|target_degree| must be <= 4");
  HermitianFamily f;
  f.name = "nvec";
  f.fiber_dim = 4;
  f.eval = [target_degree](const RVector& k) {
    const Eigen::Vector3d n = nvec_field(target_degree, k);
    return detail::realify(detail::pauli_combination(n(0), n(1), n(2)));
  };
  f.positions = zero_positions(4, 2);
  f.window = BandWindow::bands(0, 2);
  f.real_structure = RealStructure::conjugation(4);
  f.complex_structure = detail::realified_complex_structure(2);
  return f;
}

/// k-independent projector onto the first `rank` coordinates of C^n.
inline HermitianFamily model_constant(int n, int rank, int dim = 2) {
  HermitianFamily f;
  f.name = "constant";
  f.fiber_dim = n;
  RVector diag = RVector::Ones(n);
  diag.head(rank).setZero();
  const CMatrix h = diag.cast<Complex>().asDiagonal();
  f.eval = [h](const RVector&) { return h; };
  f.positions = zero_positions(n, dim);
  f.window = BandWindow::bands(0, rank);
  f.real_structure = RealStructure::conjugation(n);
  return f;
}

/// Three real bands; the lowest is spanned by n(k) for the degree-`degree` map above.
inline HermitianFamily model_real_line(int degree) {
  HermitianFamily f;
  f.name = "real-line";
  f.fiber_dim = 3;
  f.eval = [degree](const RVector& k) {
    const Eigen::Vector3d n = nvec_field(degree, k);
    RMatrix h = -n * n.transpose();
    h(1, 1) += 0.5;
    h(2, 2) += 0.25;
    return CMatrix(h.cast<Complex>());
  };
  f.positions = zero_positions(3, 2);
  f.window = BandWindow::bands(0, 1);
  f.real_structure = RealStructure::conjugation(3);
  return f;
}

/// Unitary change of fiber basis: H -> W H W^*, I -> W W^T conj.
inline HermitianFamily conjugate_family(HermitianFamily f, const CMatrix& w) {
  if (f.positions.cwiseAbs().maxCoeff() > 0)
    raise(ErrorKind::InvalidArgument, "basis change requires a periodic (tau = 1) family");
  auto eval = f.eval;
  f.eval = [eval, w](const RVector& k) { return CMatrix(w * eval(k) * w.adjoint()); };
  if (f.real_structure) f.real_structure = RealStructure(w * f.real_structure->matrix() * w.transpose());
  if (f.complex_structure) f.complex_structure = CMatrix(w * *f.complex_structure * w.adjoint());
  f.name += "-rotated";
  return f;
}

/// The real line bundle L_c: one orbital at c/2, so tau(gamma) = exp(-i <c, gamma>/2) = +-1,
/// I = conjugation, and the fixed line R.1 has w1 = c mod 2.
inline RealProjectorGrid model_line_lc(const IVector& c, const KGrid& grid) {
  if (c.size() != grid.dim()) raise(ErrorKind::ShapeMismatch, "center must have one entry per direction");
  RMatrix pos(1, grid.dim());
  for (int j = 0; j < grid.dim(); ++j) pos(0, j) = 0.5 * c(j);
  std::vector<CMatrix> frames(grid.node_count(), CMatrix::Ones(1, 1));
  ProjectorGrid base(grid, 1, 1, std::move(frames), pos);
  base.set_real_structure(RealStructure::conjugation(1));
  return RealProjectorGrid(std::move(base), IVector::Zero(grid.dim()), 1);
}

/// Rank-r trivial real bundle with constant frame e_1..e_r inside R^r.
inline RealProjectorGrid model_trivial_real(int rank, const KGrid& grid) {
  std::vector<CMatrix> frames(grid.node_count(), CMatrix::Identity(rank, rank));
  ProjectorGrid base(grid, rank, rank, std::move(frames), zero_positions(rank, grid.dim()));
  base.set_real_structure(RealStructure::conjugation(rank));
  return RealProjectorGrid(std::move(base), IVector::Zero(grid.dim()), 1);
}

// ---------------------------------------------------------------------------
// Constructions

inline ProjectorGrid direct_sum(const ProjectorGrid& a, const ProjectorGrid& b) {
  if (!a.grid().same_shape(b.grid())) raise(ErrorKind::GridMismatch, "direct_sum needs identical grids");
  const int n = a.fiber_dim() + b.fiber_dim();
  const int r = a.rank() + b.rank();
  std::vector<CMatrix> frames(a.grid().node_count());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CMatrix f = CMatrix::Zero(n, r);
    f.topLeftCorner(a.fiber_dim(), a.rank()) = a.frame(i);
    f.bottomRightCorner(b.fiber_dim(), b.rank()) = b.frame(i);
    frames[i] = std::move(f);
  }
  RMatrix pos(n, a.dim());
  pos << a.positions(), b.positions();
  ProjectorGrid out(a.grid(), n, r, std::move(frames), pos);
  if (a.real_structure() && b.real_structure())
    out.set_real_structure(block_sum(*a.real_structure(), *b.real_structure()));
  if (a.complex_structure() && b.complex_structure()) {
    const CMatrix ja = a.apply_complex_structure(CMatrix::Identity(a.fiber_dim(), a.fiber_dim()));
    const CMatrix jb = b.apply_complex_structure(CMatrix::Identity(b.fiber_dim(), b.fiber_dim()));
    CMatrix j = CMatrix::Zero(n, n);
    j.topLeftCorner(a.fiber_dim(), a.fiber_dim()) = ja;
    j.bottomRightCorner(b.fiber_dim(), b.fiber_dim()) = jb;
    out.set_complex_structure(j);
  }
  return out;
}

inline RealProjectorGrid direct_sum(const RealProjectorGrid& a, const RealProjectorGrid& b) {
  if (a.twist() != b.twist()) raise(ErrorKind::InvalidArgument, "direct_sum of real grids needs equal twists");
  ProjectorGrid sum = direct_sum(static_cast<const ProjectorGrid&>(a), static_cast<const ProjectorGrid&>(b));
  return RealProjectorGrid(std::move(sum), a.twist(), 0);
}

/// E (x) L_c: every frame multiplied by exp(-i <c, k>/2); the twist label gains c.
inline RealProjectorGrid tensor_line(const RealProjectorGrid& e, const IVector& c) {
  if (c.size() != e.dim()) raise(ErrorKind::ShapeMismatch, "center must have one entry per direction");
  ProjectorGrid base = e;
  for (std::size_t i = 0; i < e.grid().node_count(); ++i) {
    const Real arg = -0.5 * kTwoPi * e.grid().frac(i).dot(c.cast<Real>());
    base.frame(i) *= std::polar(1.0, arg);
  }
  return RealProjectorGrid(std::move(base), e.twist() + c, e.orientation());
}

namespace detail {
/// Orthonormal basis (coefficients in the frame) of the +1 eigenspace of x -> M conj(x).
inline CMatrix fixed_point_coefficients(const CMatrix& m) {
  const auto r = m.rows();
  RMatrix a(2 * r, 2 * r);
  a.topLeftCorner(r, r) = m.real();
  a.topRightCorner(r, r) = m.imag();
  a.bottomLeftCorner(r, r) = m.imag();
  a.bottomRightCorner(r, r) = -m.real();
  Eigen::SelfAdjointEigenSolver<RMatrix> es(0.5 * (a + a.transpose()));
  CMatrix x(r, r);
  for (Eigen::Index j = 0; j < r; ++j) {
    RVector v = es.eigenvectors().col(r + j);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0) v = -v;
    x.col(j) = v.head(r).cast<Complex>() + kI * v.tail(r).cast<Complex>();
  }
  return x;
}
}  // namespace detail

/// Fixed-point subbundle {I v = v} with per-node real-orthonormal frames. When the parent
/// carries a complex structure J and has rank 2, frames are ordered as (f, J f)-positive.
inline RealProjectorGrid real_subbundle(const ProjectorGrid& e, Real tol = 1e-8) {
  if (!e.real_structure()) raise(ErrorKind::SymmetryViolation, "no real structure attached");
  const RealStructure& s = *e.real_structure();
  ProjectorGrid base = e;
  const bool orient = e.complex_structure().has_value() && e.rank() == 2;
  for (std::size_t i = 0; i < e.grid().node_count(); ++i) {
    const CMatrix& f = e.frame(i);
    const Real comm = s.commutator_norm(f * f.adjoint());
    if (comm > tol) raise(ErrorKind::SymmetryViolation, "||[I,P]|| = ", comm, " at node ", i);
    const CMatrix m = f.adjoint() * s.apply(f);
    CMatrix g = f * detail::fixed_point_coefficients(m);
    if (orient) {
      const Real o = (g.col(1).adjoint() * e.apply_complex_structure(g.col(0)))(0, 0).real();
      if (o < 0) g.col(1) *= -1.0;
    }
    base.frame(i) = std::move(g);
  }
  return RealProjectorGrid(std::move(base), IVector::Zero(e.dim()), orient ? 1 : 0);
}

}  // namespace fragtop
