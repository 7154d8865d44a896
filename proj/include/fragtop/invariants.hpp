#pragma once

#include "fragtop/bundles.hpp"

#include <map>
#include <utility>

namespace fragtop {

/// Coordinate 2-cycle (i, j), 0-based with i < j.
using Plane = std::pair<int, int>;

inline std::vector<Plane> coordinate_planes(int dim) {
  std::vector<Plane> out;
  for (int i = 0; i < dim; ++i)
    for (int j = i + 1; j < dim; ++j) out.emplace_back(i, j);
  return out;
}

/// "12", "13", "23": 1-based plane labels used in reports.
inline std::string plane_label(const Plane& p) { return std::to_string(p.first + 1) + std::to_string(p.second + 1); }

struct ChernRecord {
  Plane plane;
  int value = 0;
};

struct SWClassData {
  std::vector<int> w1;
  std::map<Plane, int> w2;
  bool orientable = true;
};

struct EulerRecord {
  Plane plane;
  int value = 0;
  /// Sign convention: the oriented pair (f1, f2) is read as the complex line f1 + i f2, so
  /// the Euler number of a realified complex line equals its plaquette Chern number.
  static constexpr const char* convention = "e(f1,f2) = c1(f1 + i f2)";
};

struct InvariantOptions {
  Real degenerate_tol = 1e-8;
  Real section_tol = 1e-3;
  std::uint64_t seed = 20240611;
  int max_attempts = 16;
};

namespace detail {

inline void check_plane(const ProjectorGrid& e, const Plane& p, int min_size) {
  if (p.first < 0 || p.second >= e.dim() || p.first >= p.second)
    raise(ErrorKind::InvalidArgument, "invalid plane (", p.first + 1, ",", p.second + 1, ")");
  if (e.grid().size(p.first) < min_size || e.grid().size(p.second) < min_size)
    raise(ErrorKind::InvalidArgument, "grid must have at least ", min_size, " nodes per direction in the plane");
}

inline std::size_t plane_node(const KGrid& g, const Plane& p, int a, int b) {
  std::array<int, 3> m{0, 0, 0};
  m[p.first] = a;
  m[p.second] = b;
  return g.index(m);
}

inline Complex unit_link(const CMatrix& overlap, Real tol, std::size_t node, int dir) {
  const Complex det = overlap.determinant();
  if (std::abs(det) < tol) raise(ErrorKind::PlaquetteDegenerate, "|det| = ", std::abs(det), " at node ", node, " dir ", dir);
  return det / std::abs(det);
}

/// Rounds a plaquette sum to the integer it must be.
inline int integer_from_flux(Real flux) {
  const Real value = flux / kTwoPi;
  const Real rounded = std::round(value);
  if (std::abs(value - rounded) > 1e-6)
    raise(ErrorKind::PlaquetteDegenerate, "flux sum ", value, " is not an integer");
  return static_cast<int>(rounded);
}

/// Sum over plaquettes of arg(U1(k) U2(k+1) conj(U1(k+2)) conj(U2(k))), rows in fixed order.
template <typename LinkFn>
Real plaquette_flux(const KGrid& g, const Plane& p, LinkFn link) {
  const int n1 = g.size(p.first);
  const int n2 = g.size(p.second);
  std::vector<Real> rows(n1, 0.0);
  parallel_for(n1, [&](std::size_t a) {
    Real acc = 0;
    for (int b = 0; b < n2; ++b) {
      const int ia = static_cast<int>(a);
      const std::size_t k = plane_node(g, p, ia, b);
      const std::size_t k1 = plane_node(g, p, ia + 1, b);
      const std::size_t k2 = plane_node(g, p, ia, b + 1);
      const Complex w = link(k, p.first) * link(k1, p.second) * std::conj(link(k2, p.first)) *
                        std::conj(link(k, p.second));
      acc += std::arg(w);
    }
    rows[a] = acc;
  });
  Real total = 0;
  for (Real r : rows) total += r;
  return total;
}

}  // namespace detail

/// Plaquette (lattice gauge) Chern number on the coordinate cycle B_ij through k = 0.
/// Sign: the lower QWZ band at m = 1 has Chern number -1, equal to the degree of d/|d|.
inline ChernRecord chern_number(const ProjectorGrid& e, const Plane& plane, const InvariantOptions& opt = {}) {
  detail::check_plane(e, plane, 8);
  if (e.rank() < 1) raise(ErrorKind::RankError, "Chern number needs rank >= 1");
  const Real flux = detail::plaquette_flux(e.grid(), plane, [&](std::size_t node, int dir) {
    return detail::unit_link(e.link_overlap(node, dir), opt.degenerate_tol, node, dir);
  });
  return {plane, detail::integer_from_flux(-flux)};
}

inline std::vector<ChernRecord> chern_numbers(const ProjectorGrid& e, const InvariantOptions& opt = {}) {
  std::vector<ChernRecord> out;
  for (const auto& p : coordinate_planes(e.dim())) out.push_back(chern_number(e, p, opt));
  return out;
}

/// Nodes along direction `dir` through `offset` (the dir-coordinate of offset is ignored).
inline std::vector<std::size_t> cycle_nodes(const KGrid& g, int dir, std::array<int, 3> offset) {
  std::vector<std::size_t> nodes;
  for (int m = 0; m < g.size(dir); ++m) {
    offset[dir] = m;
    nodes.push_back(g.index(offset));
  }
  return nodes;
}

/// Discrete Wilson-loop phase -arg prod <u(k), u(k + dk)> along v_dir, in [0, 2 pi).
inline Real berry_phase(const ProjectorGrid& e, int dir, std::array<int, 3> offset = {0, 0, 0},
                        const InvariantOptions& opt = {}) {
  if (e.rank() != 1) raise(ErrorKind::RankError, "Berry phase needs a rank-1 bundle");
  if (dir < 0 || dir >= e.dim()) raise(ErrorKind::InvalidArgument, "cycle direction out of range");
  Complex loop = 1.0;
  for (std::size_t node : cycle_nodes(e.grid(), dir, offset))
    loop *= detail::unit_link(e.link_overlap(node, dir), opt.degenerate_tol, node, dir);
  return wrap_phase(-std::arg(loop));
}

/// w1 component j = (1 - sign det W_j) / 2 for the real holonomy along v_j through k = 0.
inline std::vector<int> w1(const RealProjectorGrid& e, const InvariantOptions& opt = {}) {
  std::vector<int> out(e.dim(), 0);
  for (int dir = 0; dir < e.dim(); ++dir) {
    int sign = 1;
    for (std::size_t node : cycle_nodes(e.grid(), dir, {0, 0, 0})) {
      const Real det = e.real_link_overlap(node, dir).determinant();
      if (std::abs(det) < opt.degenerate_tol)
        raise(ErrorKind::PlaquetteDegenerate, "real overlap singular at node ", node, " dir ", dir);
      if (det < 0) sign = -sign;
    }
    out[dir] = sign < 0 ? 1 : 0;
  }
  return out;
}

namespace detail {

/// Nodes of the plane slice in tree order: first the line along the first plane
/// direction, then each column along the second, each paired with its parent.
inline std::vector<std::pair<std::size_t, std::size_t>> plane_tree(const KGrid& g, const Plane& p) {
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (int a = 1; a < g.size(p.first); ++a) edges.emplace_back(plane_node(g, p, a - 1, 0), plane_node(g, p, a, 0));
  for (int a = 0; a < g.size(p.first); ++a)
    for (int b = 1; b < g.size(p.second); ++b)
      edges.emplace_back(plane_node(g, p, a, b - 1), plane_node(g, p, a, b));
  return edges;
}

/// Flips f2 where needed so that every tree link has positive real-overlap determinant.
inline RealProjectorGrid orient_on_plane(const RealProjectorGrid& e, const Plane& p, Real tol) {
  RealProjectorGrid out = e;
  const KGrid& g = e.grid();
  const std::size_t root = plane_node(g, p, 0, 0);
  if (e.complex_structure()) {
    const CMatrix& f = out.frame(root);
    const Real o = (f.col(1).adjoint() * e.apply_complex_structure(f.col(0)))(0, 0).real();
    if (o < 0) out.frame(root).col(1) *= -1.0;
  }
  for (const auto& [parent, child] : plane_tree(g, p)) {
    const Real det = (out.frame(parent).adjoint() * out.frame(child)).real().determinant();
    if (std::abs(det) < tol) raise(ErrorKind::PlaquetteDegenerate, "real overlap singular at node ", child);
    if (det < 0) out.frame(child).col(1) *= -1.0;
  }
  out.set_orientation(1);
  return out;
}

inline Complex so2_link(const RMatrix& o, Real tol, std::size_t node, int dir) {
  const Complex u(o(0, 0) + o(1, 1), o(1, 0) - o(0, 1));
  if (std::abs(u) < tol) raise(ErrorKind::PlaquetteDegenerate, "SO(2) link degenerate at node ", node, " dir ", dir);
  return u / std::abs(u);
}

}  // namespace detail

/// Euler number of an orientable rank-2 real bundle on the cycle B_ij. When the grid carries a
/// complex structure J the base orientation is the one with <f2, J f1> > 0.
inline EulerRecord euler_number(const RealProjectorGrid& e, const Plane& plane, const InvariantOptions& opt = {}) {
  if (e.rank() != 2) raise(ErrorKind::RankError, "Euler number needs rank 2, got ", e.rank());
  detail::check_plane(e, plane, 4);
  const RealProjectorGrid o = detail::orient_on_plane(e, plane, opt.degenerate_tol);
  const KGrid& g = o.grid();
  for (int a = 0; a < g.size(plane.first); ++a)
    for (int b = 0; b < g.size(plane.second); ++b) {
      const std::size_t k = detail::plane_node(g, plane, a, b);
      for (int dir : {plane.first, plane.second})
        if (o.real_link_overlap(k, dir).determinant() <= 0)
          raise(ErrorKind::NotOrientable, "orientation reverses across link at node ", k, " dir ", dir + 1);
    }
  const Real flux = detail::plaquette_flux(g, plane, [&](std::size_t node, int dir) {
    return detail::so2_link(o.real_link_overlap(node, dir), opt.degenerate_tol, node, dir);
  });
  return {plane, detail::integer_from_flux(-flux)};
}

namespace detail {

/// Restriction to the coordinate 2-torus through k = 0; only fractional coordinates matter downstream.
inline RealProjectorGrid restrict_to_plane(const RealProjectorGrid& e, const Plane& p) {
  if (e.dim() == 2) return e;
  KGrid g(Lattice::square(2), {e.grid().size(p.first), e.grid().size(p.second)});
  std::vector<CMatrix> frames(g.node_count());
  for (int a = 0; a < g.size(0); ++a)
    for (int b = 0; b < g.size(1); ++b) frames[g.index({a, b, 0})] = e.frame(plane_node(e.grid(), p, a, b));
  RMatrix pos(e.fiber_dim(), 2);
  pos << e.positions().col(p.first), e.positions().col(p.second);
  ProjectorGrid base(g, e.fiber_dim(), e.rank(), std::move(frames), pos);
  base.set_real_structure(e.real_structure());
  base.set_complex_structure(e.complex_structure());
  IVector twist(2);
  twist << e.twist()(p.first), e.twist()(p.second);
  return RealProjectorGrid(std::move(base), twist, e.orientation());
}

/// Block sum that keeps the first summand's twist label; used only for real-overlap invariants,
/// which never consult the real structure.
inline RealProjectorGrid stack(const RealProjectorGrid& a, const RealProjectorGrid& b) {
  ProjectorGrid sum = direct_sum(static_cast<const ProjectorGrid&>(a), static_cast<const ProjectorGrid&>(b));
  sum.set_complex_structure(std::nullopt);
  return RealProjectorGrid(std::move(sum), a.twist(), 0);
}

/// Phases diag(exp(-i <x_a, k>)) so that D(k) t is tau-equivariant for constant t.
inline CVector orbital_phases(const ProjectorGrid& e, std::size_t node) {
  const RVector f = e.grid().frac(node);
  CVector d(e.fiber_dim());
  for (int a = 0; a < e.fiber_dim(); ++a) d(a) = std::polar(1.0, -kTwoPi * e.positions().row(a).dot(f));
  return d;
}

/// Orthonormal complement in R^r of the unit vector a (Householder reflection).
inline RMatrix complement_basis(const RVector& a) {
  const auto r = a.size();
  RVector v = a;
  v(0) += (a(0) >= 0 ? 1.0 : -1.0);
  RMatrix h = RMatrix::Identity(r, r);
  const Real vv = v.squaredNorm();
  if (vv > 0) h -= 2.0 * v * v.transpose() / vv;
  return h.rightCols(r - 1);
}

/// Splits off the real section F Re(F^* D(k) t); returns the complement frame grid.
inline std::optional<RealProjectorGrid> split_generic_section(const RealProjectorGrid& e, Rng& rng, Real tol) {
  CVector t = rng.complex_normal(e.fiber_dim());
  t.normalize();
  const std::size_t count = e.grid().node_count();
  std::vector<CMatrix> frames(count);
  std::vector<CVector> sections(count);
  for (std::size_t i = 0; i < count; ++i) {
    const CVector w = orbital_phases(e, i).asDiagonal() * t;
    const RVector a = (e.frame(i).adjoint() * w).real();
    const Real norm = a.norm();
    if (norm < tol) return std::nullopt;
    frames[i] = e.frame(i) * complement_basis(a / norm).cast<Complex>();
    sections[i] = e.frame(i) * (a / norm).cast<Complex>();
  }
  // A section that turns by more than 60 degrees between neighbours is under-resolved.
  for (std::size_t i = 0; i < count; ++i)
    for (int dir = 0; dir < e.dim(); ++dir) {
      const Link link = e.grid().step(i, dir);
      CVector next = sections[link.target];
      if (link.wrapped) next = e.tau(unit_gamma(e.dim(), dir)).asDiagonal() * next;
      if (sections[i].dot(next).real() < 0.5) return std::nullopt;
    }
  ProjectorGrid base(e.grid(), e.fiber_dim(), e.rank() - 1, std::move(frames), e.positions());
  base.set_real_structure(e.real_structure());
  return RealProjectorGrid(std::move(base), e.twist(), 0);
}

}  // namespace detail

/// Second Stiefel-Whitney number on B_ij. Rank 2 orientable: Euler mod 2. Otherwise the bundle
/// is first made orientable by adding L_{w1} (which leaves w2 unchanged on a torus) and then
/// reduced to rank 2 by splitting off generic nowhere-vanishing sections.
inline int w2(const RealProjectorGrid& e, const Plane& plane, const InvariantOptions& opt = {}) {
  if (e.rank() < 2) raise(ErrorKind::RankError, "w2 needs rank >= 2, got ", e.rank());
  detail::check_plane(e, plane, 4);
  RealProjectorGrid cur = detail::restrict_to_plane(e, plane);
  const Plane p01{0, 1};
  const std::vector<int> first = w1(cur, opt);
  if (first[0] || first[1]) {
    IVector c(2);
    c << first[0], first[1];
    cur = detail::stack(cur, model_line_lc(c, cur.grid()));
  }
  Rng rng(opt.seed);
  while (cur.rank() > 2) {
    std::optional<RealProjectorGrid> next;
    for (int attempt = 0; attempt < opt.max_attempts && !next; ++attempt) {
      Rng local(rng.next_seed());
      next = detail::split_generic_section(cur, local, opt.section_tol);
    }
    if (!next) raise(ErrorKind::SectionVanishes, "no nowhere-vanishing section after ", opt.max_attempts, " seeds");
    cur = std::move(*next);
  }
  const int eu = euler_number(cur, p01, opt).value;
  return ((eu % 2) + 2) % 2;
}

inline SWClassData stiefel_whitney(const RealProjectorGrid& e, const InvariantOptions& opt = {}) {
  SWClassData out;
  out.w1 = w1(e, opt);
  out.orientable = std::all_of(out.w1.begin(), out.w1.end(), [](int b) { return b == 0; });
  if (e.rank() >= 2)
    for (const auto& p : coordinate_planes(e.dim())) out.w2[p] = w2(e, p, opt);
  else
    for (const auto& p : coordinate_planes(e.dim())) out.w2[p] = 0;
  return out;
}

/// Independent oracle: degree of a unit-vector field on the 2-torus grid, computed as the
/// signed solid angle of its triangulated image divided by 4 pi.
inline int degree_oracle(const std::vector<Eigen::Vector3d>& field, int n1, int n2, Real antipodal_tol = 1e-6) {
  if (n1 < 16 || n2 < 16) raise(ErrorKind::InvalidArgument, "degree oracle needs at least 16x16 samples");
  if (static_cast<int>(field.size()) != n1 * n2) raise(ErrorKind::ShapeMismatch, "field size != n1*n2");
  auto at = [&](int a, int b) -> const Eigen::Vector3d& { return field[((a % n1) * n2) + (b % n2)]; };
  auto solid = [&](const Eigen::Vector3d& x, const Eigen::Vector3d& y, const Eigen::Vector3d& z) {
    const Real num = x.dot(y.cross(z));
    const Real den = 1.0 + x.dot(y) + y.dot(z) + z.dot(x);
    if (std::abs(num) < antipodal_tol && den < antipodal_tol)
      raise(ErrorKind::DegenerateTriangle, "nearly antipodal samples");
    return 2.0 * std::atan2(num, den);
  };
  Real total = 0;
  for (int a = 0; a < n1; ++a)
    for (int b = 0; b < n2; ++b) {
      const auto& p00 = at(a, b);
      const auto& p10 = at(a + 1, b);
      const auto& p11 = at(a + 1, b + 1);
      const auto& p01 = at(a, b + 1);
      total += solid(p00, p10, p11) + solid(p00, p11, p01);
    }
  const Real value = total / (4.0 * kPi);
  const Real rounded = std::round(value);
  if (std::abs(value - rounded) > 1e-6) raise(ErrorKind::DegenerateTriangle, "solid-angle sum ", value, " not integral");
  return static_cast<int>(rounded);
}

}  // namespace fragtop
