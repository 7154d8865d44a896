#pragma once

#include "fragtop/cohomology.hpp"
#include "fragtop/invariants.hpp"

namespace fragtop {

/// Global Bloch frame on the grid. Values outside [0, N) are defined by phi(k + v_j) = tau(v_j) phi(k).
struct FrameField {
  KGrid grid;
  std::vector<CMatrix> sections;
  RMatrix positions;
  /// Integer lift of c_a per section; I phi_a = exp(i <c_a, k>) phi_a when a real structure is attached.
  std::vector<IVector> labels;
  std::optional<RealStructure> real_structure;

  int dim() const { return grid.dim(); }
  int rank() const { return sections.empty() ? 0 : static_cast<int>(sections.front().cols()); }
  int fiber_dim() const { return sections.empty() ? 0 : static_cast<int>(sections.front().rows()); }

  CVector tau(const IVector& gamma) const { return tau_phases(positions, gamma); }

  /// Section values at arbitrary integer grid coordinates (periodic extension through tau).
  CMatrix at(std::array<int, 3> m) const {
    IVector gamma = IVector::Zero(dim());
    for (int i = 0; i < dim(); ++i) {
      const int n = grid.size(i);
      gamma(i) = (m[i] >= 0 ? m[i] / n : -((-m[i] + n - 1) / n));
    }
    return tau(gamma).asDiagonal() * sections[grid.index(m)];
  }

  CMatrix forward(std::size_t node, int dir) const {
    auto m = grid.coords(node);
    m[dir] += 1;
    return at(m);
  }
};

struct FrameQuality {
  Real max_gradient = 0;
  Real mean_gradient = 0;
  Real orthonormality = 0;
  /// max || phi(k + v_j) - tau(v_j) phi(k) || through the periodic extension.
  Real equivariance = 0;
  /// Largest change in step length between the boundary-crossing link and the link before it.
  Real seam_kink = 0;
  Real compatibility = 0;
};

/// Discrete gradient ||phi(k') - phi(k)|| / |k' - k| per link (Frobenius norm over sections).
inline FrameQuality frame_quality(const FrameField& f) {
  FrameQuality q;
  const KGrid& g = f.grid;
  const int r = f.rank();
  Real sum = 0;
  std::size_t links = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const CMatrix& phi = f.sections[i];
    q.orthonormality = std::max(q.orthonormality, (phi.adjoint() * phi - CMatrix::Identity(r, r)).cwiseAbs().maxCoeff());
    for (int dir = 0; dir < f.dim(); ++dir) {
      const Real dk = g.lattice().v(dir).norm() / g.size(dir);
      const Real grad = (f.forward(i, dir) - phi).norm() / dk;
      q.max_gradient = std::max(q.max_gradient, grad);
      sum += grad;
      ++links;
    }
    if (f.real_structure) {
      const Real arg_scale = kTwoPi;
      for (int a = 0; a < r; ++a) {
        const Real arg = arg_scale * g.frac(i).dot(f.labels[a].cast<Real>());
        const CVector lhs = f.real_structure->apply(phi.col(a));
        q.compatibility = std::max(q.compatibility, (lhs - std::polar(1.0, arg) * phi.col(a)).norm());
      }
    }
  }
  q.mean_gradient = links ? sum / links : 0.0;
  for (int dir = 0; dir < f.dim(); ++dir) {
    const int n = g.size(dir);
    for (std::size_t i = 0; i < g.node_count(); ++i) {
      auto m = g.coords(i);
      if (m[dir] != 0) continue;
      auto end = m;
      end[dir] = n;
      const CMatrix wrapped = f.at(end);
      const CMatrix expected = f.tau(unit_gamma(f.dim(), dir)).asDiagonal() * f.sections[i];
      q.equivariance = std::max(q.equivariance, (wrapped - expected).cwiseAbs().maxCoeff());
      if (n >= 3) {
        auto last = m, prev = m;
        last[dir] = n - 1;
        prev[dir] = n - 2;
        const Real seam = (f.at(end) - f.at(last)).norm();
        const Real before = (f.at(last) - f.at(prev)).norm();
        q.seam_kink = std::max(q.seam_kink, std::abs(seam - before));
      }
    }
  }
  return q;
}

/// max over nodes of || Phi Phi^* - P ||.
inline Real span_residual(const FrameField& f, const ProjectorGrid& e) {
  Real worst = 0;
  for (std::size_t i = 0; i < e.grid().node_count(); ++i)
    worst = std::max(worst, (f.sections[i] * f.sections[i].adjoint() - e.projector(i)).cwiseAbs().maxCoeff());
  return worst;
}

struct GaugeOptions {
  std::uint64_t seed = 20240611;
  int max_attempts = 16;
  Real section_tol = 1e-3;
  /// Minimum Re <s(k), s(k')> between neighbouring unit sections.
  Real neighbour_overlap = 0.5;
  InvariantOptions invariants;
};

namespace detail {

/// Spanning tree over the whole grid: lines along dim 0 from the origin, then along dim 1 from
/// every node of that line, then along dim 2.
inline std::vector<std::size_t> base_nodes(const KGrid& g, int j) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto m = g.coords(i);
    bool ok = true;
    for (int l = j; l < g.dim(); ++l) ok = ok && m[l] == 0;
    if (ok) out.push_back(i);
  }
  return out;
}

inline std::size_t shifted(const KGrid& g, std::size_t node, int dir, int steps) {
  auto m = g.coords(node);
  m[dir] += steps;
  return g.index(m);
}

inline void orient_tree(ProjectorGrid& b) {
  const KGrid& g = b.grid();
  for (int j = 0; j < g.dim(); ++j)
    for (std::size_t base : base_nodes(g, j))
      for (int m = 0; m + 1 < g.size(j); ++m) {
        const std::size_t p = shifted(g, base, j, m);
        const std::size_t c = shifted(g, base, j, m + 1);
        if ((b.frame(p).adjoint() * b.frame(c)).real().determinant() < 0) b.frame(c).col(1) *= -1.0;
      }
}

inline Eigen::Matrix2d rotation(Real angle) {
  Eigen::Matrix2d r;
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

/// Nowhere-vanishing unit section of a rank-2 real bundle (frames as complex n x 2 matrices with
/// real overlaps Re(F^* F')), built by line-by-line parallel transport. Holonomies may be rotations
/// or reflections. `failure` is raised when the transport angles cannot be closed consistently.
inline std::vector<CVector> o2_transport_section(ProjectorGrid b, ErrorKind failure) {
  if (b.rank() != 2) raise(ErrorKind::RankError, "transport engine needs rank 2");
  const KGrid& g = b.grid();
  orient_tree(b);
  std::vector<Eigen::Vector2d> y(g.node_count(), Eigen::Vector2d::Zero());
  std::vector<char> done(g.node_count(), 0);
  y[0] = Eigen::Vector2d(1, 0);
  done[0] = 1;
  for (int j = 0; j < g.dim(); ++j) {
    const int n = g.size(j);
    const std::vector<std::size_t> base = base_nodes(g, j);
    std::vector<Real> beta(base.size(), 0.0);
    std::vector<char> reflecting(base.size(), 0);
    std::vector<std::vector<Eigen::Matrix2d>> carry(base.size());
    parallel_for(base.size(), [&](std::size_t bi) {
      const std::size_t b0 = base[bi];
      const CMatrix closing = b.tau(unit_gamma(g.dim(), j)).asDiagonal() * b.frame(b0);
      CMatrix t = b.frame(b0);
      auto& w = carry[bi];
      w.assign(n, Eigen::Matrix2d::Identity());
      for (int m = 0; m < n; ++m) {
        const CMatrix next = m + 1 < n ? b.frame(shifted(g, b0, j, m + 1)) : closing;
        const RMatrix o = (t.adjoint() * next).real();
        const RMatrix u = polar_unitary(o);
        t = next * u.transpose().cast<Complex>();
        if (m + 1 < n) w[m + 1] = (next.adjoint() * t).real();
      }
      const Eigen::Matrix2d h = (closing.adjoint() * t).real();
      reflecting[bi] = h.determinant() < 0;
      const Eigen::Vector2d yy = y[b0];
      const Eigen::Vector2d z = h.transpose() * yy;
      beta[bi] = std::atan2(yy(0) * z(1) - yy(1) * z(0), yy.dot(z));
    });
    // Lift beta continuously over the base tree and check every other base link.
    std::vector<std::size_t> position(g.node_count(), SIZE_MAX);
    for (std::size_t bi = 0; bi < base.size(); ++bi) position[base[bi]] = bi;
    std::vector<Real> lifted(beta);
    for (int l = 0; l < j; ++l)
      for (std::size_t root : base_nodes(g, l))
        for (int m = 0; m + 1 < g.size(l); ++m) {
          const std::size_t p = position[shifted(g, root, l, m)];
          const std::size_t c = position[shifted(g, root, l, m + 1)];
          lifted[c] = lifted[p] + principal_angle(beta[c] - lifted[p]);
        }
    struct Mismatch {
      int sign;
      long turns;
    };
    std::vector<Mismatch> mismatches;
    for (std::size_t bi = 0; bi < base.size(); ++bi)
      for (int l = 0; l < j; ++l) {
        const Link link = g.step(base[bi], l);
        const int s = (b.frame(base[bi]).adjoint() * b.forward_frame(base[bi], l)).real().determinant() > 0 ? 1 : -1;
        const Real diff = lifted[position[link.target]] - s * lifted[bi];
        const long turns = std::lround(diff / kTwoPi);
        if (std::abs(diff - kTwoPi * turns) > kPi / 2)
          raise(failure, "transport angle jumps by ", diff, " across a base link (vortex or under-resolved grid)");
        if (turns != 0 || s < 0) mismatches.push_back({s, turns});
      }
    long shift = 0;
    bool shift_set = false;
    for (const auto& mm : mismatches) {
      if (mm.sign > 0) {
        if (mm.turns != 0) raise(failure, "transport winds ", mm.turns, " times around an orientable cycle");
        continue;
      }
      if (mm.turns % 2) raise(failure, "odd winding across an orientation-reversing cycle");
      if (!shift_set) {
        shift = -mm.turns / 2;
        shift_set = true;
      } else if (shift != -mm.turns / 2) {
        raise(failure, "inconsistent windings across orientation-reversing cycles");
      }
    }
    parallel_for(base.size(), [&](std::size_t bi) {
      const Real total = lifted[bi] + kTwoPi * shift;
      const Eigen::Vector2d y0 = y[base[bi]];
      for (int m = 1; m < n; ++m) {
        const std::size_t node = shifted(g, base[bi], j, m);
        // A reflection holonomy glues the angle profile to its mirror image, so its odd
        // derivatives must vanish at both ends.
        const Real s = static_cast<Real>(m) / n;
        const Real profile = reflecting[bi] ? 0.5 * (1.0 - std::cos(kPi * s)) : s;
        y[node] = carry[bi][m] * rotation(total * profile) * y0;
        done[node] = 1;
      }
    });
  }
  std::vector<CVector> out(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    if (!done[i]) raise(ErrorKind::InvalidArgument, "transport did not reach node ", i);
    const Eigen::Vector2d yi = y[i].normalized();
    out[i] = b.frame(i) * yi.cast<Complex>();
  }
  // The perpendicular partner in the tree-oriented frames is stored in the second slot by callers.
  return out;
}

/// Perpendicular unit vector within the rank-2 fiber: F R(pi/2) y for sigma = F y.
inline CVector perpendicular(const CMatrix& frame, const CVector& sigma) {
  const Eigen::Vector2d y = (frame.adjoint() * sigma).real();
  const Eigen::Vector2d p(-y(1), y(0));
  return frame * p.normalized().cast<Complex>();
}

inline CMatrix complex_complement(const CVector& a) {
  const auto r = a.size();
  Eigen::HouseholderQR<CMatrix> qr{CMatrix(a)};
  const CMatrix q = qr.householderQ() * CMatrix::Identity(r, r);
  return q.rightCols(r - 1);
}

/// Smallest Re <s(k), s(k')> over all links, including the boundary.
inline Real min_neighbour_overlap(const ProjectorGrid& e, const std::vector<CVector>& s) {
  Real worst = 1;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (int dir = 0; dir < e.dim(); ++dir) {
      const Link link = e.grid().step(i, dir);
      CVector next = s[link.target];
      if (link.wrapped) next = e.tau(unit_gamma(e.dim(), dir)).asDiagonal() * next;
      worst = std::min(worst, s[i].dot(next).real());
    }
  return worst;
}

inline bool section_is_resolved(const ProjectorGrid& e, const std::vector<CVector>& s, Real min_overlap) {
  return min_neighbour_overlap(e, s) >= min_overlap;
}

inline ProjectorGrid with_frames(const ProjectorGrid& like, std::vector<CMatrix> frames, int rank) {
  ProjectorGrid out(like.grid(), like.fiber_dim(), rank, std::move(frames), like.positions());
  out.set_real_structure(like.real_structure());
  return out;
}

inline void multiply_twist_phase(ProjectorGrid& e, const IVector& c) {
  if (c.isZero()) return;
  for (std::size_t i = 0; i < e.grid().node_count(); ++i)
    e.frame(i) *= std::polar(1.0, -kPi * e.grid().frac(i).dot(c.cast<Real>()));
}

}  // namespace detail

/// Smooth tau-equivariant frame of a Chern-trivial bundle. Generic projected sections P(k) D(k) t
/// are split off until one complex line is left, which is trivialised by parallel transport.
inline FrameField smooth_frame(const ProjectorGrid& e, const GaugeOptions& opt = {}) {
  for (const auto& rec : chern_numbers(e, opt.invariants))
    if (rec.value != 0)
      raise(ErrorKind::ChernObstruction, "plane (", rec.plane.first + 1, ",", rec.plane.second + 1, ") Chern ",
            rec.value);
  const KGrid& g = e.grid();
  const std::size_t count = g.node_count();
  std::vector<CMatrix> out(count, CMatrix::Zero(e.fiber_dim(), e.rank()));
  ProjectorGrid cur = e;
  Rng rng(opt.seed);
  int col = 0;
  while (cur.rank() > 1) {
    std::optional<std::vector<CVector>> found;
    std::vector<CMatrix> complement(count), best_complement;
    Real best = -1;
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
      Rng local(rng.next_seed());
      CVector t = local.complex_normal(e.fiber_dim());
      t.normalize();
      std::vector<CVector> s(count);
      bool ok = true;
      for (std::size_t i = 0; i < count && ok; ++i) {
        const CVector a = cur.frame(i).adjoint() * (detail::orbital_phases(cur, i).asDiagonal() * t);
        if (a.norm() < opt.section_tol) ok = false;
        else {
          s[i] = cur.frame(i) * (a / a.norm());
          complement[i] = cur.frame(i) * detail::complex_complement(a / a.norm());
        }
      }
      if (!ok) continue;
      const Real overlap = detail::min_neighbour_overlap(cur, s);
      if (overlap >= opt.neighbour_overlap && overlap > best) {
        best = overlap;
        found = std::move(s);
        best_complement = complement;
      }
    }
    if (!found) raise(ErrorKind::SectionVanishes, "no resolved generic section after ", opt.max_attempts, " seeds");
    complement = std::move(best_complement);
    for (std::size_t i = 0; i < count; ++i) out[i].col(col) = (*found)[i];
    ++col;
    cur = detail::with_frames(cur, std::move(complement), cur.rank() - 1);
  }
  std::vector<CMatrix> real_pairs(count);
  for (std::size_t i = 0; i < count; ++i) {
    CMatrix pair(e.fiber_dim(), 2);
    pair.col(0) = cur.frame(i).col(0);
    pair.col(1) = kI * cur.frame(i).col(0);
    real_pairs[i] = std::move(pair);
  }
  ProjectorGrid realified(g, e.fiber_dim(), 2, std::move(real_pairs), e.positions());
  const std::vector<CVector> tail = detail::o2_transport_section(realified, ErrorKind::ChernObstruction);
  for (std::size_t i = 0; i < count; ++i) out[i].col(col) = tail[i];
  return FrameField{g, std::move(out), e.positions(), std::vector<IVector>(e.rank(), IVector::Zero(g.dim())),
                    std::nullopt};
}

/// Frame phi_a with I phi_a = exp(i <c_a, k>) phi_a realising a split plan. All but the last two
/// centers come from generic twisted sections; the last rank-2 piece is handled by transport.
inline FrameField compatible_real_frame(const RealProjectorGrid& e, const DecompositionPlan& plan,
                                        const GaugeOptions& opt = {}) {
  if (!plan.splits()) raise(ErrorKind::PlanObstructed, "plan verdict is ", plan.verdict_str());
  if (static_cast<int>(plan.centers.size()) != e.rank())
    raise(ErrorKind::ShapeMismatch, "plan has ", plan.centers.size(), " centers for rank ", e.rank());
  if (!e.real_structure()) raise(ErrorKind::SymmetryViolation, "compatible frames need a real structure");
  const RealStructure& s = *e.real_structure();
  for (int dir = 0; dir < e.dim(); ++dir) {
    const CVector t = e.tau(unit_gamma(e.dim(), dir));
    const Real comm = (s.matrix() * t.conjugate().asDiagonal() - t.asDiagonal() * s.matrix()).cwiseAbs().maxCoeff();
    if (comm > 1e-10) raise(ErrorKind::SymmetryViolation, "I does not commute with tau along v", dir + 1);
  }
  const KGrid& g = e.grid();
  const std::size_t count = g.node_count();
  const int r = e.rank();
  std::vector<CMatrix> out(count, CMatrix::Zero(e.fiber_dim(), r));
  ProjectorGrid cur = e;
  IVector twist = e.twist();
  Rng rng(opt.seed);
  for (int a = 0; a + 2 < r; ++a) {
    const IVector& c = plan.centers[a];
    ProjectorGrid twisted = cur;
    detail::multiply_twist_phase(twisted, c - twist);
    std::optional<std::vector<CVector>> found;
    std::vector<CMatrix> complement(count), best_complement;
    Real best = -1;
    for (int attempt = 0; attempt < opt.max_attempts; ++attempt) {
      Rng local(rng.next_seed());
      CVector t = local.complex_normal(e.fiber_dim());
      t.normalize();
      std::vector<CVector> sec(count);
      bool ok = true;
      for (std::size_t i = 0; i < count && ok; ++i) {
        const CVector w0 = detail::orbital_phases(cur, i).asDiagonal() * t;
        const Real arg = -kTwoPi * g.frac(i).dot(c.cast<Real>());
        const CVector w = 0.5 * (w0 + std::polar(1.0, arg) * s.apply(w0));
        const RVector coeff = (twisted.frame(i).adjoint() * w).real();
        const Real norm = coeff.norm();
        if (norm < opt.section_tol) ok = false;
        else {
          sec[i] = twisted.frame(i) * (coeff / norm).cast<Complex>();
          complement[i] = twisted.frame(i) * detail::complement_basis(coeff / norm).cast<Complex>();
        }
      }
      if (!ok) continue;
      const Real overlap = detail::min_neighbour_overlap(cur, sec);
      if (overlap >= opt.neighbour_overlap && overlap > best) {
        best = overlap;
        found = std::move(sec);
        best_complement = complement;
      }
    }
    if (!found)
      raise(ErrorKind::SectionVanishes, "center ", center_str(c), ": no resolved section after ", opt.max_attempts,
            " seeds");
    complement = std::move(best_complement);
    for (std::size_t i = 0; i < count; ++i) out[i].col(a) = (*found)[i];
    cur = detail::with_frames(cur, std::move(complement), cur.rank() - 1);
    twist = c;
  }
  if (r >= 2) {
    const IVector& c1 = plan.centers[r - 2];
    const IVector& c2 = plan.centers[r - 1];
    ProjectorGrid twisted = cur;
    detail::multiply_twist_phase(twisted, c1 - twist);
    const std::vector<CVector> sigma = detail::o2_transport_section(twisted, ErrorKind::SectionVanishes);
    ProjectorGrid oriented = twisted;
    detail::orient_tree(oriented);
    std::vector<CVector> rho(count);
    for (std::size_t i = 0; i < count; ++i) {
      out[i].col(r - 2) = sigma[i];
      rho[i] = detail::perpendicular(oriented.frame(i), sigma[i]) *
               std::polar(1.0, -kPi * g.frac(i).dot((c2 - c1).cast<Real>()));
    }
    if (!detail::section_is_resolved(cur, rho, opt.neighbour_overlap))
      raise(ErrorKind::SectionVanishes, "last line does not close with center ", center_str(c2),
            " (plan does not match the bundle)");
    for (std::size_t i = 0; i < count; ++i) out[i].col(r - 1) = rho[i];
  } else if (r == 1) {
    ProjectorGrid twisted = cur;
    detail::multiply_twist_phase(twisted, plan.centers[0] - twist);
    std::vector<CVector> line(count);
    line[0] = twisted.frame(0).col(0);
    for (int j = 0; j < g.dim(); ++j)
      for (std::size_t base : detail::base_nodes(g, j))
        for (int m = 0; m + 1 < g.size(j); ++m) {
          const std::size_t p = detail::shifted(g, base, j, m);
          const std::size_t c = detail::shifted(g, base, j, m + 1);
          const CVector v = twisted.frame(c).col(0);
          line[c] = line[p].dot(v).real() < 0 ? CVector(-v) : v;
        }
    if (!detail::section_is_resolved(cur, line, opt.neighbour_overlap))
      raise(ErrorKind::SectionVanishes, "line does not close with center ", center_str(plan.centers[0]));
    for (std::size_t i = 0; i < count; ++i) out[i].col(0) = line[i];
  }
  return FrameField{g, std::move(out), e.positions(), plan.centers, e.real_structure()};
}

/// Negative control: multiplies section `a` by a phase that winds once around (x0, y0) in the
/// (0, 1) plane. A single vortex cannot close on the torus, so the phase also jumps across the
/// boundary lines.
inline FrameField with_vortex(FrameField f, int a, Real x0 = 0.5 + 0.25 / 7, Real y0 = 0.5 + 0.125 / 7) {
  for (std::size_t i = 0; i < f.grid.node_count(); ++i) {
    const RVector t = f.grid.frac(i);
    const Complex z(std::sin(kPi * (t(0) - x0)), std::sin(kPi * (t(1) - y0)));
    f.sections[i].col(a) *= z / std::abs(z);
  }
  return f;
}

/// Negative control: independent random phase (or sign, for real labels) on every node.
inline FrameField with_random_gauge(FrameField f, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& s : f.sections)
    for (Eigen::Index a = 0; a < s.cols(); ++a) s.col(a) *= std::polar(1.0, kTwoPi * rng.uniform());
  return f;
}

}  // namespace fragtop
