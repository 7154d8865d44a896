#pragma once

#include "fragtop/gauge.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <map>

namespace fragtop {

/// Samples psi(R, alpha) of a tight-binding function on the periodic supercell Z^d / M Z^d.
/// Orbital alpha of cell R sits at R + positions(alpha) (lattice coordinates).
struct WannierFunction {
  Lattice lattice;
  std::vector<int> sizes;
  RMatrix positions;
  /// cells x orbitals, cells ordered like KGrid nodes (first coordinate slowest).
  CMatrix values;
  IVector center_tag;

  int dim() const { return lattice.dim(); }
  int fiber_dim() const { return static_cast<int>(values.cols()); }
  KGrid cells() const { return KGrid(lattice, sizes); }
  Real norm() const { return values.norm(); }
};

struct ShellRecord {
  Real radius = 0;
  Real max_abs = 0;
  Real mass = 0;
};

struct DecayReport {
  Real exp_rate = 0;
  Real exp_r2 = 0;
  Real power_exponent = 0;
  Real power_r2 = 0;
  Real second_moment = 0;
  std::pair<Real, Real> tail_window{0, 0};
  int fit_points = 0;
  std::vector<ShellRecord> shells;
};

namespace detail {

/// In-place separable DFT over the supercell axes; inverse includes the 1/N factor.
inline void fft_cells(CVector& data, const std::vector<int>& sizes, bool inverse) {
  const int d = static_cast<int>(sizes.size());
  Eigen::FFT<Real> fft;
  std::size_t stride = 1;
  for (int axis = d - 1; axis >= 0; --axis) {
    const std::size_t n = sizes[axis];
    const std::size_t total = data.size();
    std::vector<Complex> in(n), out(n);
    for (std::size_t start = 0; start < total; ++start) {
      if ((start / stride) % n != 0) continue;
      for (std::size_t m = 0; m < n; ++m) in[m] = data(start + m * stride);
      if (inverse)
        fft.inv(out, in);
      else
        fft.fwd(out, in);
      for (std::size_t m = 0; m < n; ++m) data(start + m * stride) = out[m];
    }
    stride *= n;
  }
}

inline Real fractional_part(Real x) {
  Real f = x - std::floor(x);
  if (f >= 1.0) f -= 1.0;
  if (f == 0) f = 0;
  return f;
}

/// x reduced to (-M/2, M/2].
inline Real minimum_image(Real x, int m) {
  Real y = x - m * std::floor(x / m);
  if (y > 0.5 * m) y -= m;
  return y;
}

struct Fit {
  Real slope = 0;
  Real r2 = 0;
};

inline Fit linear_fit(const std::vector<Real>& x, const std::vector<Real>& y) {
  const std::size_t n = x.size();
  if (n < 3) return {};
  Real mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  Real sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) return {};
  Fit f;
  f.slope = sxy / sxx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

inline void require_same_shape(const WannierFunction& a, const WannierFunction& b) {
  if (!(a.lattice == b.lattice) || a.sizes != b.sizes || a.values.cols() != b.values.cols())
    raise(ErrorKind::ShapeMismatch, "Wannier functions live on different supercells");
}

}  // namespace detail

/// phi(k)_alpha = sum_R exp(-i <R + x_alpha, k>) psi(R, alpha), one fiber vector per grid node.
inline std::vector<CVector> bloch_transform(const WannierFunction& w, const KGrid& grid) {
  if (!(grid.lattice() == w.lattice) || grid.sizes() != w.sizes)
    raise(ErrorKind::ShapeMismatch, "k-grid must match the supercell");
  const int n = w.fiber_dim();
  const std::size_t count = grid.node_count();
  std::vector<CVector> out(count, CVector(n));
  for (int a = 0; a < n; ++a) {
    CVector col = w.values.col(a);
    detail::fft_cells(col, w.sizes, false);
    for (std::size_t i = 0; i < count; ++i) {
      const Real arg = -kTwoPi * w.positions.row(a).dot(grid.frac(i));
      out[i](a) = std::polar(1.0, arg) * col(i);
    }
  }
  return out;
}

/// Inverse of bloch_transform: psi(R, alpha) = (1/N) sum_k exp(i <R + x_alpha, k>) phi(k)_alpha.
inline WannierFunction inverse_bloch_transform(const std::vector<CVector>& phi, const KGrid& grid,
                                               const RMatrix& positions) {
  const std::size_t count = grid.node_count();
  if (phi.size() != count) raise(ErrorKind::ShapeMismatch, "section count != node count");
  const int n = static_cast<int>(positions.rows());
  if (positions.cols() != grid.dim()) raise(ErrorKind::ShapeMismatch, "positions must be fiber_dim x dim");
  CMatrix values(count, n);
  for (int a = 0; a < n; ++a) {
    CVector col(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (phi[i].size() != n) raise(ErrorKind::ShapeMismatch, "section has wrong fiber dimension");
      col(i) = std::polar(1.0, kTwoPi * positions.row(a).dot(grid.frac(i))) * phi[i](a);
    }
    detail::fft_cells(col, grid.sizes(), true);
    values.col(a) = col;
  }
  return WannierFunction{grid.lattice(), grid.sizes(), positions, std::move(values), IVector::Zero(grid.dim())};
}

/// Wannier function of section `a`; the supercell equals the k-grid.
inline WannierFunction wannier_synthesize(const FrameField& f, int a, std::optional<std::vector<int>> supercell = {}) {
  if (a < 0 || a >= f.rank()) raise(ErrorKind::InvalidArgument, "section index out of range");
  if (supercell && *supercell != f.grid.sizes())
    raise(ErrorKind::ShapeMismatch, "supercell must equal the k-grid size");
  std::vector<CVector> phi(f.grid.node_count());
  for (std::size_t i = 0; i < phi.size(); ++i) phi[i] = f.sections[i].col(a);
  WannierFunction w = inverse_bloch_transform(phi, f.grid, f.positions);
  w.center_tag = a < static_cast<int>(f.labels.size()) ? f.labels[a] : IVector::Zero(f.dim());
  return w;
}

/// psi(. - gamma).
inline WannierFunction translate(const WannierFunction& w, const IVector& gamma) {
  const KGrid cells = w.cells();
  WannierFunction out = w;
  for (std::size_t i = 0; i < cells.node_count(); ++i) {
    auto m = cells.coords(i);
    for (int j = 0; j < w.dim(); ++j) m[j] += gamma(j);
    out.values.row(cells.index(m)) = w.values.row(i);
  }
  return out;
}

/// Orbital-resolved density-weighted position in lattice coordinates, measured in the window
/// of width M centred on the most populated cell; not reduced.
inline RVector unreduced_center(const WannierFunction& w) {
  const KGrid cells = w.cells();
  Eigen::Index peak = 0;
  w.values.rowwise().squaredNorm().maxCoeff(&peak);
  const auto ref = cells.coords(static_cast<std::size_t>(peak));
  RVector c = RVector::Zero(w.dim());
  Real mass = 0;
  for (std::size_t i = 0; i < cells.node_count(); ++i) {
    const auto m = cells.coords(i);
    for (int a = 0; a < w.fiber_dim(); ++a) {
      const Real p = std::norm(w.values(i, a));
      if (p == 0) continue;
      for (int j = 0; j < w.dim(); ++j) {
        const Real rel = detail::minimum_image(m[j] - ref[j], w.sizes[j]);
        c(j) += p * (ref[j] + rel + w.positions(a, j));
      }
      mass += p;
    }
  }
  if (mass == 0) raise(ErrorKind::InvalidArgument, "Wannier function vanishes");
  return c / mass;
}

/// Expectation of the position operator in lattice coordinates, reduced to [0, 1)^d.
inline RVector wannier_center(const WannierFunction& w) {
  RVector c = unreduced_center(w);
  for (int j = 0; j < w.dim(); ++j) c(j) = detail::fractional_part(c(j));
  return c;
}

/// Minimum-image Cartesian displacement of every sample from `center` (lattice coordinates).
inline std::vector<Real> sample_radii(const WannierFunction& w, const RVector& center) {
  const KGrid cells = w.cells();
  std::vector<Real> r(cells.node_count() * w.fiber_dim());
  for (std::size_t i = 0; i < cells.node_count(); ++i) {
    const auto m = cells.coords(i);
    for (int a = 0; a < w.fiber_dim(); ++a) {
      RVector rel(w.dim());
      for (int j = 0; j < w.dim(); ++j)
        rel(j) = detail::minimum_image(m[j] + w.positions(a, j) - center(j), w.sizes[j]);
      r[i * w.fiber_dim() + a] = w.lattice.position(rel).norm();
    }
  }
  return r;
}

/// Shell profile (width-1 shells around the centre), second moment, and the two tail fits over
/// radii [M/8, M/2].
inline DecayReport decay_analysis(const WannierFunction& w) {
  const int m_min = *std::min_element(w.sizes.begin(), w.sizes.end());
  if (m_min < 16) raise(ErrorKind::WindowTooSmall, "decay analysis needs M >= 16, got ", m_min);
  DecayReport rep;
  const RVector center = unreduced_center(w);
  const std::vector<Real> radii = sample_radii(w, center);
  const int n = w.fiber_dim();
  std::map<long, ShellRecord> shells;
  Real moment = 0;
  Real mass = 0;
  for (std::size_t s = 0; s < radii.size(); ++s) {
    const Complex v = w.values(static_cast<Eigen::Index>(s / n), static_cast<Eigen::Index>(s % n));
    const Real p = std::norm(v);
    moment += p * radii[s] * radii[s];
    mass += p;
    ShellRecord& sh = shells[static_cast<long>(std::floor(radii[s]))];
    sh.mass += p;
    if (std::abs(v) >= sh.max_abs) {
      sh.max_abs = std::abs(v);
      sh.radius = radii[s];
    }
  }
  rep.second_moment = mass > 0 ? moment / mass : 0;
  rep.tail_window = {m_min / 8.0, m_min / 2.0};
  std::vector<Real> r, logr, logv;
  for (const auto& [index, sh] : shells) {
    rep.shells.push_back(sh);
    if (sh.radius < rep.tail_window.first || sh.radius > rep.tail_window.second) continue;
    if (sh.max_abs < 1e-280 || sh.radius <= 0) continue;
    r.push_back(sh.radius);
    logr.push_back(std::log(sh.radius));
    logv.push_back(std::log(sh.max_abs));
  }
  rep.fit_points = static_cast<int>(r.size());
  const detail::Fit e = detail::linear_fit(r, logv);
  const detail::Fit p = detail::linear_fit(logr, logv);
  rep.exp_rate = std::max(0.0, -e.slope);
  rep.exp_r2 = e.r2;
  rep.power_exponent = p.slope;
  rep.power_r2 = p.r2;
  return rep;
}

/// (I psi)(R, alpha) = sum_beta S_ab conj psi(-R - x_alpha - x_beta, beta).
inline WannierFunction apply_real_structure(const WannierFunction& w, const RealStructure& s) {
  const int n = w.fiber_dim();
  if (s.dim() != n) raise(ErrorKind::ShapeMismatch, "real structure has wrong dimension");
  const KGrid cells = w.cells();
  std::vector<std::array<int, 3>> shift(static_cast<std::size_t>(n) * n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      if (std::abs(s.matrix()(a, b)) == 0) continue;
      for (int j = 0; j < w.dim(); ++j) {
        const Real l = w.positions(a, j) + w.positions(b, j);
        if (std::abs(l - std::round(l)) > 1e-12)
          raise(ErrorKind::SymmetryViolation, "I couples orbitals whose positions do not sum to a lattice vector");
        shift[a * n + b][j] = static_cast<int>(std::lround(l));
      }
    }
  WannierFunction out = w;
  out.values.setZero();
  for (std::size_t i = 0; i < cells.node_count(); ++i) {
    const auto m = cells.coords(i);
    for (int a = 0; a < n; ++a) {
      Complex acc = 0;
      for (int b = 0; b < n; ++b) {
        const Complex sab = s.matrix()(a, b);
        if (std::abs(sab) == 0) continue;
        std::array<int, 3> src{0, 0, 0};
        for (int j = 0; j < w.dim(); ++j) src[j] = -m[j] - shift[a * n + b][j];
        acc += sab * std::conj(w.values(cells.index(src), b));
      }
      out.values(i, a) = acc;
    }
  }
  return out;
}

struct CompatibilityResult {
  bool compatible = false;
  std::vector<Real> residuals;
  std::vector<Real> center_errors;
  std::vector<RVector> centers;
};

/// Checks I psi_a = psi_a(. + c_a) on the supercell and that the centre of psi_a is c_a / 2 mod Gamma.
/// The translate psi_a(. + c_a) is the one produced by I phi_a = exp(i <c_a, k>) phi_a; it agrees with
/// psi_a(. - c_a) up to a translate by 2 c_a, which leaves c_a mod 2 Gamma unchanged.
inline CompatibilityResult check_compatibility(const std::vector<WannierFunction>& ws, const DecompositionPlan& plan,
                                               const RealStructure& s, Real residual_tol = 1e-6,
                                               Real center_tol = 1e-4) {
  CompatibilityResult res;
  if (ws.size() != plan.centers.size()) {
    res.compatible = false;
    return res;
  }
  bool ok = true;
  for (std::size_t a = 0; a < ws.size(); ++a) {
    const WannierFunction& w = ws[a];
    const IVector& c = plan.centers[a];
    const WannierFunction iw = apply_real_structure(w, s);
    const WannierFunction target = translate(w, -c);
    const Real r = (iw.values - target.values).cwiseAbs().maxCoeff();
    const RVector center = wannier_center(w);
    Real err = 0;
    for (int j = 0; j < w.dim(); ++j) {
      const Real want = 0.5 * c(j);
      err = std::max(err, std::abs(principal_angle(kTwoPi * (center(j) - want))) / kTwoPi);
    }
    res.residuals.push_back(r);
    res.center_errors.push_back(err);
    res.centers.push_back(center);
    ok = ok && r < residual_tol && err < center_tol;
  }
  res.compatible = ok;
  return res;
}

/// max over a, b, gamma of |<psi_a, psi_b(. - gamma)> - delta|, evaluated through the cell DFT.
inline Real translate_orthonormality(const std::vector<WannierFunction>& ws) {
  if (ws.empty()) return 0;
  for (const auto& w : ws) detail::require_same_shape(ws.front(), w);
  const int n = ws.front().fiber_dim();
  const std::vector<int>& sizes = ws.front().sizes;
  const std::size_t count = ws.front().values.rows();
  std::vector<std::vector<CVector>> hat(ws.size(), std::vector<CVector>(n));
  for (std::size_t a = 0; a < ws.size(); ++a)
    for (int o = 0; o < n; ++o) {
      hat[a][o] = ws[a].values.col(o);
      detail::fft_cells(hat[a][o], sizes, false);
    }
  Real worst = 0;
  for (std::size_t a = 0; a < ws.size(); ++a)
    for (std::size_t b = 0; b < ws.size(); ++b) {
      CVector corr = CVector::Zero(static_cast<Eigen::Index>(count));
      for (int o = 0; o < n; ++o) corr += hat[a][o].conjugate().cwiseProduct(hat[b][o]);
      detail::fft_cells(corr, sizes, true);
      for (std::size_t g = 0; g < count; ++g) {
        const Complex want = (a == b && g == 0) ? 1.0 : 0.0;
        worst = std::max(worst, std::abs(corr(g) - want));
      }
    }
  return worst;
}

/// Centre of section `a` from Wilson loops: component j is the Berry phase along v_j / 2 pi,
/// averaged over the transverse grid lines.
inline RVector berry_center(const FrameField& f, int a, const InvariantOptions& opt = {}) {
  if (a < 0 || a >= f.rank()) raise(ErrorKind::InvalidArgument, "section index out of range");
  std::vector<CMatrix> frames(f.grid.node_count());
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = f.sections[i].col(a);
  const ProjectorGrid line(f.grid, f.fiber_dim(), 1, std::move(frames), f.positions);
  RVector c(f.dim());
  for (int j = 0; j < f.dim(); ++j) {
    std::vector<Real> phases;
    Complex mean = 0;
    for (std::size_t base : detail::base_nodes(f.grid, j)) {
      const Real g = berry_phase(line, j, f.grid.coords(base), opt);
      phases.push_back(g);
      mean += std::polar(1.0, g);
    }
    const Real ref = std::arg(mean);
    Real avg = 0;
    for (Real g : phases) avg += ref + principal_angle(g - ref);
    avg /= static_cast<Real>(phases.size());
    c(j) = detail::fractional_part(avg / kTwoPi);
  }
  return c;
}

}  // namespace fragtop
