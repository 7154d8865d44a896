#pragma once

#include "fragtop/bundles.hpp"
#include "fragtop/cohomology.hpp"

#include <map>

namespace fragtop::tbg {

/// Geometry of the chiral model: Lambda = Z + omega Z, K = 4 pi / 3, <a, b> = Re(conj(a) b).
struct Geometry {
  Complex omega = std::polar(1.0, kTwoPi / 3.0);
  Real big_k = 4.0 * kPi / 3.0;
  Complex e1 = 1.0;
  Complex e2 = std::polar(1.0, kTwoPi / 3.0);
  Complex b1;
  Complex b2;

  Geometry() {
    const Lattice l = lattice();
    b1 = Complex(l.v(0)(0), l.v(0)(1));
    b2 = Complex(l.v(1)(0), l.v(1)(1));
  }

  Lattice lattice() const {
    RMatrix basis(2, 2);
    basis << e1.real(), e2.real(), e1.imag(), e2.imag();
    return Lattice(basis);
  }

  static Real pair(Complex a, Complex b) { return (std::conj(a) * b).real(); }

  /// Integer coordinates of a reciprocal vector in the (b1, b2) basis.
  std::array<int, 2> dual_coords(Complex p) const {
    const Real det = b1.real() * b2.imag() - b1.imag() * b2.real();
    const Real x = (p.real() * b2.imag() - p.imag() * b2.real()) / det;
    const Real y = (b1.real() * p.imag() - b1.imag() * p.real()) / det;
    return {static_cast<int>(std::lround(x)), static_cast<int>(std::lround(y))};
  }
};

/// First-shell potential U(z) = c sum_m omega^m exp(i <z, omega^m K>), c = -4 pi i / 3.
struct Potential {
  std::string id = "first-shell";
  Complex coefficient{0.0, -4.0 * kPi / 3.0};

  Complex operator()(Complex z, const Geometry& g = {}) const {
    Complex u = 0;
    for (int m = 0; m < 3; ++m)
      u += std::pow(g.omega, m) * std::exp(kI * Geometry::pair(z, std::pow(g.omega, m) * g.big_k));
    return coefficient * u;
  }

  /// Largest violation of U(z + gamma) = e^{i<gamma,K>} U(z), U(omega z) = omega U(z) and
  /// conj(U(conj z)) = -U(-z) over a fixed set of sample points and the lattice generators.
  Real symmetry_residual(const Geometry& g = {}) const {
    Real worst = 0;
    for (int i = 0; i < 7; ++i)
      for (int j = 0; j < 7; ++j) {
        const Complex z(-0.9 + 0.31 * i, -0.8 + 0.27 * j);
        const Complex u = (*this)(z, g);
        for (Complex gamma : {g.e1, g.e2, g.e1 - 2.0 * g.e2}) {
          const Complex lhs = (*this)(z + gamma, g);
          worst = std::max(worst, std::abs(lhs - std::exp(kI * Geometry::pair(gamma, g.big_k)) * u));
        }
        worst = std::max(worst, std::abs((*this)(g.omega * z, g) - g.omega * u));
        worst = std::max(worst, std::abs(std::conj((*this)(std::conj(z), g)) + (*this)(-z, g)));
      }
    return worst;
  }
};

/// Plane waves e^{i<z, q>}: first component q in K + Lambda*, second in Lambda*, |q| <= cutoff |b1|.
struct PlaneWaveBasis {
  int cutoff = 0;
  std::vector<std::array<int, 2>> top;
  std::vector<std::array<int, 2>> bottom;
  std::map<std::array<int, 2>, Eigen::Index> top_index;
  std::map<std::array<int, 2>, Eigen::Index> bottom_index;

  Eigen::Index size() const { return static_cast<Eigen::Index>(top.size() + bottom.size()); }
  Eigen::Index top_size() const { return static_cast<Eigen::Index>(top.size()); }

  int max_index() const {
    int m = 0;
    for (const auto* set : {&top, &bottom})
      for (const auto& n : *set) m = std::max({m, std::abs(n[0]), std::abs(n[1])});
    return m;
  }
};

/// Ordering: first component waves sorted by (n1, n2), then second component waves.
inline PlaneWaveBasis plane_wave_basis(int cutoff, const Geometry& g = {}) {
  PlaneWaveBasis b;
  b.cutoff = cutoff;
  const Real radius = cutoff * std::abs(g.b1);
  const int span = 2 * cutoff + 3;
  for (int i = -span; i <= span; ++i)
    for (int j = -span; j <= span; ++j) {
      const Complex p = static_cast<Real>(i) * g.b1 + static_cast<Real>(j) * g.b2;
      if (std::abs(p + g.big_k) <= radius) b.top.push_back({i, j});
      if (std::abs(p) <= radius) b.bottom.push_back({i, j});
    }
  for (std::size_t a = 0; a < b.top.size(); ++a) b.top_index[b.top[a]] = static_cast<Eigen::Index>(a);
  for (std::size_t a = 0; a < b.bottom.size(); ++a)
    b.bottom_index[b.bottom[a]] = static_cast<Eigen::Index>(b.top.size() + a);
  return b;
}

/// Truncation of D(alpha) + k. 2 D_zbar acts on e^{i<z,q>} as multiplication by q.
struct ChiralOperator {
  Complex alpha;
  Complex k;
  int cutoff;
  std::string potential_id;
  PlaneWaveBasis basis;
  CMatrix matrix;
};

inline ChiralOperator assemble_operator(Complex alpha, Complex k, int cutoff, const Potential& u = {},
                                        const Geometry& g = {}) {
  if (cutoff < 4) raise(ErrorKind::CutoffTooSmall, "cutoff must be >= 4, got ", cutoff);
  const Real sym = u.symmetry_residual(g);
  if (sym > 1e-12) raise(ErrorKind::SymmetryViolation, "potential violates its symmetries by ", sym);
  ChiralOperator op{alpha, k, cutoff, u.id, plane_wave_basis(cutoff, g), {}};
  const PlaneWaveBasis& b = op.basis;
  op.matrix = CMatrix::Zero(b.size(), b.size());
  for (const auto& [n, r] : b.top_index)
    op.matrix(r, r) = static_cast<Real>(n[0]) * g.b1 + static_cast<Real>(n[1]) * g.b2 + g.big_k + k;
  for (const auto& [n, r] : b.bottom_index)
    op.matrix(r, r) = static_cast<Real>(n[0]) * g.b1 + static_cast<Real>(n[1]) * g.b2 + k;
  for (int m = 0; m < 3; ++m) {
    const Complex w = std::pow(g.omega, m);
    const auto s = g.dual_coords(w * g.big_k - g.big_k);
    const Complex entry = alpha * u.coefficient * w;
    // U(z) maps the second component at p to the first at p + omega^m K.
    for (const auto& [n, col] : b.bottom_index) {
      const auto it = b.top_index.find({n[0] + s[0], n[1] + s[1]});
      if (it != b.top_index.end()) op.matrix(it->second, col) += entry;
    }
    // U(-z) maps the first component at K + p to the second at K + p - omega^m K.
    for (const auto& [n, col] : b.top_index) {
      const auto it = b.bottom_index.find({n[0] - s[0], n[1] - s[1]});
      if (it != b.bottom_index.end()) op.matrix(it->second, col) += entry;
    }
  }
  return op;
}

struct SmallSingular {
  RVector values;
  /// Right singular vectors, one column per value (ascending).
  CMatrix vectors;
  Real norm = 0;
};

/// `count` smallest singular values of a square matrix by subspace inverse iteration on A^* A,
/// finished with a Rayleigh-Ritz step on A X. Falls back to a full SVD if the LU breaks down.
inline SmallSingular smallest_singular(const CMatrix& a, int count, std::uint64_t seed = 7) {
  SmallSingular out;
  out.norm = a.cwiseAbs().rowwise().sum().maxCoeff();
  const Eigen::Index n = a.rows();
  count = std::min<int>(count, static_cast<int>(n));
  Eigen::PartialPivLU<CMatrix> lu(a);
  Rng rng(seed);
  CMatrix x(n, count);
  for (int c = 0; c < count; ++c) x.col(c) = rng.complex_normal(n);
  bool ok = true;
  for (int it = 0; it < 4 && ok; ++it) {
    CMatrix y = lu.solve(CMatrix(lu.adjoint().solve(x)));
    ok = y.allFinite();
    if (!ok) break;
    Eigen::HouseholderQR<CMatrix> qr{y};
    x = qr.householderQ() * CMatrix::Identity(n, count);
  }
  if (ok) {
    Eigen::JacobiSVD<CMatrix> svd(a * x, Eigen::ComputeThinV);
    const RVector s = svd.singularValues();
    out.values = s.reverse();
    out.vectors = (x * svd.matrixV()).rowwise().reverse();
    return out;
  }
  Eigen::BDCSVD<CMatrix> svd(a, Eigen::ComputeThinV);
  out.values = svd.singularValues().tail(count).reverse();
  out.vectors = svd.matrixV().rightCols(count).rowwise().reverse();
  return out;
}

struct MagicOptions {
  /// Generic test points, away from Lambda* and K + Lambda*.
  Complex k0{0.3, 0.17};
  Complex k1{-0.41, 0.23};
  Real scan_step = 0.02;
  /// magic_tol = relative_tol * ||D(alpha) + k||.
  Real relative_tol = 1e-8;
  Real alpha_tol = 1e-11;
  int max_kernel = 3;
};

struct MagicAngleRecord {
  Real alpha = 0;
  Real sigma_min_k0 = 0;
  Real sigma_min_k1 = 0;
  Real magic_tol = 0;
  int kernel_dim = 0;
  int cutoff = 0;
};

inline Real sigma_min(Real alpha, Complex k, int cutoff) {
  return smallest_singular(assemble_operator(alpha, k, cutoff).matrix, 1).values(0);
}

/// Golden-section minimisation of sigma_min(alpha; k0) on [lo, hi].
inline Real refine_magic_angle(Real lo, Real hi, int cutoff, const MagicOptions& opt = {}) {
  const Real phi = 0.5 * (std::sqrt(5.0) - 1.0);
  Real a = lo, b = hi;
  Real c = b - phi * (b - a), d = a + phi * (b - a);
  Real fc = sigma_min(c, opt.k0, cutoff), fd = sigma_min(d, opt.k0, cutoff);
  while (b - a > opt.alpha_tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = sigma_min(c, opt.k0, cutoff);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = sigma_min(d, opt.k0, cutoff);
    }
  }
  return 0.5 * (a + b);
}

inline MagicAngleRecord classify_magic_angle(Real alpha, int cutoff, const MagicOptions& opt = {}) {
  MagicAngleRecord rec;
  rec.alpha = alpha;
  rec.cutoff = cutoff;
  const auto s0 = smallest_singular(assemble_operator(alpha, opt.k0, cutoff).matrix, opt.max_kernel);
  const auto s1 = smallest_singular(assemble_operator(alpha, opt.k1, cutoff).matrix, opt.max_kernel);
  rec.magic_tol = opt.relative_tol * s0.norm;
  rec.sigma_min_k0 = s0.values(0);
  rec.sigma_min_k1 = s1.values(0);
  for (Eigen::Index i = 0; i < s0.values.size(); ++i)
    if (s0.values(i) < rec.magic_tol) ++rec.kernel_dim;
  return rec;
}

/// Real magic angles in [alpha_min, alpha_max]: scan sigma_min at k0, refine every local minimum,
/// keep those where sigma_min is below magic_tol at both k0 and k1.
inline std::vector<MagicAngleRecord> find_magic_angles(Real alpha_min, Real alpha_max, int cutoff,
                                                       const MagicOptions& opt = {}) {
  if (alpha_min < 0 || alpha_max > 2 || alpha_min >= alpha_max)
    raise(ErrorKind::InvalidArgument, "alpha range must lie within [0, 2]");
  if (cutoff < 4) raise(ErrorKind::CutoffTooSmall, "cutoff must be >= 4, got ", cutoff);
  const int steps = std::max(2, static_cast<int>(std::ceil((alpha_max - alpha_min) / opt.scan_step)));
  std::vector<Real> alphas(steps + 1), sig(steps + 1);
  for (int i = 0; i <= steps; ++i) alphas[i] = alpha_min + (alpha_max - alpha_min) * i / steps;
  parallel_for(alphas.size(), [&](std::size_t i) { sig[i] = sigma_min(alphas[i], opt.k0, cutoff); });
  std::vector<MagicAngleRecord> out;
  for (int i = 0; i <= steps; ++i) {
    const bool left = i == 0 || sig[i] < sig[i - 1];
    const bool right = i == steps || sig[i] <= sig[i + 1];
    if (!left || !right) continue;
    const Real lo = alphas[std::max(0, i - 1)];
    const Real hi = alphas[std::min(steps, i + 1)];
    const MagicAngleRecord rec = classify_magic_angle(refine_magic_angle(lo, hi, cutoff, opt), cutoff, opt);
    if (rec.sigma_min_k0 < rec.magic_tol && rec.sigma_min_k1 < rec.magic_tol) out.push_back(rec);
  }
  if (out.empty()) raise(ErrorKind::NoMagicInRange, "no magic angle in [", alpha_min, ", ", alpha_max, "]");
  return out;
}

/// Flat-band bundles on a k-grid over C / Lambda*. Kernel vectors are sampled on an m x m grid of
/// the unit cell z_s = (s1 e1 + s2 e2) / m, which carries tau(p) to the diagonal phases
/// e^{-i<z_s, p>}: the orbital of sample s sits at s / m in lattice coordinates.
struct FlatBand {
  ProjectorGrid complex_bundle;
  RealProjectorGrid real_bundle;
  int kernel_dim = 0;
  int samples_per_side = 0;
  Real max_kernel_sigma = 0;
  Real min_gap_sigma = 0;
};

namespace detail {

inline KGrid flatband_grid(int n) { return KGrid(Geometry().lattice(), {n, n}); }

/// Sample values u(z_s) / m for both components; columns follow the basis order.
inline CMatrix sampling_matrix(const PlaneWaveBasis& b, int m, const Geometry& g) {
  const Eigen::Index cells = static_cast<Eigen::Index>(m) * m;
  CMatrix e = CMatrix::Zero(2 * cells, b.size());
  for (Eigen::Index s = 0; s < cells; ++s) {
    const Real s1 = static_cast<Real>(s / m) / m;
    const Real s2 = static_cast<Real>(s % m) / m;
    const Complex z = s1 * g.e1 + s2 * g.e2;
    for (const auto& [n, col] : b.top_index) {
      const Complex q = static_cast<Real>(n[0]) * g.b1 + static_cast<Real>(n[1]) * g.b2 + g.big_k;
      e(s, col) = std::exp(kI * Geometry::pair(z, q)) / static_cast<Real>(m);
    }
    for (const auto& [n, col] : b.bottom_index) {
      const Complex q = static_cast<Real>(n[0]) * g.b1 + static_cast<Real>(n[1]) * g.b2;
      e(cells + s, col) = std::exp(kI * Geometry::pair(z, q)) / static_cast<Real>(m);
    }
  }
  return e;
}

/// Q u(z) = conj(u(-z)) on samples, as (perm, phases) with (Q u)_s = phases_s conj(u_{perm_s}).
/// -z_s = z_{s'} - gamma; the first component picks up u1(z - gamma) = omega^{gamma1 + gamma2} u1(z).
inline std::pair<std::vector<Eigen::Index>, CVector> sample_q(int m, const Geometry& g) {
  const Eigen::Index cells = static_cast<Eigen::Index>(m) * m;
  std::vector<Eigen::Index> perm(2 * cells);
  CVector phases(2 * cells);
  for (Eigen::Index s = 0; s < cells; ++s) {
    const int a = static_cast<int>(s / m), b = static_cast<int>(s % m);
    const int a2 = (m - a) % m, b2 = (m - b) % m;
    const int gamma = (a + a2) / m + (b + b2) / m;
    const Eigen::Index t = static_cast<Eigen::Index>(a2) * m + b2;
    perm[s] = t;
    phases(s) = std::conj(std::pow(g.omega, gamma));
    perm[cells + s] = cells + t;
    phases(cells + s) = 1.0;
  }
  return {perm, phases};
}

}  // namespace detail

inline FlatBand flatband_bundle(Real alpha, int grid_size, int cutoff, const MagicOptions& opt = {}) {
  const Geometry g;
  const KGrid grid = detail::flatband_grid(grid_size);
  const PlaneWaveBasis basis = plane_wave_basis(cutoff, g);
  const int m = 2 * basis.max_index() + 3;
  const Eigen::Index half = 2 * static_cast<Eigen::Index>(m) * m;
  const CMatrix sampling = detail::sampling_matrix(basis, m, g);
  const std::size_t count = grid.node_count();
  std::vector<SmallSingular> kernels(count);
  parallel_for(count, [&](std::size_t i) {
    const RVector kk = grid.k(i);
    kernels[i] = smallest_singular(assemble_operator(alpha, Complex(kk(0), kk(1)), cutoff, {}, g).matrix,
                                   opt.max_kernel);
  });
  int dim = -1;
  Real max_kernel = 0, min_gap = std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    const Real tol = opt.relative_tol * kernels[i].norm;
    int here = 0;
    for (Eigen::Index j = 0; j < kernels[i].values.size(); ++j)
      if (kernels[i].values(j) < tol) ++here;
    if (dim < 0) dim = here;
    if (here != dim || here == 0)
      raise(ErrorKind::KernelDimDrift, "kernel dimension ", here, " at node ", i, " (expected ", dim, ")");
    max_kernel = std::max(max_kernel, kernels[i].values(here - 1));
    if (here < kernels[i].values.size()) min_gap = std::min(min_gap, kernels[i].values(here));
  }
  RMatrix positions(half, 2);
  for (Eigen::Index s = 0; s < half; ++s) {
    const Eigen::Index cell = s % (half / 2);
    positions(s, 0) = static_cast<Real>(cell / m) / m;
    positions(s, 1) = static_cast<Real>(cell % m) / m;
  }
  const auto [qperm, qphases] = detail::sample_q(m, g);
  const RealStructure q = RealStructure::monomial(qperm, qphases);
  std::vector<CMatrix> cframes(count), rframes(count);
  for (std::size_t i = 0; i < count; ++i) {
    CMatrix u = sampling * kernels[i].vectors.leftCols(dim);
    Eigen::HouseholderQR<CMatrix> qr{u};
    u = qr.householderQ() * CMatrix::Identity(u.rows(), dim);
    cframes[i] = u;
    const CMatrix qu = q.apply(u);
    CMatrix r(2 * half, 2 * dim);
    for (int a = 0; a < dim; ++a) {
      r.col(2 * a) << u.col(a), qu.col(a);
      r.col(2 * a + 1) << kI * u.col(a), -kI * qu.col(a);
    }
    rframes[i] = r / std::sqrt(2.0);
  }
  ProjectorGrid ec(grid, static_cast<int>(half), dim, std::move(cframes), positions);
  RMatrix full_positions(2 * half, 2);
  full_positions << positions, positions;
  ProjectorGrid f(grid, static_cast<int>(2 * half), 2 * dim, std::move(rframes), full_positions);
  // I (a, b) = (Q b, Q a).
  std::vector<Eigen::Index> perm(2 * half);
  CVector phases(2 * half);
  for (Eigen::Index s = 0; s < half; ++s) {
    perm[s] = half + qperm[s];
    perm[half + s] = qperm[s];
    phases(s) = phases(half + s) = qphases(s);
  }
  f.set_real_structure(RealStructure::monomial(std::move(perm), std::move(phases)));
  // J (a, b) = (i a, -i b), stored as a diagonal.
  CMatrix j(2 * half, 1);
  j.topRows(half).setConstant(kI);
  j.bottomRows(half).setConstant(-kI);
  f.set_complex_structure(j);
  FlatBand out{std::move(ec), RealProjectorGrid(std::move(f), IVector::Zero(2), 1), dim, m, max_kernel, min_gap};
  return out;
}

enum class BandCase { TwoBands, FourBands };

/// Wannier centers for the flat bands: F0 (+) L with w1(L) = l_class for two bands, F0 alone for four.
inline DecompositionPlan tbg_wannier_centers(BandCase c, std::optional<IVector> l_class = std::nullopt) {
  const Z2Class w2 = Z2Class::e(2, 0) * Z2Class::e(2, 1);
  if (c == BandCase::TwoBands) {
    if (!l_class) raise(ErrorKind::MissingLClass, "two-band case needs the class of the added line");
    if (l_class->size() != 2) raise(ErrorKind::ShapeMismatch, "line class must have two entries");
    return plan_decomposition(3, Z2Class::from_bits(*l_class), w2, std::nullopt, 2);
  }
  return plan_decomposition(4, Z2Class::zero(2), w2, std::nullopt, 2);
}

}  // namespace fragtop::tbg
