#pragma once

#include "fragtop/gauge.hpp"
#include "fragtop/tbg.hpp"
#include "fragtop/wannier.hpp"

#include "json.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>

namespace fragtop {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// FTGRID1
//
// "FTGRID1", u32 d, u32 N_1..N_d, u32 n, u32 r, u32 flags, then per node (row-major over the
// grid, m_1 slowest) the n x r frame row-major as interleaved f64 re/im. Optional blocks follow
// in flag order.

namespace ftgrid {

inline constexpr char kMagic[7] = {'F', 'T', 'G', 'R', 'I', 'D', '1'};

enum Flags : std::uint32_t {
  kPositions = 1,        // n x d f64
  kLattice = 2,          // d x d f64, basis columns stored row-major
  kMonomialReal = 4,     // n u32 permutation, n complex phases
  kDenseReal = 8,        // n x n complex
  kTwist = 16,           // d i32 twist, i32 orientation
  kComplexStructure = 32 // u32 cols, n x cols complex
};

}  // namespace ftgrid

/// Decoded FTGRID1 payload; converted to the typed grids below.
struct GridFile {
  KGrid grid = KGrid::square(2, 1);
  int fiber_dim = 0;
  int rank = 0;
  std::vector<CMatrix> frames;
  std::optional<RMatrix> positions;
  std::optional<RealStructure> real_structure;
  std::optional<IVector> twist;
  int orientation = 0;
  std::optional<CMatrix> complex_structure;
};

namespace detail {

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &value, sizeof(T));
    std::reverse(b, b + sizeof(T));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
  } else {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
}

template <typename T>
T get(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) raise(ErrorKind::Io, "FTGRID1 stream truncated");
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) std::reverse(b, b + sizeof(T));
  T value;
  std::memcpy(&value, b, sizeof(T));
  return value;
}

inline void put_complex(std::ostream& os, Complex z) {
  put<double>(os, z.real());
  put<double>(os, z.imag());
}

inline Complex get_complex(std::istream& is) {
  const double re = get<double>(is);
  const double im = get<double>(is);
  return {re, im};
}

inline void put_cmatrix(std::ostream& os, const CMatrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) put_complex(os, m(i, j));
}

inline CMatrix get_cmatrix(std::istream& is, Eigen::Index rows, Eigen::Index cols) {
  CMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = get_complex(is);
  return m;
}

inline std::uint32_t checked_u32(std::istream& is, std::uint32_t max, const char* what) {
  const auto v = get<std::uint32_t>(is);
  if (v > max) raise(ErrorKind::Io, "FTGRID1 field ", what, " out of range (", v, ")");
  return v;
}

}  // namespace detail

inline void write_ftgrid(std::ostream& os, const GridFile& f) {
  const KGrid& g = f.grid;
  if (f.frames.size() != g.node_count()) raise(ErrorKind::ShapeMismatch, "frame count != node count");
  std::uint32_t flags = ftgrid::kLattice;
  if (f.positions) flags |= ftgrid::kPositions;
  if (f.real_structure) flags |= f.real_structure->is_monomial() ? ftgrid::kMonomialReal : ftgrid::kDenseReal;
  if (f.twist) flags |= ftgrid::kTwist;
  if (f.complex_structure) flags |= ftgrid::kComplexStructure;

  os.write(ftgrid::kMagic, sizeof(ftgrid::kMagic));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(g.dim()));
  for (int n : g.sizes()) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(n));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.fiber_dim));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.rank));
  detail::put<std::uint32_t>(os, flags);
  for (const auto& frame : f.frames) {
    if (frame.rows() != f.fiber_dim || frame.cols() != f.rank) raise(ErrorKind::ShapeMismatch, "frame has wrong shape");
    detail::put_cmatrix(os, frame);
  }
  if (flags & ftgrid::kPositions)
    for (Eigen::Index i = 0; i < f.positions->rows(); ++i)
      for (Eigen::Index j = 0; j < f.positions->cols(); ++j) detail::put<double>(os, (*f.positions)(i, j));
  for (int i = 0; i < g.dim(); ++i)
    for (int j = 0; j < g.dim(); ++j) detail::put<double>(os, g.lattice().basis()(i, j));
  if (flags & ftgrid::kMonomialReal) {
    for (auto p : f.real_structure->permutation()) detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(p));
    for (Eigen::Index i = 0; i < f.real_structure->phases().size(); ++i)
      detail::put_complex(os, f.real_structure->phases()(i));
  }
  if (flags & ftgrid::kDenseReal) detail::put_cmatrix(os, f.real_structure->matrix());
  if (flags & ftgrid::kTwist) {
    for (Eigen::Index i = 0; i < f.twist->size(); ++i) detail::put<std::int32_t>(os, (*f.twist)(i));
    detail::put<std::int32_t>(os, f.orientation);
  }
  if (flags & ftgrid::kComplexStructure) {
    detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.complex_structure->cols()));
    detail::put_cmatrix(os, *f.complex_structure);
  }
  if (!os) raise(ErrorKind::Io, "FTGRID1 write failed");
}

inline GridFile read_ftgrid(std::istream& is) {
  char magic[sizeof(ftgrid::kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, ftgrid::kMagic, sizeof(magic)) != 0)
    raise(ErrorKind::Io, "not an FTGRID1 stream");
  const int d = static_cast<int>(detail::checked_u32(is, 3, "d"));
  if (d < 2) raise(ErrorKind::Io, "FTGRID1 dimension must be 2 or 3");
  std::vector<int> sizes(d);
  for (int& n : sizes) n = static_cast<int>(detail::checked_u32(is, 1u << 16, "N"));
  const int n = static_cast<int>(detail::checked_u32(is, 1u << 20, "n"));
  const int r = static_cast<int>(detail::checked_u32(is, static_cast<std::uint32_t>(n), "r"));
  const std::uint32_t flags = detail::get<std::uint32_t>(is);
  if (flags >= 64) raise(ErrorKind::Io, "unknown FTGRID1 flags ", flags);

  std::size_t count = 1;
  for (int s : sizes) count *= static_cast<std::size_t>(s);
  std::vector<CMatrix> frames(count);
  for (auto& frame : frames) frame = detail::get_cmatrix(is, n, r);

  std::optional<RMatrix> positions;
  if (flags & ftgrid::kPositions) {
    RMatrix p(n, d);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) p(i, j) = detail::get<double>(is);
    positions = std::move(p);
  }
  RMatrix basis = RMatrix::Identity(d, d);
  if (flags & ftgrid::kLattice)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) basis(i, j) = detail::get<double>(is);
  GridFile out{KGrid(Lattice(basis), sizes), n, r, std::move(frames), std::move(positions)};
  if (flags & ftgrid::kMonomialReal) {
    std::vector<Eigen::Index> perm(n);
    for (auto& p : perm) p = detail::checked_u32(is, static_cast<std::uint32_t>(n - 1), "permutation");
    CVector phases(n);
    for (int i = 0; i < n; ++i) phases(i) = detail::get_complex(is);
    out.real_structure = RealStructure::monomial(std::move(perm), std::move(phases));
  }
  if (flags & ftgrid::kDenseReal) {
    if (out.real_structure) raise(ErrorKind::Io, "FTGRID1 carries two real structures");
    out.real_structure = RealStructure(detail::get_cmatrix(is, n, n));
  }
  if (flags & ftgrid::kTwist) {
    IVector t(d);
    for (int i = 0; i < d; ++i) t(i) = detail::get<std::int32_t>(is);
    out.twist = std::move(t);
    out.orientation = detail::get<std::int32_t>(is);
  }
  if (flags & ftgrid::kComplexStructure) {
    const auto cols = detail::get<std::uint32_t>(is);
    if (cols != 1 && cols != static_cast<std::uint32_t>(n)) raise(ErrorKind::Io, "bad complex structure width");
    out.complex_structure = detail::get_cmatrix(is, n, cols);
  }
  return out;
}

inline void write_ftgrid(const std::filesystem::path& path, const GridFile& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::Io, "cannot open ", path.string(), " for writing");
  write_ftgrid(os, f);
}

inline GridFile read_ftgrid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorKind::Io, "cannot open ", path.string());
  return read_ftgrid(is);
}

// Typed views.

inline GridFile to_grid_file(const ProjectorGrid& e) {
  GridFile f{e.grid(), e.fiber_dim(), e.rank(), e.frames(), e.positions()};
  f.real_structure = e.real_structure();
  f.complex_structure = e.complex_structure();
  return f;
}

inline GridFile to_grid_file(const RealProjectorGrid& e) {
  GridFile f = to_grid_file(static_cast<const ProjectorGrid&>(e));
  f.twist = e.twist();
  f.orientation = e.orientation();
  return f;
}

inline GridFile to_grid_file(const FrameField& ff) {
  GridFile f{ff.grid, ff.fiber_dim(), ff.rank(), ff.sections, ff.positions};
  f.real_structure = ff.real_structure;
  return f;
}

/// The cells of the supercell play the role of grid nodes; the frame is the n x 1 orbital column.
inline GridFile to_grid_file(const WannierFunction& w) {
  const KGrid cells = w.cells();
  std::vector<CMatrix> frames(cells.node_count());
  for (std::size_t i = 0; i < frames.size(); ++i) frames[i] = w.values.row(static_cast<Eigen::Index>(i)).transpose();
  GridFile f{cells, w.fiber_dim(), 1, std::move(frames), w.positions};
  f.twist = w.center_tag;
  return f;
}

inline RMatrix file_positions(const GridFile& f) {
  return f.positions ? *f.positions : zero_positions(f.fiber_dim, f.grid.dim());
}

inline ProjectorGrid to_projector_grid(const GridFile& f) {
  ProjectorGrid e(f.grid, f.fiber_dim, f.rank, f.frames, file_positions(f));
  e.set_real_structure(f.real_structure);
  e.set_complex_structure(f.complex_structure);
  return e;
}

inline RealProjectorGrid to_real_projector_grid(const GridFile& f) {
  if (!f.twist) raise(ErrorKind::Io, "FTGRID1 stream carries no twist block; not a real grid");
  return RealProjectorGrid(to_projector_grid(f), *f.twist, f.orientation);
}

inline FrameField to_frame_field(const GridFile& f, std::vector<IVector> labels = {}) {
  if (labels.empty()) labels.assign(f.rank, IVector::Zero(f.grid.dim()));
  if (static_cast<int>(labels.size()) != f.rank) raise(ErrorKind::ShapeMismatch, "one label per section required");
  return FrameField{f.grid, f.frames, file_positions(f), std::move(labels), f.real_structure};
}

inline WannierFunction to_wannier_function(const GridFile& f) {
  if (f.rank != 1) raise(ErrorKind::ShapeMismatch, "Wannier grids carry one column per cell");
  CMatrix values(static_cast<Eigen::Index>(f.frames.size()), f.fiber_dim);
  for (std::size_t i = 0; i < f.frames.size(); ++i) values.row(static_cast<Eigen::Index>(i)) = f.frames[i].col(0).transpose();
  return WannierFunction{f.grid.lattice(), f.grid.sizes(), file_positions(f), std::move(values),
                         f.twist ? *f.twist : IVector::Zero(f.grid.dim())};
}

// ---------------------------------------------------------------------------
// JSON

inline Json to_json(const IVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const RVector& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Json to_json(const std::vector<ChernRecord>& records) {
  Json out = Json::object();
  for (const auto& r : records) out[plane_label(r.plane)] = r.value;
  return out;
}

inline Json to_json(const SWClassData& d) {
  Json w2 = Json::object();
  for (const auto& [p, v] : d.w2) w2[plane_label(p)] = v;
  return {{"w1", d.w1}, {"w2", w2}, {"orientable", d.orientable}};
}

inline Json to_json(const EulerRecord& e) {
  return {{"plane", plane_label(e.plane)}, {"value", e.value}, {"convention", EulerRecord::convention}};
}

inline Json to_json(const DecompositionPlan& p) {
  Json centers = Json::array();
  for (const auto& c : p.centers) centers.push_back(center_str(c));
  Json out = {{"verdict", p.verdict_str()}, {"centers", centers}, {"extension", p.extension}};
  out["euler"] = p.euler ? Json(*p.euler) : Json(nullptr);
  if (!p.note.empty()) out["note"] = p.note;
  return out;
}

inline Json to_json(const TotalSW& t) {
  return {{"rank", t.rank}, {"w1", t.w1.str()}, {"w2", t.w2.str()}, {"total", t.total().str()}};
}

inline Json to_json(const ComplexNormalForm& c) {
  return {{"trivial_lines", c.trivial_lines}, {"c1", c.c1}, {"form", c.str()}};
}

inline Json to_json(const FrameQuality& q) {
  return {{"max_gradient", q.max_gradient}, {"mean_gradient", q.mean_gradient}, {"orthonormality", q.orthonormality},
          {"equivariance", q.equivariance}, {"seam_kink", q.seam_kink},         {"compatibility", q.compatibility}};
}

/// Summary without the shell table; the shells go to CSV.
inline Json to_json(const DecayReport& r) {
  return {{"exp_rate", r.exp_rate},
          {"exp_r2", r.exp_r2},
          {"power_exponent", r.power_exponent},
          {"power_r2", r.power_r2},
          {"second_moment", r.second_moment},
          {"tail_window", {r.tail_window.first, r.tail_window.second}},
          {"fit_points", r.fit_points},
          {"compact_support", r.fit_points == 0}};
}

inline Json to_json(const CompatibilityResult& c) {
  Json centers = Json::array();
  for (const auto& x : c.centers) centers.push_back(to_json(x));
  return {{"compatible", c.compatible}, {"residuals", c.residuals}, {"center_errors", c.center_errors},
          {"centers", centers}};
}

inline Json to_json(const tbg::MagicAngleRecord& m) {
  return {{"alpha", m.alpha},       {"sigma_min_k0", m.sigma_min_k0}, {"sigma_min_k1", m.sigma_min_k1},
          {"magic_tol", m.magic_tol}, {"kernel_dim", m.kernel_dim},     {"cutoff", m.cutoff},
          {"kind", m.kernel_dim == 1 ? "simple" : "multiple"}};
}

/// Sidecar for a FrameField written as FTGRID1.
inline Json frame_sidecar(const FrameField& f, const FrameQuality& q) {
  Json labels = Json::array();
  for (const auto& l : f.labels) labels.push_back(to_json(l));
  return {{"phase_labels", labels}, {"residuals", to_json(q)}, {"rank", f.rank()}, {"fiber_dim", f.fiber_dim()}};
}

inline std::vector<IVector> labels_from_sidecar(const Json& j) {
  std::vector<IVector> out;
  for (const auto& l : j.at("phase_labels")) {
    IVector v(static_cast<Eigen::Index>(l.size()));
    for (std::size_t i = 0; i < l.size(); ++i) v(static_cast<Eigen::Index>(i)) = l[i].get<int>();
    out.push_back(std::move(v));
  }
  return out;
}

/// Fixed formatting so identical inputs give identical bytes.
inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorKind::Io, "cannot open ", path.string(), " for writing");
  os << text;
  if (!os) raise(ErrorKind::Io, "write to ", path.string(), " failed");
}

// ---------------------------------------------------------------------------
// CSV

inline void write_decay_csv(std::ostream& os, const DecayReport& r) {
  os << "radius,max_abs,shell_mass\n" << std::setprecision(17);
  for (const auto& s : r.shells) os << s.radius << ',' << s.max_abs << ',' << s.mass << '\n';
}

/// Per-node diagnostics: fractional k, orthonormality, idempotency, [I, P], and the smallest
/// singular value of the forward link overlap in each direction.
inline void write_node_csv(std::ostream& os, const ProjectorGrid& e) {
  const KGrid& g = e.grid();
  os << "node";
  for (int j = 0; j < g.dim(); ++j) os << ",t" << j + 1;
  os << ",orthonormality,idempotency,commutator";
  for (int j = 0; j < g.dim(); ++j) os << ",link_sigma" << j + 1;
  os << '\n' << std::setprecision(17);
  const int r = e.rank();
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const CMatrix& f = e.frame(i);
    const CMatrix p = e.projector(i);
    os << i;
    const RVector t = g.frac(i);
    for (int j = 0; j < g.dim(); ++j) os << ',' << t(j);
    os << ',' << (f.adjoint() * f - CMatrix::Identity(r, r)).cwiseAbs().maxCoeff();
    os << ',' << (p * p - p).cwiseAbs().maxCoeff();
    os << ',' << (e.real_structure() ? e.real_structure()->commutator_norm(p) : 0.0);
    for (int j = 0; j < g.dim(); ++j) os << ',' << smallest_singular_value(e.link_overlap(i, j));
    os << '\n';
  }
}

}  // namespace fragtop
