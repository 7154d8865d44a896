#pragma once

#include "fragtop/pipeline.hpp"

#include <gtest/gtest.h>

namespace fragtop::testing {

/// Degree of a map T^2 -> S^2 by summing signed solid angles of a triangulated image
/// (Van Oosterom-Strackee), evaluated directly on the continuum field.
template <typename Field>
int solid_angle_degree(Field field, int n) {
  auto at = [&](int a, int b) {
    RVector k(2);
    k << kTwoPi * a / n, kTwoPi * b / n;
    return Eigen::Vector3d(field(k));
  };
  auto omega = [](const Eigen::Vector3d& x, const Eigen::Vector3d& y, const Eigen::Vector3d& z) {
    return 2.0 * std::atan2(x.dot(y.cross(z)), 1.0 + x.dot(y) + y.dot(z) + z.dot(x));
  };
  double total = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const auto p00 = at(a, b), p10 = at(a + 1, b), p11 = at(a + 1, b + 1), p01 = at(a, b + 1);
      total += omega(p00, p10, p11) + omega(p00, p11, p01);
    }
  return static_cast<int>(std::lround(total / (4.0 * kPi)));
}

inline Eigen::Vector3d qwz_unit(Real m, const RVector& k) {
  return Eigen::Vector3d(std::sin(k(0)), std::sin(k(1)), m - std::cos(k(0)) - std::cos(k(1))).normalized();
}

/// Independent random U(r) rotation of every frame (O(r) for real grids keeps I F = F).
inline ProjectorGrid random_gauge(ProjectorGrid e, std::uint64_t seed, bool real = false) {
  Rng rng(seed);
  for (std::size_t i = 0; i < e.grid().node_count(); ++i) {
    const CMatrix u = real ? CMatrix(random_orthogonal(e.rank(), rng).cast<Complex>()) : random_unitary(e.rank(), rng);
    e.frame(i) = e.frame(i) * u;
  }
  return e;
}

inline RealProjectorGrid random_gauge(const RealProjectorGrid& e, std::uint64_t seed) {
  return RealProjectorGrid(random_gauge(static_cast<const ProjectorGrid&>(e), seed, true), e.twist(), 0);
}

inline IVector vec(std::initializer_list<int> v) {
  IVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

inline Z2Class cls(const std::string& text, int dim) { return Z2Class::parse(text, dim); }

inline std::vector<std::string> center_strings(const DecompositionPlan& p) {
  std::vector<std::string> out;
  for (const auto& c : p.centers) out.push_back(center_str(c));
  return out;
}

/// Maximum boundary mismatch min_U || F(k + v_j) - tau(v_j) F(k) U || over wrapped links, with U
/// the polar factor of the overlap (frames agree up to gauge).
inline Real boundary_equivariance(const ProjectorGrid& e, const HermitianFamily& family) {
  const KGrid& g = e.grid();
  Real worst = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    for (int dir = 0; dir < g.dim(); ++dir) {
      auto m = g.coords(i);
      if (m[dir] != g.size(dir) - 1) continue;
      // Sample F at k + dk directly (outside the cell) and compare with tau F at the wrapped node.
      const RVector k = g.k(i) + g.lattice().v(dir) / g.size(dir);
      Eigen::SelfAdjointEigenSolver<CMatrix> es(family.eval(k));
      const CMatrix outside = es.eigenvectors().leftCols(e.rank());
      const CMatrix inside = e.forward_frame(i, dir);
      const CMatrix u = polar_unitary(CMatrix(inside.adjoint() * outside));
      worst = std::max(worst, (outside - inside * u).cwiseAbs().maxCoeff());
    }
  return worst;
}

}  // namespace fragtop::testing
