#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>
#include <cstdlib>
#include <functional>

namespace fragtop {

using Real = double;
using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using IVector = Eigen::VectorXi;

inline constexpr Real kPi = std::numbers::pi;
inline constexpr Real kTwoPi = 2.0 * std::numbers::pi;
inline constexpr Complex kI{0.0, 1.0};

enum class ErrorKind {
  GapClosure,
  RankDrift,
  GridMismatch,
  SymmetryViolation,
  PlaquetteDegenerate,
  NotOrientable,
  RankError,
  SectionVanishes,
  DegenerateTriangle,
  MissingEuler,
  ChernObstruction,
  PlanObstructed,
  ShapeMismatch,
  WindowTooSmall,
  CutoffTooSmall,
  NoMagicInRange,
  KernelDimDrift,
  MissingLClass,
  InvalidArgument,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::GapClosure: return "GapClosure";
    case ErrorKind::RankDrift: return "RankDrift";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::SymmetryViolation: return "SymmetryViolation";
    case ErrorKind::PlaquetteDegenerate: return "PlaquetteDegenerate";
    case ErrorKind::NotOrientable: return "NotOrientable";
    case ErrorKind::RankError: return "RankError";
    case ErrorKind::SectionVanishes: return "SectionVanishes";
    case ErrorKind::DegenerateTriangle: return "DegenerateTriangle";
    case ErrorKind::MissingEuler: return "MissingEuler";
    case ErrorKind::ChernObstruction: return "ChernObstruction";
    case ErrorKind::PlanObstructed: return "PlanObstructed";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::WindowTooSmall: return "WindowTooSmall";
    case ErrorKind::CutoffTooSmall: return "CutoffTooSmall";
    case ErrorKind::NoMagicInRange: return "NoMagicInRange";
    case ErrorKind::KernelDimDrift: return "KernelDimDrift";
    case ErrorKind::MissingLClass: return "MissingLClass";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` carries the taxonomy.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

template <typename... Args>
[[noreturn]] inline void raise(ErrorKind kind, const Args&... args) {
  std::ostringstream os;
  (os << ... << args);
  throw Error(kind, os.str());
}

/// Principal branch of the argument mapped to [0, 2pi).
inline Real wrap_phase(Real phase) {
  Real p = std::fmod(phase, kTwoPi);
  if (p < 0) p += kTwoPi;
  if (p >= kTwoPi) p -= kTwoPi;
  if (p == 0) p = 0;  // drop the sign of -0
  return p;
}

/// Maps to (-pi, pi].
inline Real principal_angle(Real phase) {
  Real p = wrap_phase(phase + kPi) - kPi;
  if (p <= -kPi) p += kTwoPi;
  return p;
}

/// Unitary (or orthogonal) factor of the polar decomposition A = U |A|.
template <typename Derived>
auto polar_unitary(const Eigen::MatrixBase<Derived>& a) {
  using Matrix = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  return Matrix(svd.matrixU() * svd.matrixV().adjoint());
}

inline Real smallest_singular_value(const CMatrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<CMatrix> svd(a);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Deterministic generator; every stochastic step derives its stream from a master seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  Real normal() { return normal_(engine_); }
  Real uniform() { return uniform_(engine_); }

  CVector complex_normal(Eigen::Index n) {
    CVector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(normal(), normal());
    return v;
  }

  RMatrix real_normal(Eigen::Index rows, Eigen::Index cols) {
    RMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  std::uint64_t next_seed() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<Real> normal_{0.0, 1.0};
  std::uniform_real_distribution<Real> uniform_{0.0, 1.0};
};

/// Random unitary via QR of a complex Gaussian matrix.
inline CMatrix random_unitary(Eigen::Index n, Rng& rng) {
  CMatrix g(n, n);
  for (Eigen::Index j = 0; j < n; ++j) g.col(j) = rng.complex_normal(n);
  return polar_unitary(g);
}

inline RMatrix random_orthogonal(Eigen::Index n, Rng& rng) {
  return polar_unitary(rng.real_normal(n, n));
}

/// Worker count from FRAGTOP_THREADS (default 1); set_thread_count overrides.
inline int& thread_count_storage() {
  static int count = [] {
    if (const char* env = std::getenv("FRAGTOP_THREADS")) {
      const int n = std::atoi(env);
      if (n > 0) return n;
    }
    return 1;
  }();
  return count;
}

inline int thread_count() { return thread_count_storage(); }
inline void set_thread_count(int n) { thread_count_storage() = n > 0 ? n : 1; }

/// Runs fn(i) for i in [0, n). Each index writes only its own slot, so results
/// do not depend on the worker count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(thread_count());
  if (workers <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace fragtop
