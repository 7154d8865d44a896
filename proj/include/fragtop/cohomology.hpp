#pragma once

#include "fragtop/core.hpp"

#include <algorithm>
#include <bitset>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fragtop {

/// Element of H^*(T^d; Z/2), d <= 3. Monomials are subsets of {e1, e2, e3} encoded as bit masks;
/// bit m of `coeffs` is the coefficient of the monomial with mask m (mask 0 is the unit).
class Z2Class {
 public:
  Z2Class() = default;
  explicit Z2Class(int dim, std::uint8_t coeffs = 0) : dim_(dim), coeffs_(coeffs) {
    if (dim < 1 || dim > 3) raise(ErrorKind::InvalidArgument, "Z2Class dimension must be 1..3");
    const int monomials = 1 << dim;
    if (monomials < 8 && (coeffs >> monomials) != 0) raise(ErrorKind::InvalidArgument, "monomial outside the ring");
  }

  static Z2Class zero(int dim) { return Z2Class(dim); }
  static Z2Class one(int dim) { return Z2Class(dim, 1); }
  static Z2Class monomial(int dim, std::uint8_t mask) { return Z2Class(dim, static_cast<std::uint8_t>(1u << mask)); }
  /// Generator e_i, 0-based.
  static Z2Class e(int dim, int i) { return monomial(dim, static_cast<std::uint8_t>(1u << i)); }

  /// Degree-1 class sum_i bits(i) e_i.
  static Z2Class from_bits(const IVector& bits) {
    Z2Class out(static_cast<int>(bits.size()));
    for (Eigen::Index i = 0; i < bits.size(); ++i)
      if (((bits(i) % 2) + 2) % 2) out += e(out.dim_, static_cast<int>(i));
    return out;
  }

  int dim() const { return dim_; }
  std::uint8_t coeffs() const { return coeffs_; }
  bool coefficient(std::uint8_t mask) const { return (coeffs_ >> mask) & 1u; }
  bool is_zero() const { return coeffs_ == 0; }

  /// Part of degree `deg`.
  Z2Class graded(int deg) const {
    std::uint8_t out = 0;
    for (int m = 0; m < (1 << dim_); ++m)
      if (std::bitset<3>(m).count() == static_cast<std::size_t>(deg) && coefficient(static_cast<std::uint8_t>(m)))
        out |= static_cast<std::uint8_t>(1u << m);
    return Z2Class(dim_, out);
  }

  /// Degree when homogeneous, -1 for zero, -2 for mixed degree.
  int degree() const {
    if (is_zero()) return -1;
    int deg = -1;
    for (int m = 0; m < (1 << dim_); ++m) {
      if (!coefficient(static_cast<std::uint8_t>(m))) continue;
      const int d = static_cast<int>(std::bitset<3>(m).count());
      if (deg >= 0 && d != deg) return -2;
      deg = d;
    }
    return deg;
  }

  /// Degree-1 part as a 0/1 coordinate vector.
  IVector bits() const {
    IVector out = IVector::Zero(dim_);
    for (int i = 0; i < dim_; ++i) out(i) = coefficient(static_cast<std::uint8_t>(1u << i)) ? 1 : 0;
    return out;
  }

  Z2Class& operator+=(const Z2Class& o) {
    check_same(o);
    coeffs_ ^= o.coeffs_;
    return *this;
  }
  friend Z2Class operator+(Z2Class a, const Z2Class& b) { return a += b; }

  /// Cup product: e_A e_B = e_{A u B} when A and B are disjoint, 0 otherwise.
  friend Z2Class operator*(const Z2Class& a, const Z2Class& b) {
    a.check_same(b);
    std::uint8_t out = 0;
    for (int x = 0; x < (1 << a.dim_); ++x) {
      if (!a.coefficient(static_cast<std::uint8_t>(x))) continue;
      for (int y = 0; y < (1 << a.dim_); ++y)
        if (b.coefficient(static_cast<std::uint8_t>(y)) && (x & y) == 0) out ^= static_cast<std::uint8_t>(1u << (x | y));
    }
    return Z2Class(a.dim_, out);
  }

  bool operator==(const Z2Class& o) const { return dim_ == o.dim_ && coeffs_ == o.coeffs_; }

  /// "0", "1", "e1+e2", "e1*e2+e2*e3"; monomials ordered by degree, then by mask.
  std::string str() const {
    if (is_zero()) return "0";
    std::vector<std::string> terms;
    for (int deg = 0; deg <= dim_; ++deg)
      for (int m = 0; m < (1 << dim_); ++m) {
        if (static_cast<int>(std::bitset<3>(m).count()) != deg || !coefficient(static_cast<std::uint8_t>(m))) continue;
        if (m == 0) {
          terms.emplace_back("1");
          continue;
        }
        std::string t;
        for (int i = 0; i < dim_; ++i)
          if (m & (1 << i)) t += (t.empty() ? "e" : "*e") + std::to_string(i + 1);
        terms.push_back(t);
      }
    std::string out;
    for (const auto& t : terms) out += (out.empty() ? "" : "+") + t;
    return out;
  }

  static Z2Class parse(const std::string& text, int dim) {
    Z2Class out(dim);
    std::string s;
    for (char ch : text)
      if (!std::isspace(static_cast<unsigned char>(ch))) s += ch;
    if (s.empty()) raise(ErrorKind::InvalidArgument, "empty class expression");
    std::size_t pos = 0;
    while (pos <= s.size()) {
      const std::size_t end = std::min(s.find('+', pos), s.size());
      const std::string term = s.substr(pos, end - pos);
      if (term.empty()) raise(ErrorKind::InvalidArgument, "malformed class expression '", text, "'");
      Z2Class mono = one(dim);
      if (term == "0") {
        mono = zero(dim);
      } else if (term != "1") {
        std::size_t p = 0;
        while (p <= term.size()) {
          const std::size_t q = std::min(term.find('*', p), term.size());
          const std::string factor = term.substr(p, q - p);
          if (factor.size() != 2 || factor[0] != 'e' || factor[1] < '1' || factor[1] > '0' + dim)
            raise(ErrorKind::InvalidArgument, "bad factor '", factor, "' in '", text, "'");
          mono = mono * e(dim, factor[1] - '1');
          p = q + 1;
        }
      }
      out += mono;
      pos = end + 1;
    }
    return out;
  }

 private:
  void check_same(const Z2Class& o) const {
    if (dim_ != o.dim_) raise(ErrorKind::ShapeMismatch, "classes over tori of different dimension");
  }

  int dim_ = 2;
  std::uint8_t coeffs_ = 0;
};

/// Total Stiefel-Whitney class 1 + w1 + w2, truncated at degree 2.
struct TotalSW {
  int rank = 0;
  Z2Class w1;
  Z2Class w2;

  TotalSW() = default;
  TotalSW(int r, Z2Class a, Z2Class b) : rank(r), w1(std::move(a)), w2(std::move(b)) {
    if (w1.dim() != w2.dim()) raise(ErrorKind::ShapeMismatch, "w1 and w2 over different tori");
    if ((w1.degree() != 1 && !w1.is_zero()) || (w2.degree() != 2 && !w2.is_zero()))
      raise(ErrorKind::InvalidArgument, "w1 must be of degree 1 and w2 of degree 2");
    if ((rank < 1 && !w1.is_zero()) || (rank < 2 && !w2.is_zero()))
      raise(ErrorKind::InvalidArgument, "w_i must vanish above the rank");
  }

  static TotalSW trivial(int rank, int dim) { return {rank, Z2Class::zero(dim), Z2Class::zero(dim)}; }
  static TotalSW line(const IVector& c) { return {1, Z2Class::from_bits(c), Z2Class::zero(static_cast<int>(c.size()))}; }

  int dim() const { return w1.dim(); }
  Z2Class total() const { return Z2Class::one(dim()) + w1 + w2; }
  std::string str() const { return total().str(); }
  bool operator==(const TotalSW& o) const { return rank == o.rank && w1 == o.w1 && w2 == o.w2; }
};

/// Whitney sum formula: w(E + F) = w(E) w(F), truncated at degree 2.
inline TotalSW sw_product(const std::vector<TotalSW>& classes) {
  if (classes.empty()) raise(ErrorKind::InvalidArgument, "sw_product of an empty list");
  const int dim = classes.front().dim();
  Z2Class total = Z2Class::one(dim);
  int rank = 0;
  for (const auto& c : classes) {
    if (c.dim() != dim) raise(ErrorKind::ShapeMismatch, "sw_product over tori of different dimension");
    total = total * c.total();
    rank += c.rank;
  }
  return {rank, total.graded(1), total.graded(2)};
}

/// E (x) L_c in the line-sum normal form: w1 + r c and w2 + (r - 1) c w1.
inline TotalSW sw_tensor_line(const TotalSW& e, const IVector& c) {
  const Z2Class cc = Z2Class::from_bits(c);
  if (cc.dim() != e.dim()) raise(ErrorKind::ShapeMismatch, "line class over a different torus");
  TotalSW out = e;
  if (e.rank % 2) out.w1 += cc;
  if ((e.rank - 1) % 2 && e.rank > 0) out.w2 += cc * e.w1;
  return out;
}

enum class Verdict { Splits, Obstructed };

struct DecompositionPlan {
  Verdict verdict = Verdict::Splits;
  /// Rescaled Wannier centers as 0/1 coordinate vectors in the Gamma basis.
  std::vector<IVector> centers;
  std::optional<int> euler;
  /// Set when the answer relies on the non-orientable rank-2 extension.
  bool extension = false;
  std::string note;

  bool splits() const { return verdict == Verdict::Splits; }
  std::string verdict_str() const {
    if (splits()) return "Splits";
    return euler ? "Obstructed(" + std::to_string(*euler) + ")" : std::string("Obstructed");
  }
};

inline std::string center_str(const IVector& c) { return Z2Class::from_bits(c).str(); }

inline IVector parse_center(const std::string& text, int dim) {
  const Z2Class z = Z2Class::parse(text, dim);
  if (!z.is_zero() && z.degree() != 1) raise(ErrorKind::InvalidArgument, "center '", text, "' is not of degree 1");
  return z.bits();
}

namespace detail {

inline IVector bits_of(int dim, std::initializer_list<int> ones) {
  IVector v = IVector::Zero(dim);
  for (int i : ones) v(i) = 1;
  return v;
}

inline IVector add_mod2(const IVector& a, const IVector& b) {
  IVector out(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) out(i) = (a(i) + b(i)) % 2;
  return out;
}

/// Rank-3 orientable witnesses x, y, x + y with x y = w2, following the case analysis on T^2 / T^3.
inline std::vector<IVector> orientable_rank3_centers(const Z2Class& w2, int dim) {
  if (w2.is_zero()) return {IVector::Zero(dim), IVector::Zero(dim), IVector::Zero(dim)};
  if (dim == 2) return {bits_of(2, {0}), bits_of(2, {1}), bits_of(2, {0, 1})};
  const bool a = !(w2 * Z2Class::e(3, 2)).is_zero();  // e1 e2
  const bool b = !(w2 * Z2Class::e(3, 0)).is_zero();  // e2 e3
  const bool c = !(w2 * Z2Class::e(3, 1)).is_zero();  // e3 e1
  const int count = a + b + c;
  if (count == 1) {
    // x y with {x, y} the two generators of the single plane.
    if (a) return {bits_of(3, {0}), bits_of(3, {1}), bits_of(3, {0, 1})};
    if (b) return {bits_of(3, {1}), bits_of(3, {2}), bits_of(3, {1, 2})};
    return {bits_of(3, {2}), bits_of(3, {0}), bits_of(3, {0, 2})};
  }
  if (count == 2) {
    // Two planes sharing the generator y: (x + z) y, listed as {x + z, y, x + y + z}.
    if (a && b) return {bits_of(3, {0, 2}), bits_of(3, {1}), bits_of(3, {0, 1, 2})};
    if (a && c) return {bits_of(3, {1, 2}), bits_of(3, {0}), bits_of(3, {0, 1, 2})};
    return {bits_of(3, {0, 1}), bits_of(3, {2}), bits_of(3, {0, 1, 2})};
  }
  return {bits_of(3, {0, 2}), bits_of(3, {1, 2}), bits_of(3, {0, 1})};
}

}  // namespace detail

/// Splitting of a real bundle into line bundles L_{c_a}, or the Euler obstruction in rank 2.
inline DecompositionPlan plan_decomposition(int rank, const Z2Class& w1, const Z2Class& w2, std::optional<int> euler,
                                            int dim) {
  if (dim != 2 && dim != 3) raise(ErrorKind::InvalidArgument, "planner supports d = 2 or 3");
  if (w1.dim() != dim || w2.dim() != dim) raise(ErrorKind::ShapeMismatch, "classes over a different torus");
  const TotalSW sw(rank, w1, w2);
  DecompositionPlan plan;
  plan.euler = euler;
  if (rank <= 0) return plan;
  if (rank == 1) {
    plan.centers = {w1.bits()};
    return plan;
  }
  if (rank == 2 && w1.is_zero()) {
    if (!euler) raise(ErrorKind::MissingEuler, "rank-2 orientable bundle needs its Euler number");
    if (*euler != 0) {
      plan.verdict = Verdict::Obstructed;
      return plan;
    }
    if (!w2.is_zero()) raise(ErrorKind::InvalidArgument, "Euler number 0 but w2 = ", w2.str());
    plan.centers = {IVector::Zero(dim), IVector::Zero(dim)};
    return plan;
  }
  if (rank == 2) {
    // Non-orientable rank 2: L_a + L_{a + w1} has w2 = a w1, so search a with a w1 = w2.
    plan.extension = true;
    plan.note = "non-orientable rank 2 (extension beyond the orientable theorem)";
    for (int mask = 0; mask < (1 << dim); ++mask) {
      IVector bits(dim);
      for (int i = 0; i < dim; ++i) bits(i) = (mask >> i) & 1;
      const Z2Class ca = Z2Class::from_bits(bits);
      if (ca * w1 == w2) {
        plan.centers = {bits, detail::add_mod2(bits, w1.bits())};
        return plan;
      }
    }
    plan.verdict = Verdict::Obstructed;
    plan.note += "; w2 is not divisible by w1";
    return plan;
  }
  // Rank >= 3: split off trivial lines down to rank 3, twist by w1 to orient, use the
  // witness table, then twist back.
  const std::vector<IVector> oriented = detail::orientable_rank3_centers(w2, dim);
  for (const auto& c : oriented) plan.centers.push_back(detail::add_mod2(c, w1.bits()));
  for (int a = 3; a < rank; ++a) plan.centers.push_back(IVector::Zero(dim));
  return plan;
}

/// Whitney check of a plan: the product of its line classes.
inline TotalSW plan_total(const DecompositionPlan& plan, int dim) {
  std::vector<TotalSW> lines;
  for (const auto& c : plan.centers) lines.push_back(TotalSW::line(c));
  if (lines.empty()) return TotalSW::trivial(0, dim);
  return sw_product(lines);
}

/// Complex bundle of rank r on T^d with first Chern numbers c1 per plane: (r - 1) trivial lines plus L.
struct ComplexNormalForm {
  int trivial_lines = 0;
  std::map<std::string, int> c1;

  bool trivial() const {
    return std::all_of(c1.begin(), c1.end(), [](const auto& kv) { return kv.second == 0; });
  }

  std::string str() const {
    if (trivial()) return trivial_lines + 1 == 1 ? "trivial" : "trivial^" + std::to_string(trivial_lines + 1);
    std::string l = "L(";
    bool first = true;
    for (const auto& [plane, v] : c1) {
      l += (first ? "" : ",") + plane + ":" + std::to_string(v);
      first = false;
    }
    l += ")";
    if (trivial_lines == 0) return l;
    return (trivial_lines == 1 ? std::string("trivial") : "trivial^" + std::to_string(trivial_lines)) + " + " + l;
  }
};

inline ComplexNormalForm complex_normal_form(int rank, const std::map<std::string, int>& c1) {
  if (rank < 1) raise(ErrorKind::InvalidArgument, "rank must be positive");
  return {rank - 1, c1};
}

}  // namespace fragtop
