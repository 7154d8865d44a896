#include "fragtop/pipeline.hpp"

#include <chrono>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace fragtop;

namespace {

// Tolerances and runtime limits.
constexpr Real kCenterTol = 1e-5;
constexpr Real kExpR2 = 0.99;
constexpr Real kMomentDrift = 0.05;
constexpr Real kVortexGrowth = 1.5;
constexpr Real kCompatResidual = 1e-6;
constexpr Real kDemoCenterTol = 1e-4;
constexpr Real kMagicShift = 1e-4;
constexpr Real kParseval = 1e-10;
constexpr Real kEquivariance = 1e-8;

struct Outcome {
  bool ok = true;
  std::ostringstream detail;

  void check(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      detail << " FAILED[" << what << "]";
    }
  }
};

struct Criterion {
  int id;
  std::string name;
  double limit_seconds;
  std::function<void(Outcome&)> body;
};

IVector vec(std::initializer_list<int> v) {
  IVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (int x : v) out(i++) = x;
  return out;
}

std::vector<IVector> line_classes(int dim) {
  std::vector<IVector> out;
  for (int bits = 0; bits < (1 << dim); ++bits) {
    IVector c(dim);
    for (int j = 0; j < dim; ++j) c(j) = (bits >> j) & 1;
    out.push_back(c);
  }
  return out;
}

std::vector<Z2Class> graded(int dim, int deg) {
  std::vector<Z2Class> out;
  for (int c = 0; c < (1 << (1 << dim)); ++c) {
    const Z2Class z(dim, static_cast<std::uint8_t>(c));
    if (z.is_zero() || z.degree() == deg) out.push_back(z);
  }
  return out;
}

/// Signed solid-angle degree of k -> n(k)/|n(k)| on an n x n triangulation.
template <typename Field>
int solid_angle_degree(Field field, int n) {
  auto at = [&](int a, int b) {
    RVector k(2);
    k << kTwoPi * a / n, kTwoPi * b / n;
    return Eigen::Vector3d(field(k));
  };
  Real total = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const Eigen::Vector3d p = at(a, b), q = at(a + 1, b), r = at(a + 1, b + 1), s = at(a, b + 1);
      for (const auto& [x, y, z] : {std::tuple{p, q, r}, std::tuple{p, r, s}})
        total += 2.0 * std::atan2(x.dot(y.cross(z)), 1.0 + x.dot(y) + y.dot(z) + z.dot(x));
    }
  return static_cast<int>(std::lround(total / (4.0 * kPi)));
}

Eigen::Vector3d qwz_unit(Real m, const RVector& k) {
  return Eigen::Vector3d(std::sin(k(0)), std::sin(k(1)), m - std::cos(k(0)) - std::cos(k(1))).normalized();
}

Real circular(Real a, Real b) { return std::abs(principal_angle(kTwoPi * (a - b))) / kTwoPi; }

void symbolic(Outcome& o) {
  for (int a : {0, 1}) {
    const TotalSW p = sw_product({TotalSW::line(vec({a, 0})), TotalSW::line(vec({0, a})), TotalSW::line(vec({a, a}))});
    o.check(p.total() == Z2Class::parse(a ? "1+e1*e2" : "1", 2), "T2 identity");
  }
  const std::vector<std::pair<std::vector<std::string>, std::string>> cases = {
      {{"0", "0", "0"}, "1"},
      {{"e1", "e2", "e1+e2"}, "1+e1*e2"},
      {{"e1+e3", "e2", "e1+e2+e3"}, "1+e1*e2+e2*e3"},
      {{"e1+e3", "e2+e3", "e1+e2"}, "1+e1*e2+e2*e3+e3*e1"}};
  for (const auto& [lines, total] : cases) {
    std::vector<TotalSW> ts;
    for (const auto& l : lines) ts.push_back(TotalSW::line(parse_center(l, 3)));
    o.check(sw_product(ts).total() == Z2Class::parse(total, 3), "T3 case " + total);
  }
  int plans = 0;
  for (int dim : {2, 3})
    for (int rank : {3, 4})
      for (const auto& w1c : graded(dim, 1))
        for (const auto& w2c : graded(dim, 2)) {
          const DecompositionPlan plan = plan_decomposition(rank, w1c, w2c, std::nullopt, dim);
          Z2Class s1(dim), s2(dim);
          for (std::size_t a = 0; a < plan.centers.size(); ++a) {
            s1 += Z2Class::from_bits(plan.centers[a]);
            for (std::size_t b = a + 1; b < plan.centers.size(); ++b)
              s2 += Z2Class::from_bits(plan.centers[a]) * Z2Class::from_bits(plan.centers[b]);
          }
          o.check(plan.splits() && static_cast<int>(plan.centers.size()) == rank && s1 == w1c && s2 == w2c,
                  "planner " + w1c.str() + "," + w2c.str());
          ++plans;
        }
  o.detail << plans << " plans sound";
}

void chern_integrality(Outcome& o) {
  const std::vector<Real> masses = {-3.0, -2.5, -1.5, -1.0, -0.5, 0.5, 1.0, 1.5, 2.5, 3.0};
  std::map<int, std::set<int>> by_phase;  // phase index: (-inf,-2), (-2,0), (0,2), (2,inf)
  for (Real m : masses) {
    const int phase = (m > -2) + (m > 0) + (m > 2);
    for (int n : {32, 64}) {
      const int c = chern_number(sample_projector(model_qwz(m), KGrid::square(2, n)), {0, 1}).value;
      std::vector<Eigen::Vector3d> field(static_cast<std::size_t>(n) * n);
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) {
          RVector k(2);
          k << kTwoPi * a / n, kTwoPi * b / n;
          field[a * n + b] = qwz_field(m, k).normalized();
        }
      const int oracle = degree_oracle(field, n, n);
      const int solid = solid_angle_degree([m](const RVector& k) { return qwz_unit(m, k); }, n);
      o.check(c == oracle && c == solid, "m=" + std::to_string(m) + " n=" + std::to_string(n));
      o.check(c >= -1 && c <= 1, "range");
      by_phase[phase].insert(c);
    }
  }
  for (const auto& [phase, values] : by_phase) o.check(values.size() == 1, "constant within phase");
  const int c0 = *by_phase[0].begin(), c1 = *by_phase[1].begin(), c2 = *by_phase[2].begin(), c3 = *by_phase[3].begin();
  o.check(c0 != c1 && c1 != c2 && c2 != c3, "transitions at -2, 0, 2");
  o.detail << "C(m) by phase: " << c0 << " " << c1 << " " << c2 << " " << c3;
}

void euler_mod2(Outcome& o) {
  std::set<int> signs;
  for (int g = -2; g <= 2; ++g) {
    const RealProjectorGrid f = real_subbundle(sample_projector(model_nvec(g), KGrid::square(2, 32)));
    const int e = euler_number(f, {0, 1}).value;
    o.check(std::abs(e) == std::abs(g), "|e| = |g| at g=" + std::to_string(g));
    if (g != 0) signs.insert(e / g);
    o.check(((e % 2) + 2) % 2 == w2(f, {0, 1}), "e mod 2 = w2 at g=" + std::to_string(g));
    o.detail << "e(" << g << ")=" << e << " ";
  }
  o.check(signs.size() == 1, "single sign");
}

void center_theorem(Outcome& o) {
  const KGrid g = KGrid::square(2, 64);
  Real worst = 0, worst_berry = 0;
  for (const IVector& c : line_classes(2)) {
    DecompositionPlan plan;
    plan.centers = {c};
    const FrameField f = compatible_real_frame(model_line_lc(c, g), plan);
    const RVector wc = wannier_center(wannier_synthesize(f, 0));
    const RVector bc = berry_center(f, 0);
    for (int j = 0; j < 2; ++j) {
      worst = std::max(worst, circular(wc(j), 0.5 * c(j)));
      worst_berry = std::max(worst_berry, circular(bc(j), wc(j)));
    }
  }
  o.check(worst < kCenterTol, "wannier center");
  o.check(worst_berry < kCenterTol, "berry center");
  o.detail << "max center error " << worst << ", berry vs wannier " << worst_berry;
}

void localization(Outcome& o) {
  Real moment[2], vortex[2], r2 = 1;
  for (int i = 0; i < 2; ++i) {
    const int m = 32 << i;
    const FrameField f = smooth_frame(sample_projector(model_qwz(3.0), KGrid::square(2, m)));
    const DecayReport d = decay_analysis(wannier_synthesize(f, 0));
    moment[i] = d.second_moment;
    r2 = std::min(r2, d.exp_r2);
    vortex[i] = decay_analysis(wannier_synthesize(with_vortex(f, 0), 0)).second_moment;
  }
  const Real drift = std::abs(moment[1] - moment[0]) / moment[0];
  const Real growth = vortex[1] / vortex[0];
  o.check(r2 > kExpR2, "exp_r2");
  o.check(drift < kMomentDrift, "second moment drift");
  o.check(growth >= kVortexGrowth, "vortex growth");
  o.detail << "exp_r2 " << r2 << ", moment drift " << drift << ", vortex growth " << growth;
}

void fragile(Outcome& o) {
  FragileDemoConfig cfg;
  cfg.degree = 1;
  cfg.grid = cfg.supercell = 32;
  const FragileDemoResult r = fragile_demo(cfg);
  const Json j = to_json(r);
  o.check(j.at("rank2") == "Obstructed(1)", "rank-2 verdict");
  o.check(r.rank3 && r.rank3->splits(), "rank-3 verdict");
  std::set<std::string> centers;
  for (const auto& c : r.final_plan().centers) centers.insert(center_str(c));
  o.check(centers == std::set<std::string>{"e1", "e2", "e1+e2"}, "centers");
  Real residual = 0, center_error = 0;
  for (Real x : r.compatibility.residuals) residual = std::max(residual, x);
  for (Real x : r.compatibility.center_errors) center_error = std::max(center_error, x);
  o.check(r.functions.size() == 3 && residual < kCompatResidual, "compatibility residual");
  o.check(center_error < kDemoCenterTol, "centers at c/2");
  const auto r2 = r.min_exp_r2();
  o.check(r2 && *r2 > kExpR2, "exp_r2");
  o.detail << "residual " << residual << ", center error " << center_error << ", exp_r2 " << r2.value_or(0);
}

void tbg_criterion(Outcome& o) {
  const Real a8 = tbg::find_magic_angles(0.5, 0.7, 8).front().alpha;
  const Real a12 = tbg::find_magic_angles(0.5, 0.7, 12).front().alpha;
  o.check(std::abs(a8 - a12) < kMagicShift, "alpha stability");
  const tbg::FlatBand fb = tbg::flatband_bundle(a8, 24, 6);
  const FlatBandReport rep = flatband_report(fb, a8, 24, 6);
  o.check(rep.chern == -1, "Chern");
  o.check(rep.euler == -1, "Euler");
  for (const IVector& c : line_classes(2)) {
    const DecompositionPlan p = tbg::tbg_wannier_centers(tbg::BandCase::TwoBands, c);
    bool same = p.splits() && p.centers.size() == 3;
    const std::vector<IVector> want = {vec({1, 0}) + c, vec({0, 1}) + c, vec({1, 1}) + c};
    for (std::size_t a = 0; same && a < 3; ++a)
      same = p.centers[a] == want[a].unaryExpr([](int x) { return x % 2; });
    o.check(same, "two-band centers for c=" + center_str(c));
  }
  const DecompositionPlan four = tbg::tbg_wannier_centers(tbg::BandCase::FourBands);
  std::vector<std::string> got;
  for (const auto& c : four.centers) got.push_back(center_str(c));
  o.check(got == std::vector<std::string>{"e1", "e2", "e1+e2", "0"}, "four-band centers");
  o.detail << "alpha " << std::setprecision(12) << a8 << " (cutoff 12: " << a12 << "), Chern " << rep.chern
           << ", Euler " << rep.euler;
}

void properties(Outcome& o) {
  const KGrid g = KGrid::square(2, 24);
  Rng rng(99);
  // Gauge invariance.
  for (Real m : {-1.0, 1.0, 3.0}) {
    ProjectorGrid e = sample_projector(model_qwz(m), g);
    const int c = chern_number(e, {0, 1}).value;
    for (std::size_t i = 0; i < g.node_count(); ++i) e.frame(i) = e.frame(i) * random_unitary(1, rng);
    o.check(chern_number(e, {0, 1}).value == c, "Chern gauge invariance");
  }
  const RealProjectorGrid base =
      direct_sum(real_subbundle(sample_projector(model_nvec(1), g)), model_line_lc(vec({1, 0}), g));
  ProjectorGrid rotated = base;
  for (std::size_t i = 0; i < g.node_count(); ++i)
    rotated.frame(i) = rotated.frame(i) * random_orthogonal(3, rng).cast<Complex>();
  const SWClassData before = stiefel_whitney(base);
  const SWClassData after = stiefel_whitney(RealProjectorGrid(rotated, base.twist(), 0));
  o.check(before.w1 == after.w1 && before.w2 == after.w2, "SW gauge invariance");
  // Parseval.
  const WannierFunction w{g.lattice(), g.sizes(), zero_positions(2, 2),
                          CMatrix(CMatrix::Random(static_cast<Eigen::Index>(g.node_count()), 2)), IVector::Zero(2)};
  const auto phi = bloch_transform(w, g);
  Real energy = 0;
  for (const auto& v : phi) energy += v.squaredNorm();
  const Real parseval = std::abs(energy / g.node_count() - w.values.squaredNorm()) / w.values.squaredNorm();
  const Real round_trip = (inverse_bloch_transform(phi, g, w.positions).values - w.values).cwiseAbs().maxCoeff();
  o.check(parseval < kParseval && round_trip < kParseval, "Parseval");
  // Equivariance.
  Real equiv = 0;
  for (const HermitianFamily& f : {model_qwz(1.0), model_nvec(2), model_real_line(1)})
    for (int dir = 0; dir < 2; ++dir)
      for (std::size_t i = 0; i < g.node_count(); i += 37)
        equiv = std::max(equiv, family_equivariance_residual(f, g.k(i), dir, g.lattice()));
  equiv = std::max(equiv, frame_quality(smooth_frame(sample_projector(model_qwz(3.0), g))).equivariance);
  o.check(equiv < kEquivariance, "equivariance");
  // Determinism.
  FragileDemoConfig cfg;
  cfg.grid = cfg.supercell = 16;
  o.check(dump(to_json(fragile_demo(cfg))) == dump(to_json(fragile_demo(cfg))), "byte-identical rerun");
  o.detail << "Parseval " << parseval << ", equivariance " << equiv;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "symbolic exactness", 1.0, symbolic},
      {2, "Chern integrality and oracle", 5.0, chern_integrality},
      {3, "Euler sign and mod-2 reduction", 10.0, euler_mod2},
      {4, "Wannier center theorem", 10.0, center_theorem},
      {5, "localization dichotomy", 60.0, localization},
      {6, "fragile topology end to end", 120.0, fragile},
      {7, "chiral TBG flat bands", 600.0, tbg_criterion},
      {8, "property suites", 120.0, properties},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    const auto start = std::chrono::steady_clock::now();
    try {
      c.body(o);
    } catch (const std::exception& e) {
      o.ok = false;
      o.detail << " exception: " << e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = seconds < c.limit_seconds;
    const bool pass = o.ok && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail.str()
              << "; " << std::fixed << std::setprecision(2) << seconds << " s of " << c.limit_seconds << " s"
              << (in_time ? "" : " [over time]") << std::defaultfloat << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
