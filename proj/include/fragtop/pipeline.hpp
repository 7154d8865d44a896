#pragma once

#include "fragtop/io.hpp"

namespace fragtop {

/// Error raised inside a named pipeline stage; the kind of the underlying error is kept.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& inner)
      : Error(inner.kind(), "stage " + stage + ": " + strip_kind(inner)), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  static std::string strip_kind(const Error& e) {
    const std::string what = e.what();
    const std::string prefix = std::string(to_string(e.kind())) + ": ";
    return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
  }

  std::string stage_;
};

template <typename Fn>
auto run_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

/// Exit code contract: 0 success, 2 expected obstruction, 1 anything else.
inline int exit_code_for(ErrorKind kind) {
  return kind == ErrorKind::PlanObstructed || kind == ErrorKind::ChernObstruction ? 2 : 1;
}

/// (w1, w2) as cohomology classes.
inline std::pair<Z2Class, Z2Class> sw_classes(const SWClassData& d, int dim) {
  IVector bits(dim);
  for (int i = 0; i < dim; ++i) bits(i) = d.w1[i];
  Z2Class w2(dim);
  for (const auto& [p, v] : d.w2)
    if (v) w2 += Z2Class::e(dim, p.first) * Z2Class::e(dim, p.second);
  return {Z2Class::from_bits(bits), w2};
}

// ---------------------------------------------------------------------------
// Models by name

struct ModelSpec {
  std::string name = "qwz";
  Real m = 1.0;
  int degree = 1;
  IVector c = IVector::Zero(2);
  int rank = 1;
  int dim = 2;
  int grid = 32;
};

struct ModelBundle {
  ProjectorGrid complex;
  std::optional<RealProjectorGrid> real;
};

inline std::vector<std::string> model_names() { return {"qwz", "nvec", "real-line", "line-lc", "trivial"}; }

inline ModelBundle build_model(const ModelSpec& s) {
  if (s.grid < 2) raise(ErrorKind::InvalidArgument, "grid must be at least 2");
  const KGrid g = KGrid::square(s.dim, s.grid);
  auto sampled = [&](const HermitianFamily& f) {
    if (s.dim != 2) raise(ErrorKind::InvalidArgument, "model ", s.name, " is two-dimensional");
    ProjectorGrid e = sample_projector(f, g);
    std::optional<RealProjectorGrid> real;
    if (e.real_structure()) real = real_subbundle(e);
    return ModelBundle{std::move(e), std::move(real)};
  };
  if (s.name == "qwz") return sampled(model_qwz(s.m));
  if (s.name == "nvec") return sampled(model_nvec(s.degree));
  if (s.name == "real-line") return sampled(model_real_line(s.degree));
  if (s.name == "line-lc") {
    if (s.c.size() != s.dim) raise(ErrorKind::ShapeMismatch, "--c needs ", s.dim, " entries");
    RealProjectorGrid l = model_line_lc(s.c, g);
    return {l, l};
  }
  if (s.name == "trivial") {
    RealProjectorGrid t = model_trivial_real(s.rank, g);
    return {t, t};
  }
  raise(ErrorKind::InvalidArgument, "unknown model '", s.name, "'");
}

/// Bundle read back from an FTGRID1 file; grids with a twist block are real.
inline ModelBundle load_model(const std::filesystem::path& path) {
  const GridFile f = read_ftgrid(path);
  ProjectorGrid e = to_projector_grid(f);
  std::optional<RealProjectorGrid> real;
  if (f.twist) real = to_real_projector_grid(f);
  return {std::move(e), std::move(real)};
}

// ---------------------------------------------------------------------------
// Invariants

struct InvariantsReport {
  std::vector<ChernRecord> chern;
  std::optional<SWClassData> sw;
  std::optional<int> euler;
};

inline InvariantsReport compute_invariants(const ModelBundle& b, const InvariantOptions& opt = {}) {
  InvariantsReport rep;
  rep.chern = chern_numbers(b.complex, opt);
  if (b.real) {
    rep.sw = stiefel_whitney(*b.real, opt);
    if (b.real->rank() == 2 && b.real->dim() == 2 && rep.sw->orientable)
      rep.euler = euler_number(*b.real, {0, 1}, opt).value;
  }
  return rep;
}

inline Json to_json(const InvariantsReport& r) {
  Json out = {{"chern", to_json(r.chern)}};
  if (r.sw) {
    const Json sw = to_json(*r.sw);
    out["w1"] = sw["w1"];
    out["w2"] = sw["w2"];
    out["orientable"] = r.sw->orientable;
    out["euler"] = r.euler ? Json(*r.euler) : Json(nullptr);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fragile topology demonstration

struct FragileDemoConfig {
  int degree = 1;
  IVector c = IVector::Zero(2);
  int grid = 32;
  int supercell = 32;
  bool augment = true;
  GaugeOptions gauge;
};

struct FragileDemoResult {
  DecompositionPlan rank2;
  std::optional<DecompositionPlan> rank3;
  SWClassData sw;
  int euler = 0;
  FrameQuality quality;
  std::vector<WannierFunction> functions;
  std::vector<DecayReport> decay;
  CompatibilityResult compatibility;

  const DecompositionPlan& final_plan() const { return rank3 ? *rank3 : rank2; }
  /// Worst exponential fit; empty when every function is compactly supported (no tail to fit).
  std::optional<Real> min_exp_r2() const {
    std::optional<Real> r2;
    for (const auto& d : decay)
      if (d.fit_points > 0) r2 = std::min(r2.value_or(1.0), d.exp_r2);
    return r2;
  }
};

/// (a) rank-2 verdict, (b) augmentation by L_c, (c) planner, (d) compatible frame,
/// (e) synthesis, (f) decay and compatibility checks. A rank-2 bundle that already splits
/// skips (b) and (c).
inline FragileDemoResult fragile_demo(const FragileDemoConfig& cfg) {
  if (cfg.supercell != cfg.grid)
    raise(ErrorKind::ShapeMismatch, "supercell M must equal the k-grid size (", cfg.supercell, " vs ", cfg.grid, ")");
  FragileDemoResult res;
  const KGrid g = KGrid::square(2, cfg.grid);
  const RealProjectorGrid f0 = run_stage("(a) rank-2 verdict", [&] {
    RealProjectorGrid f = real_subbundle(sample_projector(model_nvec(cfg.degree), g));
    res.sw = stiefel_whitney(f);
    res.euler = euler_number(f, {0, 1}).value;
    const auto [w1, w2] = sw_classes(res.sw, 2);
    res.rank2 = plan_decomposition(2, w1, w2, res.euler, 2);
    return f;
  });

  RealProjectorGrid bundle = f0;
  DecompositionPlan plan = res.rank2;
  if (!res.rank2.splits() && cfg.augment) {
    bundle = run_stage("(b) augmentation", [&] { return direct_sum(f0, model_line_lc(cfg.c, g)); });
    plan = run_stage("(c) planner", [&] {
      const auto [w1, w2] = sw_classes(stiefel_whitney(bundle), 2);
      return plan_decomposition(3, w1, w2, std::nullopt, 2);
    });
    res.rank3 = plan;
  }

  const FrameField frame = run_stage("(d) compatible frame", [&] { return compatible_real_frame(bundle, plan, cfg.gauge); });
  res.quality = frame_quality(frame);
  run_stage("(e) synthesis", [&] {
    for (int a = 0; a < frame.rank(); ++a) res.functions.push_back(wannier_synthesize(frame, a));
    return 0;
  });
  run_stage("(f) checks", [&] {
    for (const auto& w : res.functions) res.decay.push_back(decay_analysis(w));
    res.compatibility = check_compatibility(res.functions, plan, *frame.real_structure);
    return 0;
  });
  return res;
}

inline Json to_json(const FragileDemoResult& r) {
  const DecompositionPlan& plan = r.final_plan();
  Json centers = Json::array();
  for (const auto& c : plan.centers) centers.push_back(center_str(c));
  Json wc = Json::array();
  for (const auto& x : r.compatibility.centers) wc.push_back(to_json(x));
  Json functions = Json::array();
  for (std::size_t a = 0; a < r.functions.size(); ++a)
    functions.push_back({{"center_label", center_str(plan.centers[a])},
                         {"center", to_json(r.compatibility.centers[a])},
                         {"compatibility_residual", r.compatibility.residuals[a]},
                         {"center_error", r.compatibility.center_errors[a]},
                         {"decay", to_json(r.decay[a])}});
  const Real worst = r.compatibility.residuals.empty()
                         ? 0.0
                         : *std::max_element(r.compatibility.residuals.begin(), r.compatibility.residuals.end());
  Json out = {{"rank2", r.rank2.verdict_str()},
              {"euler", r.euler},
              {"w1", r.sw.w1},
              {"centers", centers},
              {"wannier_centers", wc},
              {"compatible", r.compatibility.compatible},
              {"compatibility_residual", worst},
              {"frame", to_json(r.quality)},
              {"functions", functions}};
  const auto r2 = r.min_exp_r2();
  out["exp_r2"] = r2 ? Json(*r2) : Json(nullptr);
  out["rank3"] = r.rank3 ? Json(r.rank3->verdict_str()) : Json(nullptr);
  return out;
}

// ---------------------------------------------------------------------------
// TBG flat band invariants

struct FlatBandReport {
  Real alpha = 0;
  int grid = 0;
  int cutoff = 0;
  int kernel_dim = 0;
  int chern = 0;
  int euler = 0;
  SWClassData sw;
  Real compatibility = 0;
  Real max_kernel_sigma = 0;
  Real min_gap_sigma = 0;
};

inline FlatBandReport flatband_report(const tbg::FlatBand& fb, Real alpha, int grid, int cutoff) {
  FlatBandReport r;
  r.alpha = alpha;
  r.grid = grid;
  r.cutoff = cutoff;
  r.kernel_dim = fb.kernel_dim;
  r.chern = chern_number(fb.complex_bundle, {0, 1}).value;
  r.euler = euler_number(fb.real_bundle, {0, 1}).value;
  r.sw = stiefel_whitney(fb.real_bundle);
  r.compatibility = fb.real_bundle.compatibility_residual();
  r.max_kernel_sigma = fb.max_kernel_sigma;
  r.min_gap_sigma = fb.min_gap_sigma;
  return r;
}

inline Json to_json(const FlatBandReport& r) {
  Json sw = to_json(r.sw);
  return {{"alpha", r.alpha},
          {"grid", r.grid},
          {"cutoff", r.cutoff},
          {"kernel_dim", r.kernel_dim},
          {"chern", r.chern},
          {"euler", r.euler},
          {"w1", sw["w1"]},
          {"w2", sw["w2"]},
          {"compatibility_residual", r.compatibility},
          {"max_kernel_sigma", r.max_kernel_sigma},
          {"min_gap_sigma", r.min_gap_sigma}};
}

}  // namespace fragtop
