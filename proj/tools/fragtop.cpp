#include "fragtop/pipeline.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

using namespace fragtop;
namespace fs = std::filesystem;

struct Common {
  std::string out;
  int threads = 0;
  std::uint64_t seed = 20240611;
};

struct ModelArgs {
  ModelSpec spec;
  std::string c = "0,0";
  std::string input;
};

void add_model_options(CLI::App* app, ModelArgs& m) {
  app->add_option("--model", m.spec.name, "qwz | nvec | real-line | line-lc | trivial")
      ->check(CLI::IsMember(model_names()));
  app->add_option("--m", m.spec.m, "QWZ mass");
  app->add_option("--degree", m.spec.degree, "degree of the unit vector field (nvec, real-line)");
  app->add_option("--c", m.c, "lattice vector, \"1,0\" or \"e1+e2\" (line-lc)");
  app->add_option("--rank", m.spec.rank, "rank (trivial)");
  app->add_option("--dim", m.spec.dim, "torus dimension (line-lc, trivial)")->check(CLI::Range(2, 3));
  app->add_option("--grid", m.spec.grid, "nodes per direction");
  app->add_option("--input", m.input, "read the bundle from an FTGRID1 file instead");
}

IVector parse_vector(const std::string& text, int dim) {
  if (text.find('e') != std::string::npos) return parse_center(text, dim);
  std::vector<int> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      values.push_back(std::stoi(item));
    } catch (const std::exception&) {
      raise(ErrorKind::InvalidArgument, "bad lattice vector '", text, "'");
    }
  }
  if (static_cast<int>(values.size()) != dim) raise(ErrorKind::InvalidArgument, "'", text, "' needs ", dim, " entries");
  return Eigen::Map<IVector>(values.data(), dim);
}

ModelBundle resolve_model(ModelArgs& m) {
  if (!m.input.empty()) return load_model(m.input);
  m.spec.c = parse_vector(m.c, m.spec.dim);
  return build_model(m.spec);
}

/// Prints the report and mirrors it (and any artifacts) into --out.
class Reporter {
 public:
  explicit Reporter(const Common& c) : dir_(c.out) {
    if (!dir_.empty()) fs::create_directories(dir_);
  }

  bool enabled() const { return !dir_.empty(); }
  fs::path path(const std::string& name) const { return dir_ / name; }

  void report(const std::string& name, const Json& j) const {
    const std::string text = dump(j);
    std::cout << text;
    if (enabled()) write_text(path(name), text);
  }

  template <typename Writer>
  void csv(const std::string& name, Writer&& w) const {
    if (!enabled()) return;
    std::ofstream os(path(name), std::ios::binary);
    if (!os) raise(ErrorKind::Io, "cannot open ", path(name).string());
    w(os);
  }

  void grid(const std::string& name, const GridFile& f) const {
    if (enabled()) write_ftgrid(path(name), f);
  }

 private:
  fs::path dir_;
};

DecompositionPlan plan_for(const RealProjectorGrid& e) {
  const auto [w1, w2] = sw_classes(stiefel_whitney(e), e.dim());
  std::optional<int> euler;
  if (e.rank() == 2 && e.dim() == 2 && w1.is_zero()) euler = euler_number(e, {0, 1}).value;
  return plan_decomposition(e.rank(), w1, w2, euler, e.dim());
}

struct FrameArgs {
  bool compatible = false;
  bool vortex = false;
  std::optional<std::uint64_t> random_gauge;
};

void add_frame_options(CLI::App* app, FrameArgs& f) {
  app->add_flag("--compatible", f.compatible, "I-compatible frame from the planner (real bundles)");
  app->add_flag("--vortex", f.vortex, "multiply the first section by a vortex phase (control)");
  app->add_option("--random-gauge", f.random_gauge, "apply a random U(r) gauge with this seed");
}

FrameField build_frame(const ModelBundle& b, const FrameArgs& a, const Common& c, DecompositionPlan* plan_out) {
  GaugeOptions opt;
  opt.seed = c.seed;
  FrameField f = [&] {
    if (!a.compatible) return smooth_frame(b.complex, opt);
    if (!b.real) raise(ErrorKind::SymmetryViolation, "--compatible needs a model with a real structure");
    const DecompositionPlan plan = plan_for(*b.real);
    if (plan_out) *plan_out = plan;
    return compatible_real_frame(*b.real, plan, opt);
  }();
  if (a.vortex) f = with_vortex(std::move(f), 0);
  if (a.random_gauge) f = with_random_gauge(std::move(f), *a.random_gauge);
  return f;
}

int run(int argc, char** argv) {
  CLI::App app{"Band topology toolkit: invariants, Wannier synthesis, fragile topology, chiral TBG"};
  app.set_config("--config", "", "key=value configuration file; command-line flags override it");
  app.require_subcommand(1);
  Common common;
  app.add_option("--out", common.out, "directory for JSON reports, CSV curves and FTGRID1 artifacts");
  app.add_option("--threads", common.threads, "worker threads (default FRAGTOP_THREADS or 1)");
  app.add_option("--seed", common.seed, "master seed");

  // invariants
  auto* inv = app.add_subcommand("invariants", "Chern, Stiefel-Whitney and Euler numbers of a model");
  ModelArgs inv_model;
  add_model_options(inv, inv_model);

  // cohomology
  auto* coh = app.add_subcommand("cohomology", "decomposition plan for given characteristic classes");
  int coh_rank = 3, coh_dim = 2;
  std::string coh_w1 = "0", coh_w2 = "0", coh_lines;
  std::optional<int> coh_euler;
  coh->add_option("--rank", coh_rank, "rank of the real bundle");
  coh->add_option("--dim", coh_dim, "torus dimension")->check(CLI::Range(2, 3));
  coh->add_option("--w1", coh_w1, "first Stiefel-Whitney class, e.g. \"e1+e2\"");
  coh->add_option("--w2", coh_w2, "second Stiefel-Whitney class, e.g. \"e1*e2\"");
  coh->add_option("--euler", coh_euler, "Euler number (rank 2, orientable)");
  coh->add_option("--lines", coh_lines, "sum of line bundles L_c instead, e.g. \"e1;e2;e1+e2\"");

  // gauge
  auto* gau = app.add_subcommand("gauge", "smooth or I-compatible global frame and its quality");
  ModelArgs gau_model;
  FrameArgs gau_frame;
  add_model_options(gau, gau_model);
  add_frame_options(gau, gau_frame);

  // wannier
  auto* wan = app.add_subcommand("wannier", "Wannier synthesis, centers and decay analysis");
  ModelArgs wan_model;
  FrameArgs wan_frame;
  std::string wan_frame_input;
  add_model_options(wan, wan_model);
  add_frame_options(wan, wan_frame);
  wan->add_option("--frame", wan_frame_input, "FTGRID1 frame file (sidecar <file>.json holds the labels)");

  // fragile-demo
  auto* demo = app.add_subcommand("fragile-demo", "rank-2 Euler obstruction lifted by adding a band");
  FragileDemoConfig demo_cfg;
  std::string demo_c = "0,0";
  bool no_augment = false;
  std::optional<int> demo_supercell;
  demo->add_option("--degree", demo_cfg.degree, "Euler number of the rank-2 bundle");
  demo->add_option("--c", demo_c, "class of the added line bundle L_c");
  demo->add_option("--grid", demo_cfg.grid, "nodes per direction");
  demo->add_option("--supercell", demo_supercell, "supercell M (default and only supported value: --grid)");
  demo->add_flag("--no-augment", no_augment, "skip the added band");

  // tbg
  auto* tbg_cmd = app.add_subcommand("tbg", "chiral twisted bilayer graphene");
  tbg_cmd->require_subcommand(1);
  auto* scan = tbg_cmd->add_subcommand("scan", "locate magic angles by a smallest-singular-value scan");
  Real alpha_min = 0.4, alpha_max = 0.8;
  int scan_cutoff = 8;
  std::optional<int> check_cutoff;
  scan->add_option("--alpha-min", alpha_min);
  scan->add_option("--alpha-max", alpha_max);
  scan->add_option("--cutoff", scan_cutoff, "plane-wave cutoff in units of |b1|");
  scan->add_option("--check-cutoff", check_cutoff, "re-refine each angle at this cutoff");
  auto* flat = tbg_cmd->add_subcommand("flatband", "flat-band bundle and its invariants");
  std::optional<Real> flat_alpha;
  int flat_grid = 24, flat_cutoff = 6;
  flat->add_option("--alpha", flat_alpha, "coupling (default: first magic angle in [0.5, 0.7])");
  flat->add_option("--grid", flat_grid, "samples per direction");
  flat->add_option("--cutoff", flat_cutoff, "plane-wave cutoff");
  auto* centers = tbg_cmd->add_subcommand("centers", "Wannier centers of the flat bands with added bands");
  std::string centers_case = "four-bands";
  std::optional<std::string> centers_c;
  centers->add_option("--case", centers_case)->check(CLI::IsMember({"two-bands", "four-bands"}));
  centers->add_option("--c", centers_c, "class of the added line (two-bands)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  if (common.threads > 0) set_thread_count(common.threads);
  const Reporter out(common);

  try {
    if (*inv) {
      const ModelBundle b = resolve_model(inv_model);
      InvariantOptions opt;
      opt.seed = common.seed;
      out.report("invariants.json", to_json(compute_invariants(b, opt)));
      out.csv("nodes.csv", [&](std::ostream& os) { write_node_csv(os, b.complex); });
      return 0;
    }
    if (*coh) {
      DecompositionPlan plan;
      TotalSW total;
      if (!coh_lines.empty()) {
        std::vector<TotalSW> lines;
        std::stringstream ss(coh_lines);
        std::string item;
        while (std::getline(ss, item, ';')) lines.push_back(TotalSW::line(parse_center(item, coh_dim)));
        total = sw_product(lines);
      } else {
        total = TotalSW(coh_rank, Z2Class::parse(coh_w1, coh_dim), Z2Class::parse(coh_w2, coh_dim));
      }
      plan = plan_decomposition(total.rank, total.w1, total.w2, coh_euler, coh_dim);
      Json j = to_json(plan);
      j["classes"] = to_json(total);
      if (plan.splits()) j["check"] = to_json(plan_total(plan, coh_dim));
      out.report("plan.json", j);
      return plan.splits() ? 0 : 2;
    }
    if (*gau) {
      const ModelBundle b = resolve_model(gau_model);
      DecompositionPlan plan;
      const FrameField f = build_frame(b, gau_frame, common, &plan);
      const FrameQuality q = frame_quality(f);
      Json j = {{"quality", to_json(q)}, {"span_residual", span_residual(f, b.complex)}};
      if (gau_frame.compatible) j["plan"] = to_json(plan);
      out.report("gauge.json", j);
      out.grid("frame.ftgrid", to_grid_file(f));
      if (out.enabled()) write_text(out.path("frame.ftgrid.json"), dump(frame_sidecar(f, q)));
      return 0;
    }
    if (*wan) {
      FrameField f = [&] {
        if (wan_frame_input.empty()) {
          const ModelBundle b = resolve_model(wan_model);
          return build_frame(b, wan_frame, common, nullptr);
        }
        std::vector<IVector> labels;
        if (std::ifstream side(wan_frame_input + ".json"); side) labels = labels_from_sidecar(Json::parse(side));
        return to_frame_field(read_ftgrid(wan_frame_input), labels);
      }();
      Json functions = Json::array();
      for (int a = 0; a < f.rank(); ++a) {
        const WannierFunction w = wannier_synthesize(f, a);
        const DecayReport d = decay_analysis(w);
        functions.push_back({{"index", a},
                             {"label", to_json(f.labels[a])},
                             {"center", to_json(wannier_center(w))},
                             {"berry_center", to_json(berry_center(f, a))},
                             {"decay", to_json(d)}});
        const std::string stem = "wannier_" + std::to_string(a);
        out.csv(stem + "_decay.csv", [&](std::ostream& os) { write_decay_csv(os, d); });
        out.grid(stem + ".ftgrid", to_grid_file(w));
      }
      std::vector<WannierFunction> ws;
      for (int a = 0; a < f.rank(); ++a) ws.push_back(wannier_synthesize(f, a));
      Json j = {{"functions", functions},
                {"supercell", f.grid.sizes()},
                {"translate_orthonormality", translate_orthonormality(ws)}};
      out.report("wannier.json", j);
      return 0;
    }
    if (*demo) {
      demo_cfg.c = parse_vector(demo_c, 2);
      demo_cfg.augment = !no_augment;
      demo_cfg.supercell = demo_supercell.value_or(demo_cfg.grid);
      demo_cfg.gauge.seed = common.seed;
      const FragileDemoResult r = fragile_demo(demo_cfg);
      out.report("fragile_demo.json", to_json(r));
      for (std::size_t a = 0; a < r.decay.size(); ++a) {
        const std::string stem = "wannier_" + std::to_string(a);
        out.csv(stem + "_decay.csv", [&](std::ostream& os) { write_decay_csv(os, r.decay[a]); });
        out.grid(stem + ".ftgrid", to_grid_file(r.functions[a]));
      }
      return 0;
    }
    if (*scan) {
      const auto records = tbg::find_magic_angles(alpha_min, alpha_max, scan_cutoff);
      Json list = Json::array();
      for (const auto& rec : records) {
        Json j = to_json(rec);
        if (check_cutoff) {
          const Real refined = tbg::refine_magic_angle(rec.alpha - 0.01, rec.alpha + 0.01, *check_cutoff);
          j["check"] = {{"cutoff", *check_cutoff}, {"alpha", refined}, {"shift", std::abs(refined - rec.alpha)}};
        }
        list.push_back(j);
      }
      out.report("magic_angles.json", {{"alpha_range", {alpha_min, alpha_max}}, {"magic_angles", list}});
      return 0;
    }
    if (*flat) {
      const Real alpha = flat_alpha ? *flat_alpha : tbg::find_magic_angles(0.5, 0.7, 8).front().alpha;
      const tbg::FlatBand fb = tbg::flatband_bundle(alpha, flat_grid, flat_cutoff);
      out.report("flatband.json", to_json(flatband_report(fb, alpha, flat_grid, flat_cutoff)));
      out.grid("flatband_complex.ftgrid", to_grid_file(fb.complex_bundle));
      out.grid("flatband_real.ftgrid", to_grid_file(fb.real_bundle));
      return 0;
    }
    if (*centers) {
      const auto which = centers_case == "two-bands" ? tbg::BandCase::TwoBands : tbg::BandCase::FourBands;
      std::optional<IVector> c;
      if (centers_c) c = parse_vector(*centers_c, 2);
      out.report("centers.json", to_json(tbg::tbg_wannier_centers(which, c)));
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
