#include "support.hpp"

#include <sstream>

using namespace fragtop;
using namespace fragtop::testing;

namespace {

GridFile round_trip(const GridFile& f) {
  std::stringstream ss;
  write_ftgrid(ss, f);
  return read_ftgrid(ss);
}

void expect_same_frames(const GridFile& a, const GridFile& b) {
  ASSERT_EQ(a.frames.size(), b.frames.size());
  EXPECT_EQ(a.fiber_dim, b.fiber_dim);
  EXPECT_EQ(a.rank, b.rank);
  EXPECT_TRUE(a.grid.same_shape(b.grid));
  for (std::size_t i = 0; i < a.frames.size(); ++i) EXPECT_EQ(a.frames[i], b.frames[i]);
}

}  // namespace

TEST(Ftgrid, ProjectorGridRoundTripIsExact) {
  HermitianFamily fam = model_qwz(1.0);
  fam.positions.resize(2, 2);
  fam.positions << 0.0, 0.0, 0.5, 0.25;
  const ProjectorGrid e = sample_projector(fam, KGrid::square(2, 8));
  const GridFile back = round_trip(to_grid_file(e));
  expect_same_frames(to_grid_file(e), back);
  EXPECT_EQ(*back.positions, e.positions());
  EXPECT_FALSE(back.real_structure);
  EXPECT_FALSE(back.twist);
  EXPECT_EQ(chern_number(to_projector_grid(back), {0, 1}).value, chern_number(e, {0, 1}).value);
}

TEST(Ftgrid, RealGridWithMonomialStructure) {
  const RealProjectorGrid e = model_line_lc(vec({1, 0}), KGrid::square(2, 8));
  const GridFile back = round_trip(to_grid_file(e));
  expect_same_frames(to_grid_file(e), back);
  ASSERT_TRUE(back.twist);
  EXPECT_EQ(*back.twist, e.twist());
  const RealProjectorGrid r = to_real_projector_grid(back);
  EXPECT_EQ(w1(r), (std::vector<int>{1, 0}));
  EXPECT_EQ(r.real_structure()->matrix(), e.real_structure()->matrix());
}

TEST(Ftgrid, RealGridWithDenseStructure) {
  Rng rng(4);
  const HermitianFamily fam = conjugate_family(model_real_line(1), random_unitary(3, rng));
  const RealProjectorGrid e = real_subbundle(sample_projector(fam, KGrid::square(2, 8)));
  ASSERT_FALSE(e.real_structure()->is_monomial());
  const RealProjectorGrid r = to_real_projector_grid(round_trip(to_grid_file(e)));
  EXPECT_EQ(r.real_structure()->matrix(), e.real_structure()->matrix());
  EXPECT_EQ(w1(r), w1(e));
}

TEST(Ftgrid, ComplexStructureSurvives) {
  const KGrid g = KGrid::square(2, 8);
  ProjectorGrid e = sample_projector(model_constant(2, 1), g);
  e.set_complex_structure(CMatrix(kI * CMatrix::Identity(2, 2)));
  const GridFile back = round_trip(to_grid_file(e));
  ASSERT_TRUE(back.complex_structure);
  EXPECT_EQ(*back.complex_structure, *e.complex_structure());
}

TEST(Ftgrid, ThreeDimensionalGrid) {
  const RealProjectorGrid e = model_line_lc(vec({0, 1, 1}), KGrid(Lattice::square(3), {4, 6, 8}));
  const GridFile back = round_trip(to_grid_file(e));
  EXPECT_EQ(back.grid.sizes(), (std::vector<int>{4, 6, 8}));
  EXPECT_EQ(w1(to_real_projector_grid(back)), (std::vector<int>{0, 1, 1}));
}

TEST(Ftgrid, FrameFieldWithSidecar) {
  const KGrid g = KGrid::square(2, 8);
  DecompositionPlan plan;
  plan.centers = {vec({1, 1})};
  const FrameField f = compatible_real_frame(model_line_lc(vec({1, 1}), g), plan);
  const Json side = Json::parse(dump(frame_sidecar(f, frame_quality(f))));
  const FrameField back = to_frame_field(round_trip(to_grid_file(f)), labels_from_sidecar(side));
  ASSERT_EQ(back.labels.size(), 1u);
  EXPECT_EQ(back.labels[0], vec({1, 1}));
  for (std::size_t i = 0; i < g.node_count(); ++i) EXPECT_EQ(back.sections[i], f.sections[i]);
}

TEST(Ftgrid, WannierFunctionKeepsTag) {
  const KGrid g = KGrid::square(2, 8);
  DecompositionPlan plan;
  plan.centers = {vec({0, 1})};
  const WannierFunction w = wannier_synthesize(compatible_real_frame(model_line_lc(vec({0, 1}), g), plan), 0);
  const WannierFunction back = to_wannier_function(round_trip(to_grid_file(w)));
  EXPECT_EQ(back.values, w.values);
  EXPECT_EQ(back.center_tag, vec({0, 1}));
  EXPECT_EQ(back.sizes, w.sizes);
}

TEST(Ftgrid, RejectsBadMagicAndTruncation) {
  std::stringstream bad("FTGRIDX and more bytes");
  try {
    read_ftgrid(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
  std::stringstream ss;
  write_ftgrid(ss, to_grid_file(sample_projector(model_qwz(1.0), KGrid::square(2, 8))));
  const std::string full = ss.str();
  for (std::size_t cut : {std::size_t{5}, std::size_t{20}, full.size() / 2, full.size() - 1}) {
    std::stringstream part(full.substr(0, cut));
    try {
      read_ftgrid(part);
      FAIL() << "cut at " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::Io);
    }
  }
  EXPECT_THROW(to_real_projector_grid(round_trip(to_grid_file(sample_projector(model_qwz(1.0), KGrid::square(2, 8))))),
               Error);
}

TEST(Ftgrid, MissingFileIsIo) {
  try {
    read_ftgrid(std::filesystem::path("/nonexistent/x.ftgrid"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Io);
  }
}

TEST(Json, PlanFormat) {
  const Json j = to_json(plan_decomposition(3, cls("e1", 2), cls("e1*e2", 2), std::nullopt, 2));
  EXPECT_EQ(j.at("verdict"), "Splits");
  EXPECT_TRUE(j.at("centers").is_array());
  EXPECT_TRUE(j.at("euler").is_null());
  const Json o = to_json(plan_decomposition(2, Z2Class(2), cls("e1*e2", 2), 1, 2));
  EXPECT_EQ(o.at("verdict"), "Obstructed(1)");
  EXPECT_EQ(o.at("euler"), 1);
}

TEST(Json, InvariantsAndDecay) {
  const Json c = to_json(chern_numbers(sample_projector(model_qwz(1.0), KGrid::square(2, 16))));
  EXPECT_EQ(c, Json::parse(R"({"12": -1})"));
  DecayReport r;
  EXPECT_TRUE(to_json(r).at("compact_support").get<bool>());
  r.fit_points = 4;
  EXPECT_FALSE(to_json(r).at("compact_support").get<bool>());
  EXPECT_EQ(dump(Json::parse(R"({"b":1,"a":2})")), "{\n  \"a\": 2,\n  \"b\": 1\n}\n");
}

TEST(Csv, Headers) {
  std::ostringstream decay;
  DecayReport r;
  r.shells.push_back({1.0, 0.5, 0.25});
  write_decay_csv(decay, r);
  EXPECT_EQ(decay.str().substr(0, decay.str().find('\n')), "radius,max_abs,shell_mass");
  std::ostringstream nodes;
  write_node_csv(nodes, sample_projector(model_qwz(1.0), KGrid::square(2, 8)));
  const std::string text = nodes.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "node,t1,t2,orthonormality,idempotency,commutator,link_sigma1,link_sigma2");
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 65);
}
