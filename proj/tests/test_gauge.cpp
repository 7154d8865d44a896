#include "support.hpp"

using namespace fragtop;
using namespace fragtop::testing;

namespace {

RealProjectorGrid nvec_window(int g, int n) {
  return real_subbundle(sample_projector(model_nvec(g), KGrid::square(2, n)));
}

}  // namespace

TEST(SmoothFrame, TrivialQwzPhase) {
  const ProjectorGrid e = sample_projector(model_qwz(3.0), KGrid::square(2, 32));
  const FrameField f = smooth_frame(e);
  const FrameQuality q = frame_quality(f);
  EXPECT_LT(q.equivariance, 1e-8);
  EXPECT_LT(q.orthonormality, 1e-10);
  EXPECT_LT(q.max_gradient, 1.0);
  EXPECT_LT(span_residual(f, e), 1e-8);
}

TEST(SmoothFrame, ConstantProjectorGivesConstantFrame) {
  const ProjectorGrid e = sample_projector(model_constant(3, 2), KGrid::square(2, 8));
  const FrameField f = smooth_frame(e);
  EXPECT_LT(frame_quality(f).max_gradient, 1e-12);
  EXPECT_LT(span_residual(f, e), 1e-12);
}

TEST(SmoothFrame, RefusesChernBundles) {
  try {
    smooth_frame(sample_projector(model_qwz(1.0), KGrid::square(2, 32)));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ChernObstruction);
    EXPECT_NE(std::string(e.what()).find("(1,2) Chern -1"), std::string::npos) << e.what();
  }
}

TEST(SmoothFrame, RefusalSoundnessOverZoo) {
  const KGrid g = KGrid::square(2, 32);
  std::vector<ProjectorGrid> zoo;
  for (Real m : {-3.0, -1.0, 1.0, 3.0}) zoo.push_back(sample_projector(model_qwz(m), g));
  zoo.push_back(direct_sum(zoo[1], zoo[2]));
  zoo.push_back(sample_projector(model_nvec(1), g));
  zoo.push_back(sample_projector(model_real_line(2), g));
  for (const auto& e : zoo) {
    const bool chern_zero = chern_number(e, {0, 1}).value == 0;
    bool refused = false;
    try {
      const FrameField f = smooth_frame(e);
      EXPECT_LT(span_residual(f, e), 1e-8);
    } catch (const Error& err) {
      refused = err.kind() == ErrorKind::ChernObstruction;
    }
    EXPECT_EQ(refused, !chern_zero);
  }
}

TEST(SmoothFrame, GradientBoundedUnderRefinement) {
  Real previous = 0;
  for (int n : {16, 32, 64}) {
    const Real grad = frame_quality(smooth_frame(sample_projector(model_qwz(3.0), KGrid::square(2, n)))).max_gradient;
    if (previous > 0) EXPECT_LT(grad, 1.2 * previous);
    previous = grad;
  }
}

TEST(CompatibleFrame, FragileRankThree) {
  const KGrid g = KGrid::square(2, 32);
  const RealProjectorGrid e = direct_sum(nvec_window(1, 32), model_line_lc(vec({0, 0}), g));
  const auto [w1c, w2c] = sw_classes(stiefel_whitney(e), 2);
  const DecompositionPlan plan = plan_decomposition(3, w1c, w2c, std::nullopt, 2);
  ASSERT_EQ(center_strings(plan), (std::vector<std::string>{"e1", "e2", "e1+e2"}));
  const FrameField f = compatible_real_frame(e, plan);
  const FrameQuality q = frame_quality(f);
  EXPECT_LT(q.compatibility, 1e-8);
  EXPECT_LT(q.orthonormality, 1e-10);
  EXPECT_LT(span_residual(f, e), 1e-8);
  ASSERT_EQ(f.labels.size(), 3u);
  for (std::size_t a = 0; a < 3; ++a) EXPECT_EQ(center_str(f.labels[a]), center_str(plan.centers[a]));
}

TEST(CompatibleFrame, TrivialRankTwo) {
  const KGrid g = KGrid::square(2, 16);
  const RealProjectorGrid e = model_trivial_real(2, g);
  const auto plan = plan_decomposition(2, Z2Class(2), Z2Class(2), 0, 2);
  const FrameField f = compatible_real_frame(e, plan);
  EXPECT_LT(frame_quality(f).max_gradient, 1e-12);
  EXPECT_LT(frame_quality(f).compatibility, 1e-12);
}

TEST(CompatibleFrame, ObstructedPlanRefused) {
  const RealProjectorGrid e = nvec_window(1, 32);
  const auto plan = plan_decomposition(2, Z2Class(2), Z2Class::parse("e1*e2", 2), euler_number(e, {0, 1}).value, 2);
  try {
    compatible_real_frame(e, plan);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::PlanObstructed);
  }
}

TEST(CompatibleFrame, LineBundlesCarryTheirTwist) {
  const KGrid g = KGrid::square(2, 16);
  for (const IVector& c : {vec({0, 0}), vec({1, 0}), vec({0, 1}), vec({1, 1})}) {
    DecompositionPlan plan;
    plan.centers = {c};
    const FrameField f = compatible_real_frame(model_line_lc(c, g), plan);
    EXPECT_LT(frame_quality(f).compatibility, 1e-12);
    EXPECT_LT(frame_quality(f).equivariance, 1e-12);
  }
}

TEST(FrameQuality, SeamKinkNonIncreasingUnderRefinement) {
  const Real coarse = frame_quality(smooth_frame(sample_projector(model_qwz(3.0), KGrid::square(2, 32)))).seam_kink;
  const Real fine = frame_quality(smooth_frame(sample_projector(model_qwz(3.0), KGrid::square(2, 64)))).seam_kink;
  EXPECT_LE(fine, coarse + 1e-12);
}

TEST(FrameQuality, RandomGaugeFlagged) {
  const FrameField f = smooth_frame(sample_projector(model_qwz(3.0), KGrid::square(2, 32)));
  const FrameQuality smooth = frame_quality(f);
  const FrameQuality rough = frame_quality(with_random_gauge(f, 11));
  EXPECT_GT(rough.max_gradient, 5.0 * smooth.max_gradient);
  EXPECT_LT(rough.equivariance, 1e-8);
}

TEST(FrameQuality, VortexIsSingular) {
  const FrameField f = smooth_frame(sample_projector(model_qwz(3.0), KGrid::square(2, 32)));
  EXPECT_GT(frame_quality(with_vortex(f, 0)).max_gradient, 3.0 * frame_quality(f).max_gradient);
}
