#include "support.hpp"

using namespace fragtop;
using namespace fragtop::testing;

namespace {

/// Every class of the ring over T^d.
std::vector<Z2Class> all_classes(int dim) {
  std::vector<Z2Class> out;
  for (int c = 0; c < (1 << (1 << dim)); ++c) out.emplace_back(dim, static_cast<std::uint8_t>(c));
  return out;
}

std::vector<Z2Class> graded_classes(int dim, int deg) {
  std::vector<Z2Class> out;
  for (const auto& c : all_classes(dim))
    if (c.is_zero() || c.degree() == deg) out.push_back(c);
  return out;
}

/// Sum of c_a and sum over a < b of c_a c_b, computed independently of sw_product.
std::pair<Z2Class, Z2Class> whitney(const std::vector<IVector>& centers, int dim) {
  Z2Class s1(dim), s2(dim);
  for (std::size_t a = 0; a < centers.size(); ++a) {
    s1 += Z2Class::from_bits(centers[a]);
    for (std::size_t b = a + 1; b < centers.size(); ++b)
      s2 += Z2Class::from_bits(centers[a]) * Z2Class::from_bits(centers[b]);
  }
  return {s1, s2};
}

}  // namespace

TEST(Z2Ring, AxiomsExhaustive) {
  for (int dim : {2, 3}) {
    const auto all = all_classes(dim);
    for (const auto& a : all)
      for (const auto& b : all) {
        EXPECT_EQ(a * b, b * a);
        for (const auto& c : all) {
          EXPECT_EQ((a * b) * c, a * (b * c));
          EXPECT_EQ(a * (b + c), a * b + a * c);
        }
      }
    for (int i = 0; i < dim; ++i) EXPECT_TRUE((Z2Class::e(dim, i) * Z2Class::e(dim, i)).is_zero());
  }
}

TEST(Z2Ring, ParseAndPrintRoundTrip) {
  for (int dim : {2, 3})
    for (const auto& c : all_classes(dim)) EXPECT_EQ(Z2Class::parse(c.str(), dim), c) << c.str();
  EXPECT_EQ(cls("e1*e2+e2*e3", 3).str(), "e1*e2+e2*e3");
  EXPECT_EQ(cls("e2*e1", 2), cls("e1*e2", 2));
  EXPECT_THROW(cls("e4", 3), Error);
  EXPECT_THROW(cls("e1++e2", 2), Error);
}

TEST(SwProduct, ThreeLineIdentityOnTwoTorus) {
  for (int a : {0, 1}) {
    const auto p = sw_product({TotalSW::line(vec({a, 0})), TotalSW::line(vec({0, a})), TotalSW::line(vec({a, a}))});
    EXPECT_EQ(p.total(), a ? cls("1+e1*e2", 2) : cls("1", 2));
  }
}

TEST(SwProduct, FourCasesOnThreeTorus) {
  auto total = [](std::initializer_list<const char*> lines) {
    std::vector<TotalSW> ts;
    for (const char* l : lines) ts.push_back(TotalSW::line(parse_center(l, 3)));
    return sw_product(ts).total();
  };
  EXPECT_EQ(total({"0", "0", "0"}), cls("1", 3));
  EXPECT_EQ(total({"e1", "e2", "e1+e2"}), cls("1+e1*e2", 3));
  EXPECT_EQ(total({"e1+e3", "e2", "e1+e2+e3"}), cls("1+e1*e2+e2*e3", 3));
  EXPECT_EQ(total({"e1+e3", "e2+e3", "e1+e2"}), cls("1+e1*e2+e2*e3+e3*e1", 3));
}

TEST(SwProduct, TrivialFactors) {
  EXPECT_EQ(sw_product({TotalSW::trivial(2, 3), TotalSW::trivial(1, 3)}).total(), Z2Class::one(3));
  EXPECT_EQ(sw_product({TotalSW::trivial(2, 3), TotalSW::trivial(1, 3)}).rank, 3);
  EXPECT_THROW(sw_product({TotalSW::trivial(1, 2), TotalSW::trivial(1, 3)}), Error);
}

TEST(SwTensorLine, Examples) {
  const TotalSW r2(2, cls("e1", 2), cls("0", 2));
  for (const auto& c : {vec({1, 0}), vec({0, 1}), vec({1, 1})}) EXPECT_EQ(sw_tensor_line(r2, c).w1, r2.w1);
  EXPECT_EQ(sw_tensor_line(TotalSW::trivial(3, 2), vec({1, 0})).w1, cls("e1", 2));
  EXPECT_TRUE(sw_tensor_line(TotalSW::line(vec({1, 1})), vec({1, 1})).w1.is_zero());
}

TEST(SwTensorLine, InvolutionAndAgreementWithLineSums) {
  for (int dim : {2, 3})
    for (int r = 1; r <= 4; ++r)
      for (const auto& w1c : graded_classes(dim, 1))
        for (const auto& w2c : graded_classes(dim, 2)) {
          if (r < 2 && !w2c.is_zero()) continue;
          const TotalSW e(r, w1c, w2c);
          for (const auto& cc : graded_classes(dim, 1)) {
            const IVector c = cc.bits();
            EXPECT_EQ(sw_tensor_line(sw_tensor_line(e, c), c), e);
          }
        }
  // On a sum of lines, tensoring shifts every line class by c.
  const std::vector<IVector> lines = {vec({1, 0, 0}), vec({0, 1, 1}), vec({1, 1, 0})};
  std::vector<TotalSW> plain, shifted;
  const IVector c = vec({0, 1, 0});
  for (const auto& l : lines) {
    plain.push_back(TotalSW::line(l));
    shifted.push_back(TotalSW::line(detail::add_mod2(l, c)));
  }
  EXPECT_EQ(sw_tensor_line(sw_product(plain), c), sw_product(shifted));
}

TEST(Planner, Examples) {
  EXPECT_EQ(center_strings(plan_decomposition(3, cls("0", 2), cls("e1*e2", 2), std::nullopt, 2)),
            (std::vector<std::string>{"e1", "e2", "e1+e2"}));
  const auto obstructed = plan_decomposition(2, cls("0", 2), cls("e1*e2", 2), 1, 2);
  EXPECT_FALSE(obstructed.splits());
  EXPECT_EQ(obstructed.verdict_str(), "Obstructed(1)");
  EXPECT_EQ(center_strings(plan_decomposition(3, cls("0", 3), cls("e1*e2+e2*e3", 3), std::nullopt, 3)),
            (std::vector<std::string>{"e1+e3", "e2", "e1+e2+e3"}));
  EXPECT_EQ(center_strings(plan_decomposition(4, cls("0", 2), cls("e1*e2", 2), std::nullopt, 2)),
            (std::vector<std::string>{"e1", "e2", "e1+e2", "0"}));
  EXPECT_EQ(center_strings(plan_decomposition(1, cls("e2", 2), cls("0", 2), std::nullopt, 2)),
            (std::vector<std::string>{"e2"}));
  const auto split2 = plan_decomposition(2, cls("0", 2), cls("0", 2), 0, 2);
  EXPECT_EQ(center_strings(split2), (std::vector<std::string>{"0", "0"}));
}

TEST(Planner, MissingEuler) {
  try {
    plan_decomposition(2, cls("0", 2), cls("0", 2), std::nullopt, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingEuler);
  }
}

TEST(Planner, SoundnessExhaustive) {
  for (int dim : {2, 3})
    for (int rank : {3, 4})
      for (const auto& w1c : graded_classes(dim, 1))
        for (const auto& w2c : graded_classes(dim, 2)) {
          const auto plan = plan_decomposition(rank, w1c, w2c, std::nullopt, dim);
          ASSERT_TRUE(plan.splits());
          ASSERT_EQ(static_cast<int>(plan.centers.size()), rank);
          const auto [s1, s2] = whitney(plan.centers, dim);
          EXPECT_EQ(s1, w1c) << "w1 " << w1c.str() << " w2 " << w2c.str();
          EXPECT_EQ(s2, w2c) << "w1 " << w1c.str() << " w2 " << w2c.str();
          const TotalSW t = plan_total(plan, dim);
          EXPECT_EQ(t.w1, w1c);
          EXPECT_EQ(t.w2, w2c);
        }
}

TEST(Planner, VerdictAgreement) {
  for (int e = -3; e <= 3; ++e) {
    const Z2Class w2c = (e % 2) ? cls("e1*e2", 2) : cls("0", 2);
    const auto plan = plan_decomposition(2, cls("0", 2), w2c, e, 2);
    EXPECT_EQ(plan.splits(), e == 0) << e;
  }
  for (int rank : {1, 3, 4})
    for (const auto& w1c : graded_classes(2, 1))
      for (const auto& w2c : graded_classes(2, 2)) {
        if (rank == 1 && !w2c.is_zero()) continue;
        EXPECT_TRUE(plan_decomposition(rank, w1c, w2c, std::nullopt, 2).splits());
      }
}

TEST(Planner, NonOrientableRankTwoExtension) {
  for (int dim : {2, 3})
    for (const auto& w1c : graded_classes(dim, 1)) {
      if (w1c.is_zero()) continue;
      for (const auto& w2c : graded_classes(dim, 2)) {
        const auto plan = plan_decomposition(2, w1c, w2c, std::nullopt, dim);
        EXPECT_TRUE(plan.extension);
        if (!plan.splits()) continue;
        const auto [s1, s2] = whitney(plan.centers, dim);
        EXPECT_EQ(s1, w1c);
        EXPECT_EQ(s2, w2c);
      }
    }
  // w1 = e1, w2 = e1 e2 is realised by L_e2 + L_(e1+e2).
  EXPECT_TRUE(plan_decomposition(2, cls("e1", 2), cls("e1*e2", 2), std::nullopt, 2).splits());
}

TEST(ComplexNormalForm, Examples) {
  EXPECT_EQ(complex_normal_form(2, {{"12", -1}}).str(), "trivial + L(12:-1)");
  EXPECT_EQ(complex_normal_form(1, {{"12", 0}}).str(), "trivial");
  EXPECT_EQ(complex_normal_form(3, {{"12", 2}}).str(), "trivial^2 + L(12:2)");
  EXPECT_EQ(complex_normal_form(3, {{"12", 2}}).trivial_lines, 2);
}
