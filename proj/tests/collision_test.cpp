#include <gtest/gtest.h>

#include <random>

#include "gfpack/collision.hpp"
#include "test_support.hpp"

namespace gfpack {
namespace {

using namespace collision;
using testing::l_shape;
using testing::unit_square;

double parts_area(const ConvexDecomposition& d) {
  double s = 0;
  for (const auto& p : d.parts) s += area(p);
  return s;
}

void expect_valid_decomposition(const Polygon& p, const ConvexDecomposition& d) {
  EXPECT_NEAR(parts_area(d), area(p), 1e-9 * area(p));
  for (const auto& part : d.parts) EXPECT_TRUE(is_convex(part));
  for (std::size_t i = 0; i < d.parts.size(); ++i) {
    for (std::size_t j = i + 1; j < d.parts.size(); ++j) {
      EXPECT_LT(convex_intersection_area(d.parts[i].vertices(), d.parts[j].vertices()), 1e-9 * area(p));
    }
  }
}

TEST(ConvexDecompose, ConvexInputIsSinglePart) {
  const Polygon pent({{0, 0}, {2, 0}, {3, 1.5}, {1, 3}, {-1, 1.5}});
  const auto d = convex_decompose(pent);
  ASSERT_EQ(d.parts.size(), 1u);
  EXPECT_EQ(d.parts[0], pent);
}

TEST(ConvexDecompose, LShapeSplitsInTwo) {
  const auto l = l_shape();
  const auto d = convex_decompose(l);
  EXPECT_EQ(d.parts.size(), 2u);
  expect_valid_decomposition(l, d);
}

TEST(ConvexDecompose, RandomTwentyGons) {
  std::mt19937_64 rng(21);
  for (int k = 0; k < 200; ++k) {
    const auto p = testing::random_star(rng, {0, 0}, 100.0, 20);
    expect_valid_decomposition(p, convex_decompose(p));
  }
}

TEST(SatMtv, AxisAlignedSquares) {
  const auto m = sat_mtv(unit_square({0.7, 0}), unit_square());
  ASSERT_TRUE(m);
  EXPECT_NEAR(m->dx, 0.3, 1e-12);
  EXPECT_NEAR(m->dy, 0.0, 1e-12);
  EXPECT_NEAR(m->depth, 0.3, 1e-12);
  EXPECT_FALSE(sat_mtv(unit_square({2, 0}), unit_square()));
  EXPECT_FALSE(sat_mtv(unit_square({1, 0}), unit_square()));  // touching
}

TEST(SatMtv, MatchesBruteForceOracle) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int checked = 0;
  while (checked < 100) {
    const auto a = testing::random_convex(rng, {u(rng), u(rng)}, 2.0);
    const auto b = testing::random_convex(rng, {0, 0}, 2.0);
    const auto m = sat_mtv(a, b);
    if (!m) continue;
    ++checked;
    const double oracle = testing::brute_force_mtv(a, b);
    EXPECT_NEAR(m->depth, oracle, 0.01 * oracle);
    const auto moved = translated(a, m->vec());
    EXPECT_LT(convex_intersection_area(moved.vertices(), b.vertices()), 1e-9);
  }
}

TEST(SatMtv, AntiSymmetric) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    const auto a = testing::random_convex(rng, {u(rng), u(rng)}, 1.5);
    const auto b = testing::random_convex(rng, {u(rng), u(rng)}, 1.5);
    const auto ab = sat_mtv(a, b), ba = sat_mtv(b, a);
    ASSERT_EQ(ab.has_value(), ba.has_value());
    if (!ab) continue;
    EXPECT_NEAR(ab->dx, -ba->dx, 1e-9);
    EXPECT_NEAR(ab->dy, -ba->dy, 1e-9);
  }
}

TEST(SeparationVector, DisjointAndConvexReduction) {
  const auto sq = unit_square();
  EXPECT_TRUE(separation_vector(sq, Pose{5, 0, 1, 0}, sq, Pose{}).zero());

  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 100; ++k) {
    const auto a = testing::random_convex(rng, {}, 1.5);
    const auto b = testing::random_convex(rng, {}, 1.5);
    const Pose pa = Pose::from_angle(u(rng), u(rng), 3 * u(rng)), pb = Pose::from_angle(u(rng), u(rng), 3 * u(rng));
    const auto v = separation_vector(a, pa, b, pb);
    const auto m = sat_mtv(apply_pose(a, pa), apply_pose(b, pb));
    if (!m) {
      EXPECT_TRUE(v.zero());
      continue;
    }
    EXPECT_NEAR(v.dx, m->dx, 1e-9);
    EXPECT_NEAR(v.dy, m->dy, 1e-9);
  }
}

TEST(SeparationVector, LShapeAgainstSquareTouchingOnePart) {
  const auto l = l_shape();
  const auto sq = unit_square();
  const Pose sq_pose{1.7, 0.1, 1, 0};
  const auto v = separation_vector(l, Pose{}, sq, sq_pose);
  EXPECT_NEAR(v.dx, -0.3, 1e-12);
  EXPECT_NEAR(v.dy, 0.0, 1e-12);

  const PlacedShape ls(l, convex_decompose(l), Pose{});
  const auto placed_sq = apply_pose(sq, sq_pose);
  int overlapping_parts = 0;
  for (const auto& part : ls.parts) {
    if (const auto m = sat_mtv(part, placed_sq)) {
      ++overlapping_parts;
      EXPECT_NEAR(m->dx, v.dx, 1e-12);
      EXPECT_NEAR(m->dy, v.dy, 1e-12);
    }
  }
  EXPECT_EQ(overlapping_parts, 1);
}

TEST(SeparationVector, TranslationEquivariant) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 100; ++k) {
    const auto a = testing::random_star(rng, {}, 1.5, 8);
    const auto b = testing::random_star(rng, {}, 1.5, 8);
    const Pose pa = Pose::from_angle(u(rng), u(rng), 3 * u(rng)), pb = Pose::from_angle(u(rng), u(rng), 3 * u(rng));
    const Point shift{100 * u(rng), 100 * u(rng)};
    const auto v0 = separation_vector(a, pa, b, pb);
    const auto v1 = separation_vector(a, pa.translated(shift), b, pb.translated(shift));
    EXPECT_NEAR(v0.dx, v1.dx, 1e-9);
    EXPECT_NEAR(v0.dy, v1.dy, 1e-9);
  }
}

TEST(SeparationVector, ConvexApplicationSeparatesExactly) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 200; ++k) {
    const auto a = testing::random_convex(rng, {u(rng), u(rng)}, 1.5);
    const auto b = testing::random_convex(rng, {}, 1.5);
    const auto v = separation_vector(a, Pose{}, b, Pose{});
    const auto moved = translated(a, v.vec());
    EXPECT_LT(convex_intersection_area(moved.vertices(), b.vertices()), 1e-9);
  }
}

TEST(SeparationVector, CoincidentSquaresTieBreakByIndex) {
  const auto sq = unit_square();
  const auto lo = separation_vector(sq, Pose{}, sq, Pose{}, true);
  const auto hi = separation_vector(sq, Pose{}, sq, Pose{}, false);
  EXPECT_NEAR(lo.dx, 1.0, 1e-12);
  EXPECT_NEAR(hi.dx, -1.0, 1e-12);
  EXPECT_NEAR(lo.dy, 0.0, 1e-12);
}

TEST(BoundaryOffset, StripClamp) {
  const auto c = Container::strip(3.0);
  const auto sq = unit_square();
  const Point in = boundary_offset(sq, Pose{1, 1, 1, 0}, c);
  EXPECT_EQ(in.x, 0.0);
  EXPECT_EQ(in.y, 0.0);
  const Point top = boundary_offset(sq, Pose{1, 2.2, 1, 0}, c);
  EXPECT_NEAR(top.x, 0.0, 1e-12);
  EXPECT_NEAR(top.y, -0.2, 1e-12);
  const Point left = boundary_offset(sq, Pose{-0.5, -0.1, 1, 0}, c);
  EXPECT_NEAR(left.x, 0.5, 1e-12);
  EXPECT_NEAR(left.y, 0.1, 1e-12);
}

TEST(BoundaryOffset, LShapedBoundaryMatchesSearchOracle) {
  const auto c = Container::boundary(l_shape(5.0));
  const auto sq = unit_square();
  const std::vector<Pose> poses{
      {9.5, 1.0, 1, 0},   // right edge of lower arm
      {3.0, 4.7, 1, 0},   // top of lower arm
      {1.0, 9.6, 1, 0},   // top of upper arm
      {-0.3, -0.2, 1, 0}, // bottom-left corner
      Pose::from_angle(8.5, 4.0, 0.5),
  };
  for (const auto& pose : poses) {
    const Point o = boundary_offset(sq, pose, c);
    const auto placed = apply_pose(sq, pose);
    EXPECT_TRUE(inside_container(translated(placed, o), c, 1e-6)) << pose.tx << "," << pose.ty;
    const double oracle = testing::min_containment_offset(placed, c, 2.0);
    EXPECT_LE(norm(o), oracle * 1.05 + 1e-6) << pose.tx << "," << pose.ty;
  }
  EXPECT_EQ(norm(boundary_offset(sq, Pose{2, 2, 1, 0}, c)), 0.0);
}

TEST(OverlapArea, Examples) {
  const auto sq = unit_square();
  PackingInstance disjoint({sq, sq}, Container::strip(2), {Pose{}, Pose{1, 0, 1, 0}});
  EXPECT_EQ(overlap_area(disjoint).total, 0.0);

  PackingInstance half({sq, sq}, Container::strip(2), {Pose{}, Pose{0.5, 0, 1, 0}});
  const auto r = overlap_area(half);
  EXPECT_NEAR(r.total, 0.5, 1e-12);
  EXPECT_NEAR(r.percent, 25.0, 1e-9);
  ASSERT_EQ(r.pairs.size(), 1u);

  PackingInstance swapped({sq, sq}, Container::strip(2), {Pose{0.5, 0, 1, 0}, Pose{}});
  EXPECT_NEAR(overlap_area(swapped).total, r.total, 1e-15);
}

TEST(OverlapArea, NonConvexMatchesUnionOracle) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int k = 0; k < 30; ++k) {
    const auto a = testing::random_star(rng, {}, 2.0, 9);
    const auto b = testing::random_star(rng, {}, 2.0, 9);
    PackingInstance inst({a, b}, Container::strip(100), {Pose{}, Pose::from_angle(u(rng), u(rng), 3 * u(rng))});
    const auto placed = inst.placed();
    const double expect = area(placed[0]) + area(placed[1]) - union_area(placed);
    EXPECT_NEAR(overlap_area(inst).total, expect, 1e-9);
  }
}


TEST(SeparationVector, NonConvexSinglePairContactEqualsPartMtv) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1, 1);
  int single = 0;
  for (int k = 0; k < 400; ++k) {
    const auto a = testing::random_star(rng, {}, 1.5, 8);
    const auto b = testing::random_star(rng, {}, 1.5, 8);
    const Pose pa = Pose::from_angle(2.0 * u(rng), 2.0 * u(rng), 3 * u(rng));
    const PlacedShape sa(a, convex_decompose(a), pa);
    const PlacedShape sb(b, convex_decompose(b), Pose{});
    int contacts = 0;
    std::optional<SeparationVector> only;
    for (const auto& pa_part : sa.parts) {
      for (const auto& pb_part : sb.parts) {
        const auto m = collision::detail::convex_mtv(pa_part.vertices(), pb_part.vertices(), sa.center - sb.center, {1, 0});
        if (m) only = m;
        contacts += m.has_value();
      }
    }
    if (contacts != 1) continue;
    ++single;
    const auto v = separation(sa, sb);
    EXPECT_NEAR(v.dx, only->dx, 1e-12);
    EXPECT_NEAR(v.dy, only->dy, 1e-12);
  }
  EXPECT_GT(single, 20);
}

TEST(SeparationVector, NonConvexRepeatedApplicationSeparates) {
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-1, 1);
  int overlapping = 0, separated = 0;
  for (int k = 0; k < 300; ++k) {
    const auto a = testing::random_star(rng, {}, 1.5, 8);
    const auto b = testing::random_star(rng, {}, 1.5, 8);
    const auto da = convex_decompose(a), db = convex_decompose(b);
    Pose pa = Pose::from_angle(1.5 * u(rng), 1.5 * u(rng), 3 * u(rng));
    const PlacedShape sb(b, db, Pose{});
    if (separation(PlacedShape(a, da, pa), sb).zero()) continue;
    ++overlapping;
    for (int step = 0; step < 50; ++step) {
      const auto v = separation(PlacedShape(a, da, pa), sb);
      if (v.zero()) break;
      pa = pa.translated(v.vec());
    }
    separated += intersection_area(PlacedShape(a, da, pa), sb) < 1e-9;
  }
  EXPECT_EQ(separated, overlapping);
}

}  // namespace
}  // namespace gfpack
