#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "gfpack/dataset.hpp"
#include "gfpack/io.hpp"
#include "test_support.hpp"

namespace gfpack {
namespace {

using namespace dataset;

void expect_ground_truth(const Puzzle& p) {
  const auto& gt = p.ground_truth;
  const double b = area(gt.container.polygon());
  EXPECT_NEAR(union_area(gt.placed()), b, 1e-6 * b);
  EXPECT_LT(collision::overlap_area(gt).total, 1e-9 * gt.total_area());
  EXPECT_NEAR(utilization(gt).value, 1.0, 1e-9);
  EXPECT_NEAR(iou(gt), 1.0, 1e-9);
  EXPECT_TRUE(feasibility(gt).feasible);
}

TEST(GeneratePuzzle, TwoFragmentsSplitTheArea) {
  auto spec = square16(1);
  spec.fragments = 2;
  const auto p = generate_puzzle(spec);
  ASSERT_EQ(p.fragments.size(), 2u);
  EXPECT_NEAR(area(p.fragments[0]) + area(p.fragments[1]), kDefaultSide * kDefaultSide,
              1e-9 * kDefaultSide * kDefaultSide);
  expect_ground_truth(p);
}

TEST(GeneratePuzzle, Square16GroundTruth) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto p = generate_puzzle(square16(seed));
    ASSERT_EQ(p.fragments.size(), 16u);
    for (const auto& f : p.fragments) {
      EXPECT_GE(area(f), 0.02 * kDefaultSide * kDefaultSide * (1 - 1e-12));
      EXPECT_NEAR(norm(centroid(f)), 0.0, 1e-6);
    }
    expect_ground_truth(p);
  }
}

TEST(GeneratePuzzle, ArbitraryPresetGroundTruth) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto spec = arbitrary(seed);
    EXPECT_NEAR(area(spec.boundary), kDefaultSide * kDefaultSide, 1e-6 * kDefaultSide * kDefaultSide);
    const auto p = generate_puzzle(spec);
    ASSERT_EQ(p.fragments.size(), 10u);
    expect_ground_truth(p);
  }
}

TEST(GeneratePuzzle, NonConvexBoundary) {
  PuzzleSpec spec;
  spec.boundary = testing::l_shape(1000);
  spec.fragments = 8;
  spec.rng_seed = 4;
  expect_ground_truth(generate_puzzle(spec));
}

TEST(GeneratePuzzle, DeterministicUnderSeed) {
  const auto a = generate_puzzle(square16(42));
  const auto b = generate_puzzle(square16(42));
  EXPECT_EQ(io::to_json(a.ground_truth).dump(), io::to_json(b.ground_truth).dump());
  const auto c = generate_puzzle(square16(43));
  EXPECT_NE(io::to_json(a.ground_truth).dump(), io::to_json(c.ground_truth).dump());
}

TEST(GeneratePuzzle, ImpossibleSpecFails) {
  auto spec = square16(0);
  spec.fragments = 60;  // 60 pieces of >= 2% cannot exist
  EXPECT_THROW(generate_puzzle(spec), GenerationFailed);
}

TEST(Iou, DisjointEqualAreasGiveHalf) {
  auto p = generate_puzzle(square16(3));
  for (auto& pose : p.ground_truth.poses) pose.tx += 10 * kDefaultSide;
  EXPECT_NEAR(iou(p.ground_truth), 0.0, 1e-12);

  // all pieces moved out together: boundary/(boundary + pieces) of the union
  PackingInstance one({Polygon::rectangle(1, 1)}, Container::boundary(Polygon::rectangle(1, 1)), {Pose{5, 0, 1, 0}});
  const double u = iou(one);
  EXPECT_NEAR(u, 0.0, 1e-12);
  PackingInstance half({Polygon::rectangle(2, 1)}, Container::boundary(Polygon::rectangle(2, 1)), {Pose{1, 0, 1, 0}});
  EXPECT_NEAR(iou(half), 1.0 / 3.0, 1e-12);
}

TEST(Iou, DecreasesWithJitterOnAverage) {
  std::mt19937_64 rng(5);
  double prev = 1.0 + 1e-12;
  for (double jitter : {0.005, 0.01, 0.02, 0.04}) {
    double sum = 0;
    for (int t = 0; t < 100; ++t) {
      auto p = generate_puzzle(square16(t));
      std::uniform_real_distribution<double> u(-jitter * kDefaultSide, jitter * kDefaultSide);
      for (auto& pose : p.ground_truth.poses) pose = pose.translated({u(rng), u(rng)});
      sum += iou(p.ground_truth);
    }
    const double mean = sum / 100;
    EXPECT_LT(mean, prev);
    prev = mean;
  }
}

TEST(Iou, InvariantUnderRigidMotion) {
  const auto p = generate_puzzle(square16(8));
  auto inst = p.ground_truth;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-200, 200);
  for (auto& pose : inst.poses) pose = pose.translated({u(rng), u(rng)});
  const double before = iou(inst);
  const Pose g = Pose::from_angle(500, -300, 1.1);
  std::vector<Pose> moved;
  for (const auto& a : inst.poses) {
    const Point t = g.apply(a.translation());
    moved.push_back(Pose::from_angle(t.x, t.y, a.angle() + 1.1));
  }
  const PackingInstance rotated(inst.polygons, Container::boundary(apply_pose(inst.container.polygon(), g)), moved);
  EXPECT_NEAR(iou(rotated), before, 1e-9);
}

TEST(Iou, RejectsStrip) {
  const auto p = generate_puzzle(square16(2));
  EXPECT_THROW(iou(as_strip(p)), std::invalid_argument);
  EXPECT_NEAR(utilization(as_strip(p)).value, 1.0, 1e-9);
}

TEST(Feasibility, Examples) {
  const auto sq = testing::unit_square();
  PackingInstance dup({sq, sq}, Container::strip(1), {Pose{}, Pose{}});
  EXPECT_FALSE(feasibility(dup).feasible);

  PackingInstance half({sq, sq}, Container::strip(1), {Pose{}, Pose{0.5, 0, 1, 0}});
  EXPECT_TRUE(feasibility(half, 0.5).feasible);  // inclusive at tol
  EXPECT_FALSE(feasibility(half, 0.5 - 1e-12).feasible);

  PackingInstance out({sq}, Container::strip(1), {Pose{0, 0.5, 1, 0}});
  const auto r = feasibility(out);
  EXPECT_FALSE(r.feasible);
  ASSERT_EQ(r.outside.size(), 1u);
}

TEST(Metrics, GroundTruthSummary) {
  std::vector<double> us;
  for (int s = 0; s < 5; ++s) {
    const auto m = evaluate(generate_puzzle(square16(s)).ground_truth);
    EXPECT_TRUE(m.feasible);
    EXPECT_NEAR(*m.iou, 1.0, 1e-9);
    EXPECT_LT(m.overlap_percent, 1e-7);
    us.push_back(m.utilization);
  }
  const auto s = summarize(us);
  EXPECT_NEAR(s.min, 1.0, 1e-9);
  EXPECT_NEAR(s.max, 1.0, 1e-9);
}

TEST(InstanceIo, RoundTrip) {
  const auto p = generate_puzzle(arbitrary(6));
  std::stringstream ss;
  io::save_instance(ss, p.ground_truth, {{"preset", "arbitrary"}});
  const auto back = io::load_instance(ss);
  const auto& a = p.ground_truth;
  const auto& b = back.instance;
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    ASSERT_EQ(a.polygons[i].size(), b.polygons[i].size());
    for (std::size_t k = 0; k < a.polygons[i].size(); ++k) {
      EXPECT_NEAR(a.polygons[i][k].x, b.polygons[i][k].x, 1e-12 * kDefaultSide);
      EXPECT_NEAR(a.polygons[i][k].y, b.polygons[i][k].y, 1e-12 * kDefaultSide);
    }
    EXPECT_EQ(a.poses[i].tx, b.poses[i].tx);
    EXPECT_EQ(a.poses[i].sin_t, b.poses[i].sin_t);
  }
  EXPECT_EQ(back.meta["preset"], "arbitrary");
  EXPECT_EQ(io::to_json(a, back.meta).dump(), io::to_json(b, back.meta).dump());

  const auto strip = as_strip(p);
  std::stringstream s2;
  io::save_instance(s2, strip);
  EXPECT_TRUE(io::load_instance(s2).instance.container.is_strip());
}

TEST(InstanceIo, DocumentedFixtureLoads) {
  const auto rec = io::load_instance(GFPACK_SOURCE_DIR "/docs/fixtures/two_squares_strip.json");
  ASSERT_EQ(rec.instance.size(), 2u);
  EXPECT_TRUE(rec.instance.container.is_strip());
  const auto m = evaluate(rec.instance);
  EXPECT_NEAR(m.utilization, 1.0, 1e-12);
  EXPECT_TRUE(m.feasible);
  EXPECT_EQ(rec.meta.at("note").get<std::string>().substr(0, 13), "a unit square");
}

TEST(InstanceIo, MissingPosesNamesTheField) {
  auto j = io::to_json(generate_puzzle(square16(1)).ground_truth);
  j.erase("poses");
  try {
    io::from_json(j);
    FAIL() << "expected ParseError";
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.field(), "poses");
  }
  auto k = io::to_json(generate_puzzle(square16(1)).ground_truth);
  k["poses"][3] = {1, 2, 3};
  try {
    io::from_json(k);
    FAIL() << "expected ParseError";
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.field(), "poses[3]");
  }
}

TEST(InstanceIo, JsonlErrorsReportLine) {
  const auto inst = generate_puzzle(square16(1)).ground_truth;
  std::stringstream ss;
  io::JsonlWriter w(ss);
  w.write(io::to_json(inst));
  ss << "\n";
  auto bad = io::to_json(inst);
  bad["container"].erase("kind");
  w.write(bad);
  ss << "{not json\n";
  io::JsonlReader r(ss);
  EXPECT_TRUE(r.next_instance());
  try {
    r.next_instance();
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.field(), "container.kind");
  }
  try {
    r.next();
    FAIL();
  } catch (const io::ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
  }
}

TEST(InstanceIo, StreamsLargeCorpus) {
  const auto path = std::filesystem::temp_directory_path() / "gfpack_stream_test.jsonl";
  PackingInstance inst({testing::unit_square(), testing::l_shape()}, Container::strip(3), {Pose{}, Pose{1, 0, 1, 0}});
  {
    io::JsonlWriter w(path.string());
    for (int i = 0; i < 10000; ++i) {
      inst.poses[0].tx = i;
      w.write(io::to_json(inst, {{"i", i}}));
    }
  }
  io::JsonlReader r(path.string());
  int n = 0;
  while (auto rec = r.next_instance()) {
    EXPECT_EQ(rec->meta["i"], n);
    EXPECT_EQ(rec->instance.poses[0].tx, n);
    ++n;
  }
  EXPECT_EQ(n, 10000);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace gfpack
