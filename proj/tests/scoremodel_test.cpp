#include <gtest/gtest.h>

#include <filesystem>
#include <numeric>
#include <random>

#include "gfpack/dataset.hpp"
#include "gfpack/gradcheck.hpp"
#include "gfpack/scoremodel.hpp"

namespace gfpack::model {
namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double s = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-s, s);
  Matrix m(r, c);
  for (double& v : m.data) v = u(rng);
  return m;
}

void expect_near(const Matrix& a, const Matrix& b, double tol) {
  ASSERT_TRUE(a.same_shape(b)) << ad::shape_str(a) << " vs " << ad::shape_str(b);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a.data[i], b.data[i], tol) << "entry " << i;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out(i, j) = m(perm[i], j);
  }
  return out;
}

ContourGraph cycle_graph(std::size_t n) {
  ContourGraph g;
  g.nodes = n;
  for (std::size_t i = 0; i < n; ++i) g.edges.emplace_back(i, (i + 1) % n);
  g.features.assign(n, {0.0, 0.0, 0.0});
  return g;
}

/// A small strip problem built from a puzzle, with its ground-truth poses.
teacher::TeacherRecord puzzle_record(std::uint64_t seed, int fragments, double side = 2.0) {
  dataset::PuzzleSpec spec;
  spec.boundary = Polygon::rectangle(side, side);
  spec.fragments = fragments;
  spec.rng_seed = seed;
  spec.scramble = false;
  const auto p = dataset::generate_puzzle(spec);
  return {dataset::as_strip(p), 1.0, json::object()};
}

ModelConfig tiny_config(int variant) {
  ModelConfig c = ModelConfig::toy();
  switch (variant) {
    case 0:
      break;
    case 1:
      c.gcn_layers = 1;
      c.d_p = 6;
      c.d_a = 6;
      c.d_b = 5;
      c.d_t = 3;
      c.enc_layers = 1;
      c.dec_layers = 1;
      c.heads = 3;
      break;
    default:
      c.gcn_layers = 3;
      c.d_p = 8;
      c.d_a = 4;
      c.d_b = 8;
      c.d_t = 4;
      c.enc_layers = 1;
      c.dec_layers = 2;
      c.heads = 4;
      c.ff_mult = 1;
      break;
  }
  return c;
}

// ---------------------------------------------------------------- layers

TEST(GcnLayer, SingleNodeIsReluOfProduct) {
  ContourGraph g;
  g.nodes = 1;
  g.features = {{0.0, 0.0, 0.0}};
  const Matrix s = normalized_adjacency(g);
  EXPECT_DOUBLE_EQ(s(0, 0), 1.0);
  Tape t(false);
  const Matrix h(1, 2, {1.0, -2.0});
  const Matrix w(2, 3, {1, 0, -1, 0, 1, 1});
  const Var out = gcn_layer(t.constant(h), t.constant(s), t.constant(w));
  EXPECT_EQ(out.value().data, (std::vector<double>{1.0, 0.0, 0.0}));
}

TEST(GcnLayer, CycleNormalizationIsOneThird) {
  for (std::size_t n : {3u, 4u, 9u}) {
    const Matrix s = normalized_adjacency(cycle_graph(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const bool linked = i == j || (i + 1) % n == j || (j + 1) % n == i;
        EXPECT_NEAR(s(i, j), linked ? 1.0 / 3.0 : 0.0, 1e-15);
      }
    }
  }
}

TEST(GcnLayer, NodePermutationPermutesRows) {
  const auto poly = Polygon({{0, 0}, {4, 0}, {4, 1}, {2, 3}, {1, 1.5}, {0, 2}});
  const auto g = contour_graph(poly, 4.0);
  const Matrix s = normalized_adjacency(g), h = random_matrix(g.nodes, 3, 1), w = random_matrix(3, 5, 2);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Matrix sp(s.rows, s.cols);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (std::size_t j = 0; j < perm.size(); ++j) sp(i, j) = s(perm[i], perm[j]);
  }
  Tape t(false);
  const Matrix base = gcn_layer(t.constant(h), t.constant(s), t.constant(w)).value();
  const Matrix moved = gcn_layer(t.constant(permute_rows(h, perm)), t.constant(sp), t.constant(w)).value();
  expect_near(moved, permute_rows(base, perm), 1e-14);
}

TEST(ResidualCombine, SkipAndIdentityCases) {
  Tape t(false);
  const Matrix old = random_matrix(3, 2, 3), proj = random_matrix(2, 4, 4), fresh = random_matrix(3, 4, 5);
  const Var skip = residual_combine(t.constant(Matrix(3, 4)), t.constant(old), t.constant(proj));
  expect_near(skip.value(), ad::matmul(old, proj), 1e-15);
  const Var same = residual_combine(t.constant(fresh), t.constant(Matrix(3, 4)));
  expect_near(same.value(), fresh, 0.0);
  EXPECT_THROW(residual_combine(t.constant(fresh), t.constant(old)), ad::ShapeError);
  EXPECT_THROW(residual_combine(t.constant(fresh), t.constant(Matrix(2, 4))), ad::ShapeError);
}

TEST(ResidualCombine, GradientReachesBothBranches) {
  const auto r = ad::check_inputs(
      {random_matrix(3, 2, 6), random_matrix(2, 4, 7), random_matrix(2, 4, 8)},
      [](Tape& t, const std::vector<Var>& v) {
        const Var fresh = ad::tanh(ad::matmul(v[0], v[2]));
        return ad::sum(ad::mul(residual_combine(fresh, v[0], v[1]), t.constant(random_matrix(3, 4, 9))));
      });
  EXPECT_LT(r.max_rel_error, 1e-7) << r.worst;
}

TEST(Attention, SingleKeyBroadcastsValue) {
  Tape t(false);
  Matrix w;
  const Var out = attention(t.constant(random_matrix(4, 3, 10)), t.constant(random_matrix(1, 3, 11)),
                            t.constant(Matrix(1, 2, {5.0, -1.0})), &w);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(w(i, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.value()(i, 0), 5.0);
    EXPECT_DOUBLE_EQ(out.value()(i, 1), -1.0);
  }
}

TEST(Attention, IdenticalKeysAverageValues) {
  Tape t(false);
  Matrix k(5, 3);
  for (std::size_t i = 0; i < 5; ++i) k(i, 0) = 0.3, k(i, 1) = -1.2, k(i, 2) = 2.0;
  const Matrix v = random_matrix(5, 2, 12);
  const Var out = attention(t.constant(random_matrix(2, 3, 13)), t.constant(k), t.constant(v));
  for (std::size_t j = 0; j < 2; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < 5; ++i) mean += v(i, j) / 5.0;
    EXPECT_NEAR(out.value()(0, j), mean, 1e-14);
    EXPECT_NEAR(out.value()(1, j), mean, 1e-14);
  }
}

TEST(Attention, LargeQueryScaleApproachesArgmax) {
  Tape t(false);
  const Matrix k(3, 2, {1, 0, 0, 1, -1, -1});
  const Matrix v(3, 1, {10, 20, 30});
  Matrix q(1, 2, {0.2, 0.5});
  for (double& x : q.data) x *= 1e3;
  Matrix w;
  const Var out = attention(t.constant(q), t.constant(k), t.constant(v), &w);
  EXPECT_NEAR(w(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(out.value()(0, 0), 20.0, 1e-9);
}

TEST(Attention, ShapeErrors) {
  Tape t(false);
  EXPECT_THROW(attention(t.constant(Matrix(2, 3)), t.constant(Matrix(4, 2)), t.constant(Matrix(4, 1))),
               ad::ShapeError);
  EXPECT_THROW(attention(t.constant(Matrix(2, 3)), t.constant(Matrix(4, 3)), t.constant(Matrix(3, 1))),
               ad::ShapeError);
  EXPECT_THROW(attention_pool(t.constant(Matrix(0, 3)), t.constant(Matrix(1, 3))), ad::ShapeError);
}

TEST(AttentionPool, OneNodeAndDuplicates) {
  Tape t(false);
  const Matrix h = random_matrix(4, 3, 14), q = random_matrix(1, 3, 15);
  const Matrix node(1, 3, {h(2, 0), h(2, 1), h(2, 2)});
  const Matrix one = attention_pool(t.constant(node), t.constant(q)).value();
  expect_near(one, node, 0.0);
  const Matrix once = attention_pool(t.constant(h), t.constant(q)).value();
  const Matrix twice = attention_pool(ad::concat_rows({t.constant(h), t.constant(h)}), t.constant(q)).value();
  expect_near(twice, once, 1e-14);
}

TEST(AttentionPool, OutputInsideNodeBox) {
  Tape t(false);
  const Matrix h = random_matrix(6, 4, 16, 3.0);
  const Matrix p = attention_pool(t.constant(h), t.constant(random_matrix(1, 4, 17))).value();
  for (std::size_t j = 0; j < 4; ++j) {
    double lo = 1e9, hi = -1e9;
    for (std::size_t i = 0; i < 6; ++i) lo = std::min(lo, h(i, j)), hi = std::max(hi, h(i, j));
    EXPECT_GE(p(0, j), lo);
    EXPECT_LE(p(0, j), hi);
  }
}

TEST(AttentionPool, ShapeEncoderIgnoresContourStart) {
  ScoreModel model(ModelConfig::toy(), 3);
  ad::randomize(model.params(), 4);
  std::vector<Point> pts{{0, 0}, {3, 0}, {3, 1}, {1.5, 2.5}, {1, 1}, {0, 2}};
  const Polygon base(pts);
  Tape t(false);
  Binding b(t, model.params());
  const auto g0 = contour_graph(base, 3.0);
  const Matrix ref =
      model.encode_shape(b, "poly", node_features(g0), normalized_adjacency(g0), model.config().d_p).value();
  for (int shift = 1; shift < 6; ++shift) {
    std::rotate(pts.begin(), pts.begin() + 1, pts.end());
    const auto g = contour_graph(Polygon(pts), 3.0);
    const Matrix out =
        model.encode_shape(b, "poly", node_features(g), normalized_adjacency(g), model.config().d_p).value();
    expect_near(out, ref, 1e-9);
  }
}

TEST(FourierTime, ZeroTimeAndBounds) {
  const Matrix w = random_matrix(1, 8, 18, 3.0);
  const Matrix e0 = fourier_time(0.0, w);
  double cos_norm = 0.0;
  for (std::size_t j = 0; j < 8; ++j) {
    EXPECT_EQ(e0(0, j), 0.0);
    EXPECT_EQ(e0(0, 8 + j), 1.0);
    cos_norm += e0(0, 8 + j) * e0(0, 8 + j);
  }
  EXPECT_DOUBLE_EQ(std::sqrt(cos_norm), std::sqrt(8.0));
  const Matrix a = fourier_time(0.37, w), b = fourier_time(0.37, w);
  EXPECT_EQ(a.data, b.data);
  for (double v : a.data) EXPECT_LE(std::abs(v), 1.0);
  EXPECT_THROW(fourier_time(1.5, w), std::domain_error);
}

TEST(AttentionWeights, RowsSumToOne) {
  ScoreModel model(ModelConfig::toy(), 5);
  ad::randomize(model.params(), 6);
  const auto rec = puzzle_record(7, 5);
  const auto cond = make_conditioning(rec.instance.polygons, rec.instance.container);
  const auto trace = model.attention_weights(cond, diffusion::to_state(rec.instance.poses), 0.4);
  EXPECT_FALSE(trace.empty());
  for (const auto& [name, heads] : trace) {
    for (const auto& w : heads) {
      for (std::size_t i = 0; i < w.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < w.cols; ++j) s += w(i, j);
        EXPECT_NEAR(s, 1.0, 1e-9) << name;
      }
    }
  }
}

// ---------------------------------------------------------------- network

TEST(ScoreModel, HeadStartsAtZero) {
  ScoreModel model(ModelConfig::toy(), 8);
  const auto rec = puzzle_record(9, 3);
  const auto score = model.score_fn(make_conditioning(rec.instance.polygons, rec.instance.container));
  for (const auto& row : score(diffusion::to_state(rec.instance.poses), 0.5)) {
    for (double v : row) EXPECT_EQ(v, 0.0);
  }
}

TEST(ScoreModel, OutputShapeForManyPolygonCounts) {
  ScoreModel model(ModelConfig::toy(), 10);
  ad::randomize(model.params(), 11);
  for (std::size_t n : {1u, 2u, 17u, 200u}) {
    std::vector<Polygon> polys;
    std::vector<Pose> poses;
    for (std::size_t i = 0; i < n; ++i) {
      polys.push_back(Polygon::rectangle(1.0 + 0.01 * static_cast<double>(i % 7), 0.5));
      poses.push_back(Pose::from_angle(static_cast<double>(i), 0.5, 0.1 * static_cast<double>(i)));
    }
    const auto score = model.score_fn(make_conditioning(polys, Container::strip(2.0)));
    const auto out = score(diffusion::to_state(poses), 0.3);
    ASSERT_EQ(out.size(), n);
    for (const auto& row : out) {
      for (double v : row) EXPECT_TRUE(std::isfinite(v));
    }
  }
}

TEST(ScoreModel, PermutationEquivariant) {
  ScoreModel model(ModelConfig::toy(), 12);
  ad::randomize(model.params(), 13);
  const auto rec = puzzle_record(14, 5);
  const auto& polys = rec.instance.polygons;
  const auto state = diffusion::to_state(rec.instance.poses);
  const std::vector<std::size_t> perm{2, 4, 0, 3, 1};
  std::vector<Polygon> pp;
  diffusion::State ps;
  for (std::size_t i : perm) pp.push_back(polys[i]), ps.push_back(state[i]);
  const auto base = model.score_fn(make_conditioning(polys, rec.instance.container))(state, 0.6);
  const auto moved = model.score_fn(make_conditioning(pp, rec.instance.container))(ps, 0.6);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(moved[i][k], base[perm[i]][k], 1e-9);
  }
}

TEST(ScoreModel, SinglePolygonGeometricBranchIsOwnValue) {
  ScoreModel model(ModelConfig::toy(), 15);
  ad::randomize(model.params(), 16);
  const auto rec = puzzle_record(17, 2);
  const std::vector<Polygon> one{rec.instance.polygons[0]};
  const auto cond = make_conditioning(one, rec.instance.container);
  Tape t(false);
  Binding b(t, model.params());
  const auto g = model.encode_geometry(b, cond);
  const auto r = model.relation_branches(b, g, t.constant(Matrix(1, 4, {0.1, 0.2, 1.0, 0.0})));
  const std::size_t d = model.config().width();
  const Var v = linear(b, "rel.geo.v", g.poly, model.config().d_p, d, false);
  expect_near(r.geo.value(), linear(b, "rel.geo.o", v, d, d).value(), 1e-12);
}

TEST(ScoreModel, ZeroBoundaryOnlyChangesBoundaryBranch) {
  ScoreModel model(ModelConfig::toy(), 18);
  ad::randomize(model.params(), 19);
  const auto rec = puzzle_record(20, 4);
  const auto cond = make_conditioning(rec.instance.polygons, rec.instance.container);
  const Matrix pose = ScoreModel::pose_features(state_matrix(diffusion::to_state(rec.instance.poses)), 1.0, 2.0);
  Tape t(false);
  Binding b(t, model.params());
  auto g = model.encode_geometry(b, cond);
  const auto with = model.relation_branches(b, g, t.constant(pose));
  g.boundary = t.constant(Matrix(1, model.config().d_b));
  const auto without = model.relation_branches(b, g, t.constant(pose));
  expect_near(without.x.value(), with.x.value(), 0.0);
  expect_near(without.geo.value(), with.geo.value(), 0.0);
  expect_near(without.spa.value(), with.spa.value(), 0.0);
  double change = 0.0;
  for (std::size_t i = 0; i < with.bnd.value().size(); ++i) {
    change = std::max(change, std::abs(with.bnd.value().data[i] - without.bnd.value().data[i]));
  }
  EXPECT_GT(change, 1e-3);
}

TEST(ScoreModel, EndToEndLossGradcheckOnRandomConfigs) {
  for (int variant = 0; variant < 3; ++variant) {
    const auto cfg = tiny_config(variant);
    ScoreModel model(cfg, 100 + variant);
    ad::randomize(model.params(), 200 + variant);
    const auto rec = puzzle_record(300 + variant, 3);
    const Example ex{make_conditioning(rec.instance.polygons, rec.instance.container),
                     diffusion::to_state(rec.instance.poses), 0.7};
    diffusion::State z(3);
    Rng rng(400 + variant);
    std::normal_distribution<double> n01;
    for (auto& row : z) {
      for (double& v : row) v = n01(rng);
    }
    const auto report = ad::check_params(
        model.params(), [&](Binding& b) { return example_loss(model, b, ex, 0.35, z, {}); }, 500 + variant, 6);
    EXPECT_LT(report.max_rel_error, 1e-4) << "variant " << variant << " worst " << report.worst;
    EXPECT_GT(report.tensors, 40u);
  }
}

// ---------------------------------------------------------------- training

TrainConfig smoke_train_config() {
  TrainConfig c;
  c.steps = 500;
  c.batch = 4;
  c.lr = 2e-3;
  c.use_lambda = false;
  c.rng_seed = 21;
  return c;
}

TEST(Training, LambdaScalesLossExactly) {
  ScoreModel model(ModelConfig::toy(), 22);
  ad::randomize(model.params(), 23);
  const auto rec = puzzle_record(24, 3);
  Example ex{make_conditioning(rec.instance.polygons, rec.instance.container),
             diffusion::to_state(rec.instance.poses), 1.0};
  const diffusion::State z(3, diffusion::Vec4{0.3, -0.2, 0.5, 1.0});
  auto loss = [&] {
    Tape t(false);
    Binding b(t, model.params());
    return example_loss(model, b, ex, 0.5, z, {}).value().data[0];
  };
  const double plain = loss();
  ex.lambda = diffusion::weight_lambda(0.8, {0.5, 0.7, 0.9});
  EXPECT_DOUBLE_EQ(loss(), plain * ex.lambda);
}

TEST(Training, OneRecordLossHalvesWithin500Steps) {
  ScoreModel model(ModelConfig::toy(), 25);
  const std::vector<teacher::TeacherRecord> corpus{puzzle_record(26, 2)};
  AdamState adam;
  const auto res = train(model, corpus, std::nullopt, smoke_train_config(), adam);
  ASSERT_EQ(res.loss_curve.size(), 500u);
  const auto mean = [&](std::size_t from, std::size_t to) {
    return std::accumulate(res.loss_curve.begin() + from, res.loss_curve.begin() + to, 0.0) / (to - from);
  };
  const double first = mean(0, 25), last = mean(475, 500);
  EXPECT_LE(last, 0.5 * first) << "first " << first << " last " << last;
}

TEST(Training, ResumeReproducesNextLossBitExactly) {
  const auto dir = std::filesystem::temp_directory_path() / "gfpack_resume_test";
  std::filesystem::create_directories(dir);
  const std::vector<teacher::TeacherRecord> corpus{puzzle_record(27, 2), puzzle_record(28, 3)};
  TrainConfig cfg = smoke_train_config();
  cfg.batch = 2;
  cfg.steps = 6;

  ScoreModel full(ModelConfig::toy(), 29);
  AdamState full_adam;
  const auto ref = train(full, corpus, std::nullopt, cfg, full_adam);

  ScoreModel part(ModelConfig::toy(), 29);
  AdamState part_adam;
  cfg.steps = 3;
  cfg.checkpoint_path = (dir / "ckpt.json").string();
  train(part, corpus, std::nullopt, cfg, part_adam);

  const auto ck = load_checkpoint(cfg.checkpoint_path);
  EXPECT_EQ(ck.adam.step, 3);
  ScoreModel resumed(ck.config, ck.params);
  AdamState adam = ck.adam;
  cfg.steps = 6;
  cfg.checkpoint_path.clear();
  const auto rest = train(resumed, corpus, std::nullopt, cfg, adam);
  ASSERT_EQ(rest.loss_curve.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(rest.loss_curve[i], ref.loss_curve[3 + i]);
  EXPECT_EQ(resumed.params().values, full.params().values);
  std::filesystem::remove_all(dir);
}

TEST(Training, RejectsMissingWeightStatsAndEmptyCorpus) {
  ScoreModel model(ModelConfig::toy(), 30);
  AdamState adam;
  TrainConfig cfg = smoke_train_config();
  cfg.use_lambda = true;
  EXPECT_THROW(train(model, {puzzle_record(31, 2)}, std::nullopt, cfg, adam), std::invalid_argument);
  EXPECT_THROW(train(model, {puzzle_record(31, 2)}, diffusion::WeightStats{0.5, 0.5, 0.5}, cfg, adam),
               std::exception);
  cfg.use_lambda = false;
  EXPECT_THROW(train(model, {}, std::nullopt, cfg, adam), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAndRejectsForeignFiles) {
  ScoreModel model(tiny_config(1), 32);
  const json j = checkpoint_json(model.config(), model.params());
  const auto ck = checkpoint_from_json(json::parse(j.dump()));
  EXPECT_EQ(ck.params.values, model.params().values);
  EXPECT_EQ(ck.params.frozen, model.params().frozen);
  EXPECT_EQ(to_json(ck.config), to_json(model.config()));
  json bad = j;
  bad["version"] = 99;
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
  bad["format"] = "other";
  EXPECT_THROW(checkpoint_from_json(bad), std::runtime_error);
}

TEST(ParamStore, ShapeMismatchIsReported) {
  ScoreModel model(ModelConfig::toy(), 33);
  EXPECT_THROW(model.params().get("head.W", 3, 3), ad::ShapeError);
  EXPECT_THROW(model.params().get("nope", 1, 1), std::out_of_range);
  EXPECT_TRUE(model.params().frozen.count("time.w"));
}

}  // namespace
}  // namespace gfpack::model
