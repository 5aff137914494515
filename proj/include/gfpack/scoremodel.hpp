#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "gfpack/autodiff.hpp"
#include "gfpack/diffusion.hpp"
#include "gfpack/geometry.hpp"
#include "gfpack/parallel.hpp"
#include "gfpack/random.hpp"
#include "gfpack/teacher.hpp"

namespace gfpack::model {

using ad::Matrix;
using ad::Tape;
using ad::Var;
using json = nlohmann::json;

inline constexpr int kCheckpointVersion = 1;

/// Named parameter arrays. Frozen entries are saved but never trained.
struct ParamStore {
  std::map<std::string, Matrix> values;
  std::set<std::string> frozen;

  Matrix& add(const std::string& name, Matrix m, bool is_frozen = false) {
    if (values.count(name)) throw std::invalid_argument("duplicate parameter " + name);
    if (is_frozen) frozen.insert(name);
    return values[name] = std::move(m);
  }
  [[nodiscard]] const Matrix& get(const std::string& name, std::size_t rows, std::size_t cols) const {
    const auto it = values.find(name);
    if (it == values.end()) throw std::out_of_range("missing parameter " + name);
    if (it->second.rows != rows || it->second.cols != cols) {
      throw ad::ShapeError("parameter " + name + " has shape " + ad::shape_str(it->second) + ", expected " +
                           std::to_string(rows) + "x" + std::to_string(cols));
    }
    return it->second;
  }
  [[nodiscard]] std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [k, v] : values) n += v.size();
    return n;
  }
};

/// Puts parameters onto a tape on first use and collects their gradients.
class Binding {
 public:
  Binding(Tape& tape, const ParamStore& params) : tape_(tape), params_(params) {}

  Var operator()(const std::string& name, std::size_t rows, std::size_t cols) {
    if (auto it = vars_.find(name); it != vars_.end()) return it->second;
    const Matrix& m = params_.get(name, rows, cols);
    const Var v = params_.frozen.count(name) ? tape_.constant(m) : tape_.variable(m);
    vars_.emplace(name, v);
    return v;
  }
  [[nodiscard]] Tape& tape() { return tape_; }

  /// Gradients of every bound trainable parameter (zeros when unreached).
  [[nodiscard]] std::map<std::string, Matrix> grads() {
    std::map<std::string, Matrix> out;
    for (const auto& [name, v] : vars_) {
      if (!v.requires_grad()) continue;
      out[name] = tape_.has_grad(v.id) ? tape_.grad(v.id) : Matrix(v.rows(), v.cols());
    }
    return out;
  }

 private:
  Tape& tape_;
  const ParamStore& params_;
  std::map<std::string, Var> vars_;
};

/// Captured attention weight rows, keyed by module name (one matrix per head).
using AttentionTrace = std::map<std::string, std::vector<Matrix>>;

// ---------------------------------------------------------------- layers

/// D^-1/2 (A + I) D^-1/2 for a contour graph.
inline Matrix normalized_adjacency(const ContourGraph& g) {
  const std::size_t n = g.nodes;
  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) a(i, i) = 1.0;
  for (const auto& [i, j] : g.edges) {
    if (i == j) continue;
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  std::vector<double> d(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) d[i] += a(i, j);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) a(i, j) /= std::sqrt(d[i] * d[j]);
  }
  return a;
}

inline Matrix node_features(const ContourGraph& g) {
  Matrix f(g.nodes, 3);
  for (std::size_t i = 0; i < g.nodes; ++i) {
    for (std::size_t k = 0; k < 3; ++k) f(i, k) = g.features[i][k];
  }
  return f;
}

/// ReLU(S H W) with S the normalized adjacency.
inline Var gcn_layer(Var h, Var s, Var w) { return ad::relu(ad::matmul(ad::matmul(s, h), w)); }

/// h_new + h_old, with h_old projected by `proj` when the widths differ.
inline Var residual_combine(Var h_new, Var h_old, std::optional<Var> proj = std::nullopt) {
  if (h_new.rows() != h_old.rows()) throw ad::ShapeError("residual row mismatch");
  if (proj) return ad::add(h_new, ad::matmul(h_old, *proj));
  if (h_new.cols() != h_old.cols()) throw ad::ShapeError("residual width mismatch needs a projection");
  return ad::add(h_new, h_old);
}

/// softmax(Q K^T / sqrt(d)) V; the weight matrix is optionally returned.
inline Var attention(Var q, Var k, Var v, Matrix* weights = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) throw ad::ShapeError("attention shape mismatch");
  const Var s = ad::scale(ad::matmul(q, ad::transpose(k)), 1.0 / std::sqrt(static_cast<double>(q.cols())));
  const Var p = ad::softmax_rows(s);
  if (weights) *weights = p.value();
  return ad::matmul(p, v);
}

/// Learned-query pooling: weights softmax(H q^T / sqrt(d)) over nodes, output
/// the weighted sum of node rows.
inline Var attention_pool(Var h, Var query, Matrix* weights = nullptr) {
  if (h.rows() == 0) throw ad::ShapeError("attention_pool over no nodes");
  return attention(query, h, h, weights);
}

inline Var linear(Binding& b, const std::string& name, Var x, std::size_t in, std::size_t out, bool bias = true) {
  Var y = ad::matmul(x, b(name + ".W", in, out));
  if (bias) y = ad::add(y, b(name + ".b", 1, out));
  return y;
}

inline Var feed_forward(Binding& b, const std::string& name, Var x, std::size_t in, std::size_t hidden,
                        std::size_t out) {
  return linear(b, name + ".l2", ad::silu(linear(b, name + ".l1", x, in, hidden)), hidden, out);
}

inline Var layer_norm(Binding& b, const std::string& name, Var x, std::size_t d) {
  return ad::layer_norm(x, b(name + ".g", 1, d), b(name + ".b", 1, d));
}

/// Multi-head attention over already-projected Q, K, V (all width d), followed
/// by the output projection `name.o`.
inline Var mha_core(Binding& b, const std::string& name, Var q, Var k, Var v, std::size_t d, std::size_t heads,
                    AttentionTrace* trace = nullptr) {
  if (d % heads != 0) throw ad::ShapeError("width not divisible by heads");
  const std::size_t dh = d / heads;
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Matrix w;
    outs.push_back(attention(ad::slice_cols(q, h * dh, (h + 1) * dh), ad::slice_cols(k, h * dh, (h + 1) * dh),
                             ad::slice_cols(v, h * dh, (h + 1) * dh), trace ? &w : nullptr));
    if (trace) (*trace)[name].push_back(std::move(w));
  }
  const Var cat = heads == 1 ? outs.front() : ad::concat_cols(outs);
  return linear(b, name + ".o", cat, d, d);
}

inline Var mha(Binding& b, const std::string& name, Var xq, Var xk, Var xv, std::size_t d, std::size_t heads,
               AttentionTrace* trace = nullptr) {
  const Var q = linear(b, name + ".q", xq, xq.cols(), d, false);
  const Var k = linear(b, name + ".k", xk, xk.cols(), d, false);
  const Var v = linear(b, name + ".v", xv, xv.cols(), d, false);
  return mha_core(b, name, q, k, v, d, heads, trace);
}

/// (sin 2 pi w t, cos 2 pi w t) for a frozen 1 x d_t row w.
inline Matrix fourier_time(double t, const Matrix& w) {
  diffusion::check_time(t);
  Matrix e(1, 2 * w.cols);
  for (std::size_t j = 0; j < w.cols; ++j) {
    const double a = 2.0 * std::numbers::pi * w(0, j) * t;
    e(0, j) = std::sin(a);
    e(0, w.cols + j) = std::cos(a);
  }
  return e;
}

// ---------------------------------------------------------------- model

struct ModelConfig {
  int gcn_layers = 4;
  int d_p = 64;
  int d_b = 128;
  int d_a = 64;
  int d_t = 64;
  int enc_layers = 8;
  int dec_layers = 8;
  int heads = 4;
  int ff_mult = 2;

  static ModelConfig toy() {
    ModelConfig c;
    c.gcn_layers = 2;
    c.d_p = 16;
    c.d_b = 32;
    c.d_a = 16;
    c.d_t = 16;
    c.enc_layers = 2;
    c.dec_layers = 2;
    c.heads = 2;
    return c;
  }
  [[nodiscard]] std::size_t width() const { return static_cast<std::size_t>(d_p + d_a); }
  void validate() const {
    if (gcn_layers < 1 || d_p < 1 || d_b < 1 || d_a < 1 || d_t < 1 || enc_layers < 0 || dec_layers < 0 ||
        heads < 1 || ff_mult < 1) {
      throw std::invalid_argument("model dimensions must be positive");
    }
    if (width() % static_cast<std::size_t>(heads) != 0) throw std::invalid_argument("d_p + d_a must divide by heads");
  }
};

inline json to_json(const ModelConfig& c) {
  return {{"gcn_layers", c.gcn_layers}, {"d_p", c.d_p},   {"d_b", c.d_b},         {"d_a", c.d_a},
          {"d_t", c.d_t},               {"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
          {"heads", c.heads},           {"ff_mult", c.ff_mult}};
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.gcn_layers = j.at("gcn_layers");
  c.d_p = j.at("d_p");
  c.d_b = j.at("d_b");
  c.d_a = j.at("d_a");
  c.d_t = j.at("d_t");
  c.enc_layers = j.at("enc_layers");
  c.dec_layers = j.at("dec_layers");
  c.heads = j.at("heads");
  c.ff_mult = j.value("ff_mult", 2);
  c.validate();
  return c;
}

/// Geometry of one packing problem as network input.
struct Conditioning {
  std::vector<Matrix> poly_features;
  std::vector<Matrix> poly_adjacency;
  Matrix boundary_features;
  Matrix boundary_adjacency;
  /// container height in diffusion-state units (translation preconditioning)
  double pos_scale = 1.0;
};

/// Strip containers are encoded as a rectangle of height H and length
/// 1.5 * sum(areas) / H.
inline Polygon container_outline(const Container& c, double total_area) {
  if (c.is_boundary()) return c.polygon();
  const double h = c.height();
  return Polygon::rectangle(std::max(1.5 * total_area / h, 1e-9 * h), h);
}

inline Conditioning make_conditioning(const std::vector<Polygon>& polygons, const Container& container,
                                      double translation_scale = 1.0) {
  Conditioning c;
  const double h = container.height();
  double total = 0.0;
  for (const auto& p : polygons) {
    const auto g = contour_graph(p, h);
    c.poly_features.push_back(node_features(g));
    c.poly_adjacency.push_back(normalized_adjacency(g));
    total += area(p);
  }
  const auto bg = contour_graph(container_outline(container, total), h);
  c.boundary_features = node_features(bg);
  c.boundary_adjacency = normalized_adjacency(bg);
  c.pos_scale = h / translation_scale;
  return c;
}

inline Matrix state_matrix(const diffusion::State& s) {
  Matrix m(s.size(), 4);
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t k = 0; k < 4; ++k) m(i, k) = s[i][k];
  }
  return m;
}

inline diffusion::State matrix_state(const Matrix& m) {
  diffusion::State s(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t k = 0; k < 4; ++k) s[i][k] = m(i, k);
  }
  return s;
}

/// Score network: GCN + attention-pool shape encoders, pose MLP, geometric /
/// spatial / boundary relation attention, Fourier time embedding and a
/// pre-norm transformer encoder-decoder with a 4-wide output head.
class ScoreModel {
 public:
  ScoreModel(ModelConfig cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    init(seed);
  }
  ScoreModel(ModelConfig cfg, ParamStore params) : cfg_(cfg), params_(std::move(params)) { cfg_.validate(); }

  [[nodiscard]] const ModelConfig& config() const { return cfg_; }
  [[nodiscard]] const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }

  struct Geometry {
    Var poly;      // n x d_p
    Var boundary;  // 1 x d_b
  };

  Var encode_shape(Binding& b, const std::string& name, const Matrix& features, const Matrix& adjacency,
                   std::size_t width, Matrix* pool_weights = nullptr) const {
    Tape& t = b.tape();
    const Var s = t.constant(adjacency);
    Var h = t.constant(features);
    std::size_t in = features.cols;
    for (int l = 0; l < cfg_.gcn_layers; ++l) {
      const std::string p = name + ".gcn." + std::to_string(l);
      const Var hn = gcn_layer(h, s, b(p + ".W", in, width));
      h = in == width ? residual_combine(hn, h) : residual_combine(hn, h, b(p + ".P", in, width));
      in = width;
    }
    return attention_pool(h, b(name + ".pool", 1, width), pool_weights);
  }

  Geometry encode_geometry(Binding& b, const Conditioning& c) const {
    std::vector<Var> rows;
    for (std::size_t i = 0; i < c.poly_features.size(); ++i) {
      rows.push_back(encode_shape(b, "poly", c.poly_features[i], c.poly_adjacency[i], cfg_.d_p));
    }
    return {ad::concat_rows(rows),
            encode_shape(b, "bnd", c.boundary_features, c.boundary_adjacency, cfg_.d_b)};
  }

  /// Pose features with noise-level preconditioning.
  static Matrix pose_features(const Matrix& a, double sigma, double pos_scale) {
    Matrix f = a;
    const double kt = 1.0 / std::sqrt(sigma * sigma + pos_scale * pos_scale);
    const double kr = 1.0 / std::sqrt(sigma * sigma + 1.0);
    for (std::size_t i = 0; i < f.rows; ++i) {
      f(i, 0) *= kt;
      f(i, 1) *= kt;
      f(i, 2) *= kr;
      f(i, 3) *= kr;
    }
    return f;
  }

  struct RelationBranches {
    Var x;    // [F_P | F_A]
    Var geo;  // geometric (Q = K = V = F_P)
    Var spa;  // spatial (K = F_A)
    Var bnd;  // boundary (F_B appended as a key/value token)
  };

  RelationBranches relation_branches(Binding& b, Geometry g, Var pose_feat, AttentionTrace* trace = nullptr) const {
    const std::size_t d = cfg_.width(), da = cfg_.d_a, db = cfg_.d_b;
    const std::size_t heads = cfg_.heads;
    const Var fa = feed_forward(b, "pose", pose_feat, 4, da, da);
    const Var x = ad::concat_cols({g.poly, fa});

    const Var geo = mha(b, "rel.geo", g.poly, g.poly, g.poly, d, heads, trace);
    const Var spa = mha(b, "rel.spa", x, fa, x, d, heads, trace);
    const Var bq = linear(b, "rel.bnd.q", x, d, d, false);
    // the boundary is one extra key/value token next to the polygon tokens
    const Var bk = ad::concat_rows({linear(b, "rel.bnd.k", x, d, d, false),
                                    linear(b, "rel.bnd.kb", g.boundary, db, d, false)});
    const Var bv = ad::concat_rows({linear(b, "rel.bnd.v", x, d, d, false),
                                    linear(b, "rel.bnd.vb", g.boundary, db, d, false)});
    return {x, geo, spa, mha_core(b, "rel.bnd", bq, bk, bv, d, heads, trace)};
  }

  /// Per-polygon relation latents (n x (d_p + d_a)) before the transformer.
  Var relation_latents(Binding& b, Geometry g, Var pose_feat, AttentionTrace* trace = nullptr) const {
    const std::size_t d = cfg_.width();
    const auto r = relation_branches(b, g, pose_feat, trace);
    const Var fused = feed_forward(b, "rel.ff", ad::concat_cols({r.geo, r.spa, r.bnd}), 3 * d, d, d);
    return ad::add(r.x, fused);
  }

  /// Raw network output (n x 4); the score is this divided by sigma(t).
  Var forward(Binding& b, Geometry g, const Matrix& state, double t, const diffusion::SigmaSchedule& sched,
              double pos_scale, AttentionTrace* trace = nullptr) const {
    Tape& tp = b.tape();
    const std::size_t d = cfg_.width(), n = state.rows, ff = d * cfg_.ff_mult, heads = cfg_.heads;
    if (g.poly.rows() != n) throw ad::ShapeError("state rows differ from polygon count");
    const double sg = diffusion::sigma(t, sched);
    Var x = relation_latents(b, g, tp.constant(pose_features(state, sg, pos_scale)), trace);

    const Matrix& w = params_.get("time.w", 1, cfg_.d_t);
    const Var temb = feed_forward(b, "time", tp.constant(fourier_time(t, w)), 2 * cfg_.d_t, d, d);
    x = ad::add(x, temb);

    Var mem = x;
    for (int l = 0; l < cfg_.enc_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      const Var h = layer_norm(b, p + ".ln1", mem, d);
      mem = ad::add(mem, mha(b, p + ".attn", h, h, h, d, heads, trace));
      mem = ad::add(mem, feed_forward(b, p + ".ff", layer_norm(b, p + ".ln2", mem, d), d, ff, d));
    }
    mem = layer_norm(b, "enc.ln", mem, d);

    Var y = x;
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      const Var h = layer_norm(b, p + ".ln1", y, d);
      y = ad::add(y, mha(b, p + ".self", h, h, h, d, heads, trace));
      y = ad::add(y, mha(b, p + ".cross", layer_norm(b, p + ".ln2", y, d), mem, mem, d, heads, trace));
      y = ad::add(y, feed_forward(b, p + ".ff", layer_norm(b, p + ".ln3", y, d), d, ff, d));
    }
    y = layer_norm(b, "dec.ln", y, d);
    return linear(b, "head", y, d, 4);
  }

  /// Inference score function for one problem; shape features are computed once.
  [[nodiscard]] diffusion::ScoreFn score_fn(const Conditioning& c, const diffusion::SigmaSchedule& sched = {}) const {
    Tape geo_tape(false);
    Binding gb(geo_tape, params_);
    const Geometry g = encode_geometry(gb, c);
    const Matrix poly = g.poly.value(), bnd = g.boundary.value();
    const double pos_scale = c.pos_scale;
    return [this, poly, bnd, sched, pos_scale](const diffusion::State& a, double t) {
      Tape tp(false);
      Binding b(tp, params_);
      const Geometry g{tp.constant(poly), tp.constant(bnd)};
      const Var out = forward(b, g, state_matrix(a), t, sched, pos_scale);
      Matrix m = out.value();
      const double sg = diffusion::sigma(t, sched);
      for (double& v : m.data) v /= sg;
      return matrix_state(m);
    };
  }

  /// Attention weights of every attention module for one evaluation.
  [[nodiscard]] AttentionTrace attention_weights(const Conditioning& c, const diffusion::State& a, double t,
                                                 const diffusion::SigmaSchedule& sched = {}) const {
    Tape tp(false);
    Binding b(tp, params_);
    AttentionTrace trace;
    forward(b, encode_geometry(b, c), state_matrix(a), t, sched, c.pos_scale, &trace);
    return trace;
  }

 private:
  static Matrix uniform(Rng& rng, std::size_t in, std::size_t out) {
    Matrix w(in, out);
    const double k = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> u(-k, k);
    for (double& v : w.data) v = u(rng);
    return w;
  }
  void add_linear(Rng& rng, const std::string& name, std::size_t in, std::size_t out, bool bias = true,
                  bool zero = false) {
    params_.add(name + ".W", zero ? Matrix(in, out) : uniform(rng, in, out));
    if (bias) params_.add(name + ".b", Matrix(1, out));
  }
  void add_ff(Rng& rng, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out) {
    add_linear(rng, name + ".l1", in, hidden);
    add_linear(rng, name + ".l2", hidden, out);
  }
  void add_ln(const std::string& name, std::size_t d) {
    params_.add(name + ".g", Matrix(1, d, 1.0));
    params_.add(name + ".b", Matrix(1, d));
  }
  void add_mha(Rng& rng, const std::string& name, std::size_t q_in, std::size_t k_in, std::size_t v_in, std::size_t d) {
    add_linear(rng, name + ".q", q_in, d, false);
    add_linear(rng, name + ".k", k_in, d, false);
    add_linear(rng, name + ".v", v_in, d, false);
    add_linear(rng, name + ".o", d, d);
  }
  void add_shape_encoder(Rng& rng, const std::string& name, std::size_t width) {
    std::size_t in = 3;
    for (int l = 0; l < cfg_.gcn_layers; ++l) {
      const std::string p = name + ".gcn." + std::to_string(l);
      params_.add(p + ".W", uniform(rng, in, width));
      if (in != width) params_.add(p + ".P", uniform(rng, in, width));
      in = width;
    }
    Matrix q = uniform(rng, width, 1);
    params_.add(name + ".pool", Matrix(1, width, std::move(q.data)));
  }

  void init(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t d = cfg_.width(), ff = d * cfg_.ff_mult;
    add_shape_encoder(rng, "poly", cfg_.d_p);
    add_shape_encoder(rng, "bnd", cfg_.d_b);
    add_ff(rng, "pose", 4, cfg_.d_a, cfg_.d_a);
    add_mha(rng, "rel.geo", cfg_.d_p, cfg_.d_p, cfg_.d_p, d);
    add_mha(rng, "rel.spa", d, cfg_.d_a, d, d);
    add_linear(rng, "rel.bnd.q", d, d, false);
    add_linear(rng, "rel.bnd.k", d, d, false);
    add_linear(rng, "rel.bnd.kb", cfg_.d_b, d, false);
    add_linear(rng, "rel.bnd.v", d, d, false);
    add_linear(rng, "rel.bnd.vb", cfg_.d_b, d, false);
    add_linear(rng, "rel.bnd.o", d, d);
    add_ff(rng, "rel.ff", 3 * d, d, d);

    Matrix w(1, cfg_.d_t);
    std::normal_distribution<double> n01(0.0, 1.0);
    for (double& v : w.data) v = n01(rng);
    params_.add("time.w", std::move(w), true);
    add_ff(rng, "time", 2 * cfg_.d_t, d, d);

    for (int l = 0; l < cfg_.enc_layers; ++l) {
      const std::string p = "enc." + std::to_string(l);
      add_ln(p + ".ln1", d);
      add_mha(rng, p + ".attn", d, d, d, d);
      add_ln(p + ".ln2", d);
      add_ff(rng, p + ".ff", d, ff, d);
    }
    add_ln("enc.ln", d);
    for (int l = 0; l < cfg_.dec_layers; ++l) {
      const std::string p = "dec." + std::to_string(l);
      add_ln(p + ".ln1", d);
      add_mha(rng, p + ".self", d, d, d, d);
      add_ln(p + ".ln2", d);
      add_mha(rng, p + ".cross", d, d, d, d);
      add_ln(p + ".ln3", d);
      add_ff(rng, p + ".ff", d, ff, d);
    }
    add_ln("dec.ln", d);
    add_linear(rng, "head", d, 4, true, true);
  }

  ModelConfig cfg_;
  ParamStore params_;
};

// ---------------------------------------------------------------- checkpoints

inline json matrix_json(const Matrix& m) { return {{"shape", {m.rows, m.cols}}, {"values", m.data}}; }

inline Matrix matrix_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  if (shape.size() != 2) throw std::runtime_error("checkpoint matrix shape must have two entries");
  return Matrix(shape[0], shape[1], j.at("values").get<std::vector<double>>());
}

struct AdamState {
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
  long step = 0;
};

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
  AdamState adam;
  json meta = json::object();
};

inline json checkpoint_json(const ModelConfig& cfg, const ParamStore& params, const AdamState* adam = nullptr,
                            const json& meta = json::object()) {
  json j;
  j["format"] = "gfpack-checkpoint";
  j["version"] = kCheckpointVersion;
  j["config"] = to_json(cfg);
  j["meta"] = meta;
  json p = json::object();
  for (const auto& [name, m] : params.values) {
    p[name] = matrix_json(m);
    p[name]["frozen"] = params.frozen.count(name) > 0;
  }
  j["params"] = p;
  if (adam) {
    json a = {{"step", adam->step}, {"m", json::object()}, {"v", json::object()}};
    for (const auto& [k, m] : adam->m) a["m"][k] = matrix_json(m);
    for (const auto& [k, v] : adam->v) a["v"][k] = matrix_json(v);
    j["adam"] = a;
  }
  return j;
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& params,
                            const AdamState* adam = nullptr, const json& meta = json::object()) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << checkpoint_json(cfg, params, adam, meta).dump() << '\n';
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint checkpoint_from_json(const json& j) {
  if (j.value("format", "") != "gfpack-checkpoint") throw std::runtime_error("not a gfpack checkpoint");
  if (j.value("version", 0) != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint c;
  c.config = model_config_from_json(j.at("config"));
  for (const auto& [name, e] : j.at("params").items()) c.params.add(name, matrix_from_json(e), e.value("frozen", false));
  if (auto it = j.find("adam"); it != j.end()) {
    c.adam.step = it->at("step");
    for (const auto& [k, e] : it->at("m").items()) c.adam.m[k] = matrix_from_json(e);
    for (const auto& [k, e] : it->at("v").items()) c.adam.v[k] = matrix_from_json(e);
  }
  c.meta = j.value("meta", json::object());
  return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return checkpoint_from_json(json::parse(in));
}

// ---------------------------------------------------------------- training

struct TrainConfig {
  long steps = 500;
  int batch = 8;
  double lr = 2e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// global gradient-norm clip; 0 disables
  double grad_clip = 0.0;
  double t_min = 0.01;
  double t_max = 1.0;
  bool use_lambda = true;
  std::uint64_t rng_seed = 0;
  double translation_scale = 1.0;
  diffusion::SigmaSchedule schedule{};
  /// stop early after this many seconds of wall time; 0 = no limit
  double time_budget_s = 0.0;
  /// checkpoint path written at every epoch end (empty = none)
  std::string checkpoint_path;

  void validate() const {
    if (steps < 0 || batch < 1) throw std::invalid_argument("steps >= 0 and batch >= 1 required");
    if (!(lr > 0.0)) throw std::invalid_argument("lr must be > 0");
    if (!(t_min > 0.0 && t_min < t_max && t_max <= 1.0)) throw std::invalid_argument("need 0 < t_min < t_max <= 1");
    schedule.validate();
  }
};

inline json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},         {"batch", c.batch},       {"lr", c.lr},
          {"weight_decay", c.weight_decay}, {"beta1", c.beta1}, {"beta2", c.beta2},
          {"eps", c.eps},             {"grad_clip", c.grad_clip}, {"t_min", c.t_min},
          {"t_max", c.t_max},         {"use_lambda", c.use_lambda}, {"rng_seed", c.rng_seed},
          {"translation_scale", c.translation_scale}, {"sigma_min", c.schedule.sigma_min},
          {"sigma_max", c.schedule.sigma_max}};
}

/// One training example: problem geometry, clean state and loss weight.
struct Example {
  Conditioning cond;
  diffusion::State a0;
  double lambda = 1.0;
};

inline std::vector<Example> make_examples(std::span<const teacher::TeacherRecord> records,
                                          const std::optional<diffusion::WeightStats>& stats,
                                          double translation_scale) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    Example e{make_conditioning(r.instance.polygons, r.instance.container, translation_scale),
              diffusion::to_state(r.instance.poses, translation_scale), 1.0};
    if (stats) e.lambda = diffusion::weight_lambda(r.utilization, *stats);
    out.push_back(std::move(e));
  }
  return out;
}

/// Weighted DSM loss of one example at time t with noise z, on `b`'s tape:
/// lambda * mean((net - (-z))^2), the sigma-scaled form of the score target.
inline Var example_loss(const ScoreModel& model, Binding& b, const Example& e, double t, const diffusion::State& z,
                        const diffusion::SigmaSchedule& sched) {
  const double sg = diffusion::sigma(t, sched);
  diffusion::State at = e.a0;
  for (std::size_t i = 0; i < at.size(); ++i) {
    for (int k = 0; k < 4; ++k) at[i][k] += sg * z[i][k];
  }
  Matrix target = state_matrix(z);
  for (double& v : target.data) v = -v;
  const auto g = model.encode_geometry(b, e.cond);
  const Var out = model.forward(b, g, state_matrix(at), t, sched, e.cond.pos_scale);
  return ad::scale(ad::mse(out, target), e.lambda);
}

struct StepSample {
  std::size_t index;
  double t;
  diffusion::State z;
};

/// Draws the examples, times and noise of training step `step` (a pure
/// function of seed and step, so resumed runs see the same data).
inline std::vector<StepSample> step_samples(const std::vector<Example>& data, const TrainConfig& cfg, long step) {
  Rng rng = make_rng(cfg.rng_seed, {static_cast<std::uint64_t>(step)});
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::uniform_real_distribution<double> ut(cfg.t_min, cfg.t_max);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::vector<StepSample> out;
  for (int k = 0; k < cfg.batch; ++k) {
    StepSample s{pick(rng), ut(rng), {}};
    s.z.resize(data[s.index].a0.size());
    for (auto& v : s.z) {
      for (double& x : v) x = n01(rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Mean batch loss and summed-then-averaged gradients for one step. Per-example
/// work runs in parallel; the reduction is in example order.
inline std::pair<double, std::map<std::string, Matrix>> batch_gradients(const ScoreModel& model,
                                                                        const std::vector<Example>& data,
                                                                        const std::vector<StepSample>& samples,
                                                                        const diffusion::SigmaSchedule& sched) {
  std::vector<double> losses(samples.size());
  std::vector<std::map<std::string, Matrix>> grads(samples.size());
  parallel_for(samples.size(), [&](std::size_t k) {
    Tape tape;
    Binding b(tape, model.params());
    const Var loss = example_loss(model, b, data[samples[k].index], samples[k].t, samples[k].z, sched);
    tape.backward(loss);
    losses[k] = loss.value().data[0];
    grads[k] = b.grads();
  });
  std::map<std::string, Matrix> total;
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    loss += losses[k] * inv;
    for (auto& [name, g] : grads[k]) {
      auto [it, fresh] = total.try_emplace(name, Matrix(g.rows, g.cols));
      for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i] * inv;
    }
  }
  return {loss, std::move(total)};
}

/// Decoupled weight decay Adam step.
inline void adamw_step(ParamStore& params, const std::map<std::string, Matrix>& grads, AdamState& st,
                       const TrainConfig& cfg) {
  ++st.step;
  double scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [k, g] : grads) {
      for (double v : g.data) sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (const auto& [name, g] : grads) {
    if (params.frozen.count(name)) continue;
    Matrix& p = params.values.at(name);
    auto [mi, f1] = st.m.try_emplace(name, Matrix(p.rows, p.cols));
    auto [vi, f2] = st.v.try_emplace(name, Matrix(p.rows, p.cols));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g.data[i] * scale;
      double& m = mi->second.data[i];
      double& v = vi->second.data[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * gi;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * gi * gi;
      const double mh = m / bc1, vh = v / bc2;
      p.data[i] -= cfg.lr * (mh / (std::sqrt(vh) + cfg.eps) + cfg.weight_decay * p.data[i]);
    }
  }
}

struct TrainResult {
  std::vector<double> loss_curve;
  long steps_done = 0;
  bool stopped_by_budget = false;
};

/// Trains `model` on `records`. Continues from `adam.step` (pass a loaded
/// optimizer state to resume). `stats` enables utilization weighting.
inline TrainResult train(ScoreModel& model, const std::vector<teacher::TeacherRecord>& records,
                         const std::optional<diffusion::WeightStats>& stats, const TrainConfig& cfg, AdamState& adam,
                         const std::function<void(long, double)>& progress = nullptr) {
  cfg.validate();
  if (records.empty()) throw std::invalid_argument("training corpus is empty");
  std::optional<diffusion::WeightStats> weights;
  if (cfg.use_lambda) {
    if (!stats) throw std::invalid_argument("utilization weighting needs corpus weight stats");
    stats->validate();
    weights = stats;
  }
  const auto data = make_examples(records, weights, cfg.translation_scale);
  const long per_epoch = std::max<long>(1, static_cast<long>((data.size() + cfg.batch - 1) / cfg.batch));
  const auto start = std::chrono::steady_clock::now();
  TrainResult res;
  while (adam.step < cfg.steps) {
    const auto samples = step_samples(data, cfg, adam.step);
    auto [loss, grads] = batch_gradients(model, data, samples, cfg.schedule);
    adamw_step(model.params(), grads, adam, cfg);
    res.loss_curve.push_back(loss);
    ++res.steps_done;
    if (progress) progress(adam.step, loss);
    if (!cfg.checkpoint_path.empty() && adam.step % per_epoch == 0) {
      save_checkpoint(cfg.checkpoint_path, model.config(), model.params(), &adam, {{"train", to_json(cfg)}});
    }
    if (cfg.time_budget_s > 0.0) {
      const double el = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      if (el > cfg.time_budget_s) {
        res.stopped_by_budget = true;
        break;
      }
    }
  }
  return res;
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& curve, long first_step = 1) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,loss\n";
  out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << first_step + static_cast<long>(i) << ',' << curve[i] << '\n';
}

}  // namespace gfpack::model
