#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <numeric>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "gfpack/collision.hpp"
#include "gfpack/dataset.hpp"
#include "gfpack/diffusion.hpp"
#include "gfpack/geometry.hpp"
#include "gfpack/io.hpp"
#include "gfpack/parallel.hpp"
#include "gfpack/random.hpp"

namespace gfpack::teacher {

class PlacementImpossible : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rotation of angle index k: 2*pi*k/n relative to the presented orientation.
inline double angle_of(int k, int n_angles) { return 2.0 * std::numbers::pi * k / n_angles; }

inline Polygon rotated(const Polygon& p, double theta) {
  if (theta == 0.0) return p;
  return apply_pose(p, Pose::from_angle(0, 0, theta));
}

/// Minkowski sum of two convex CCW polygons, as the hull of pairwise vertex sums.
inline Polygon convex_minkowski(std::span<const Point> a, std::span<const Point> b) {
  std::vector<Point> sums;
  sums.reserve(a.size() * b.size());
  for (const Point& p : a) {
    for (const Point& q : b) sums.push_back(p + q);
  }
  return Polygon::trusted(convex_hull(std::move(sums)));
}

/// Locus of the orbiting polygon's reference point (its local origin) against
/// a fixed polygon at the origin. `pieces` are convex and cover the NFP; `loops`
/// are the boundary of their union.
struct NoFitPolygon {
  struct Ref {
    std::size_t id = 0;
    int angle = 0;
  };
  Ref fixed;
  Ref orbiting;
  std::vector<Polygon> pieces;
  std::vector<Region> loops;

  /// +1 strictly inside (overlap), 0 on a loop (contact), -1 outside.
  [[nodiscard]] int classify(Point t, double tol = kContactTol) const {
    int best = -1;
    for (const auto& r : loops) best = std::max(best, classify_point(r, t, tol));
    return best;
  }
};

inline std::vector<Polygon> nfp_pieces(std::span<const Polygon> fixed_parts, std::span<const Polygon> orbiting_parts) {
  std::vector<Polygon> out;
  out.reserve(fixed_parts.size() * orbiting_parts.size());
  for (const auto& a : fixed_parts) {
    for (const auto& b : orbiting_parts) {
      std::vector<Point> neg;
      neg.reserve(b.size());
      for (const Point& q : b.vertices()) neg.push_back(-q);
      out.push_back(convex_minkowski(a.vertices(), neg));
    }
  }
  return out;
}

/// NFP of `orbiting` around `fixed`, both taken at their given orientations.
inline NoFitPolygon nfp(const Polygon& fixed, const Polygon& orbiting, NoFitPolygon::Ref fixed_ref = {},
                        NoFitPolygon::Ref orbiting_ref = {}) {
  NoFitPolygon out;
  out.fixed = fixed_ref;
  out.orbiting = orbiting_ref;
  out.pieces = nfp_pieces(collision::convex_decompose(fixed).parts, collision::convex_decompose(orbiting).parts);
  if (out.pieces.size() == 1) {
    const auto v = out.pieces.front().vertices();
    out.loops.push_back(Region{{v.begin(), v.end()}, {}});
  } else {
    out.loops = union_regions(out.pieces);
  }
  return out;
}

/// Rotated copies and convex parts of the input polygons, plus a concurrent
/// cache of NFP pieces keyed by (fixed id, fixed angle, orbiting id, orbiting angle).
class NfpCache {
 public:
  NfpCache(std::vector<Polygon> polygons, int n_angles) : polygons_(std::move(polygons)), n_angles_(n_angles) {
    if (n_angles < 1) throw std::invalid_argument("n_angles must be >= 1");
    for (const auto& p : polygons_) parts_.push_back(collision::convex_decompose(p));
  }

  [[nodiscard]] const std::vector<Polygon>& polygons() const { return polygons_; }
  [[nodiscard]] int n_angles() const { return n_angles_; }

  struct Oriented {
    Polygon polygon;
    std::vector<Polygon> parts;
    BBox box;
  };

  const Oriented& oriented(std::size_t id, int angle) const {
    const std::uint64_t key = id * static_cast<std::uint64_t>(n_angles_) + angle;
    {
      std::shared_lock lock(mutex_);
      if (auto it = oriented_.find(key); it != oriented_.end()) return *it->second;
    }
    const double th = angle_of(angle, n_angles_);
    auto o = std::make_unique<Oriented>(Oriented{rotated(polygons_[id], th), {}, {}});
    for (const auto& part : parts_[id].parts) o->parts.push_back(rotated(part, th));
    o->box = bbox(o->polygon);
    std::unique_lock lock(mutex_);
    auto [it, inserted] = oriented_.try_emplace(key, std::move(o));
    return *it->second;
  }

  const std::vector<Polygon>& pieces(std::size_t fixed, int fixed_angle, std::size_t orbiting, int orbiting_angle) const {
    const auto key = std::make_tuple(fixed, fixed_angle, orbiting, orbiting_angle);
    {
      std::shared_lock lock(mutex_);
      if (auto it = nfps_.find(key); it != nfps_.end()) return *it->second;
    }
    auto p = std::make_unique<std::vector<Polygon>>(
        nfp_pieces(oriented(fixed, fixed_angle).parts, oriented(orbiting, orbiting_angle).parts));
    std::unique_lock lock(mutex_);
    auto [it, inserted] = nfps_.try_emplace(key, std::move(p));
    return *it->second;
  }

 private:
  std::vector<Polygon> polygons_;
  std::vector<collision::ConvexDecomposition> parts_;
  int n_angles_;
  mutable std::shared_mutex mutex_;
  mutable std::map<std::uint64_t, std::unique_ptr<Oriented>> oriented_;
  mutable std::map<std::tuple<std::size_t, int, std::size_t, int>, std::unique_ptr<std::vector<Polygon>>> nfps_;
};

struct Chromosome {
  std::vector<std::size_t> order;
  std::vector<int> angle_idx;  // indexed by polygon id

  void validate(std::size_t n, int n_angles) const {
    if (order.size() != n || angle_idx.size() != n) throw std::invalid_argument("chromosome length mismatch");
    std::vector<bool> seen(n, false);
    for (auto i : order) {
      if (i >= n || seen[i]) throw std::invalid_argument("chromosome order is not a permutation");
      seen[i] = true;
    }
    for (int a : angle_idx) {
      if (a < 0 || a >= n_angles) throw std::invalid_argument("angle index out of range");
    }
  }
};

struct Placement {
  PackingInstance instance;
  double length = 0.0;
  /// angle index actually used per polygon (after height fallback)
  std::vector<int> angles;
};

namespace detail {

struct PlacedPiece {
  Polygon poly;  // world space
  BBox box;
};

inline PlacedPiece make_piece(const Polygon& p, Point t) {
  PlacedPiece out{translated(p, t), {}};
  out.box = bbox(out.poly);
  return out;
}

// Strictly inside a convex CCW polygon by more than tol.
inline bool strictly_inside(const PlacedPiece& pc, Point q, double tol) {
  if (q.x <= pc.box.min.x + tol || q.x >= pc.box.max.x - tol || q.y <= pc.box.min.y + tol ||
      q.y >= pc.box.max.y - tol) {
    return false;
  }
  const auto v = pc.poly.vertices();
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point e = v[(i + 1) % n] - v[i];
    const double len = norm(e);
    if (len == 0.0) continue;
    if (cross(e, q - v[i]) / len <= tol) return false;
  }
  return true;
}

inline std::optional<Point> segment_intersection(Point a, Point b, Point c, Point d) {
  const Point r = b - a, s = d - c;
  const double den = cross(r, s);
  if (den == 0.0) return std::nullopt;
  const double t = cross(c - a, s) / den;
  const double u = cross(c - a, r) / den;
  if (t < 0.0 || t > 1.0 || u < 0.0 || u > 1.0) return std::nullopt;
  return a + r * t;
}

inline bool fits_height(const BBox& b, double h) { return b.height() <= h * (1.0 + 1e-12) + 1e-12; }

}  // namespace detail

/// Bottom-left NFP placement of the polygons in `chrom.order` into a strip.
/// Candidates: inner-fit corners, NFP piece vertices, NFP edge crossings with
/// the inner-fit lines and with each other. The feasible candidate with the
/// smallest resulting strip length wins, ties by lower y then lower x.
inline Placement place_sequence(const NfpCache& cache, const Chromosome& chrom, const Container& container) {
  if (!container.is_strip()) throw std::invalid_argument("place_sequence requires a strip container");
  const std::size_t n = cache.polygons().size();
  const int na = cache.n_angles();
  chrom.validate(n, na);
  const double h = container.height();

  Placement out{PackingInstance(cache.polygons(), container), 0.0, std::vector<int>(n, 0)};
  std::vector<std::size_t> placed_ids;
  std::vector<collision::PlacedShape> shapes;
  double right = 0.0;  // max x of everything placed so far

  for (std::size_t id : chrom.order) {
    int angle = chrom.angle_idx[id];
    int tries = 0;
    while (!detail::fits_height(cache.oriented(id, angle).box, h) && tries < na) {
      angle = (angle + 1) % na;
      ++tries;
    }
    if (tries == na) {
      throw PlacementImpossible("polygon " + std::to_string(id) + " does not fit the strip height at any angle");
    }
    const auto& o = cache.oriented(id, angle);
    const double x0 = -o.box.min.x, y0 = -o.box.min.y, y1 = h - o.box.max.y;
    const double scale = std::max({h, right, o.box.width(), 1.0});
    const double tol = kContactTol;
    const double ifr_tol = 1e-9 * scale;

    std::vector<detail::PlacedPiece> pieces;
    for (std::size_t k = 0; k < placed_ids.size(); ++k) {
      const std::size_t f = placed_ids[k];
      const Point tf = out.instance.poses[f].translation();
      for (const auto& pc : cache.pieces(f, out.angles[f], id, angle)) pieces.push_back(detail::make_piece(pc, tf));
    }

    std::vector<Point> cand{{x0, y0}, {x0, y1}, {std::max(x0, right - o.box.min.x), y0}};
    for (const auto& pc : pieces) {
      const auto v = pc.poly.vertices();
      cand.insert(cand.end(), v.begin(), v.end());
      for (std::size_t i = 0; i < v.size(); ++i) {
        const Point a = v[i], b = v[(i + 1) % v.size()];
        for (double yl : {y0, y1}) {
          if ((a.y - yl) * (b.y - yl) < 0.0) cand.push_back({a.x + (b.x - a.x) * (yl - a.y) / (b.y - a.y), yl});
        }
        if ((a.x - x0) * (b.x - x0) < 0.0) cand.push_back({x0, a.y + (b.y - a.y) * (x0 - a.x) / (b.x - a.x)});
      }
    }
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      for (std::size_t q = p + 1; q < pieces.size(); ++q) {
        if (!pieces[p].box.overlaps(pieces[q].box, tol)) continue;
        const auto u = pieces[p].poly.vertices(), w = pieces[q].poly.vertices();
        for (std::size_t i = 0; i < u.size(); ++i) {
          for (std::size_t j = 0; j < w.size(); ++j) {
            if (auto x = detail::segment_intersection(u[i], u[(i + 1) % u.size()], w[j], w[(j + 1) % w.size()])) {
              cand.push_back(*x);
            }
          }
        }
      }
    }

    struct Keyed {
      double length, y, x;
      Point t;
    };
    std::vector<Keyed> keyed;
    keyed.reserve(cand.size());
    for (Point t : cand) {
      if (t.x < x0 - ifr_tol || t.y < y0 - ifr_tol || t.y > y1 + ifr_tol) continue;
      t = {std::max(t.x, x0), std::clamp(t.y, y0, std::max(y0, y1))};
      keyed.push_back({std::max(right, t.x + o.box.max.x), t.y, t.x, t});
    }
    std::sort(keyed.begin(), keyed.end(), [](const Keyed& a, const Keyed& b) {
      return std::tie(a.length, a.y, a.x) < std::tie(b.length, b.y, b.x);
    });

    const collision::ConvexDecomposition parts{o.parts};
    std::optional<Point> chosen;
    for (const auto& k : keyed) {
      const bool blocked = std::any_of(pieces.begin(), pieces.end(),
                                       [&](const detail::PlacedPiece& pc) { return detail::strictly_inside(pc, k.t, tol); });
      if (blocked) continue;
      const collision::PlacedShape s(o.polygon, parts, Pose{k.t.x, k.t.y, 1.0, 0.0});
      const bool hit = std::any_of(shapes.begin(), shapes.end(),
                                   [&](const collision::PlacedShape& other) { return collision::overlaps(s, other); });
      if (hit) continue;
      chosen = k.t;
      break;
    }
    if (!chosen) {
      // right of everything placed is always free
      chosen = Point{std::max(x0, right - o.box.min.x), y0};
    }
    const double th = angle_of(angle, na);
    out.instance.poses[id] = Pose::from_angle(chosen->x, chosen->y, th);
    out.angles[id] = angle;
    shapes.emplace_back(o.polygon, parts, Pose{chosen->x, chosen->y, 1.0, 0.0});
    right = std::max(right, chosen->x + o.box.max.x);
    placed_ids.push_back(id);
  }
  out.length = right;
  return out;
}

inline Placement place_sequence(const std::vector<Polygon>& polygons, const Chromosome& chrom, const Container& c,
                                int n_angles) {
  const NfpCache cache(polygons, n_angles);
  return place_sequence(cache, chrom, c);
}

struct TeacherConfig {
  int n_angles = 32;
  int population = 8;
  int generations = 8;
  int restarts = 10;
  double mutation_rate = 0.1;
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (population < 2) throw std::invalid_argument("population must be >= 2");
    if (n_angles < 1) throw std::invalid_argument("n_angles must be >= 1");
    if (generations < 0 || restarts < 1) throw std::invalid_argument("generations >= 0 and restarts >= 1 required");
    if (!(mutation_rate >= 0.0 && mutation_rate <= 1.0)) throw std::invalid_argument("mutation_rate must be in [0, 1]");
  }
};

inline nlohmann::json to_json(const TeacherConfig& c) {
  return {{"n_angles", c.n_angles},       {"population", c.population},       {"generations", c.generations},
          {"restarts", c.restarts},       {"mutation_rate", c.mutation_rate}, {"rng_seed", c.rng_seed}};
}

struct TeacherRecord {
  PackingInstance instance;
  double utilization = 0.0;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Best fitness per generation of one GA run (index 0 = initial population).
struct GaTrace {
  std::vector<double> best_length;
  std::vector<double> initial_lengths;
};

struct GaResult {
  Chromosome best;
  Placement placement;
  GaTrace trace;
};

inline Chromosome descending_area_chromosome(const std::vector<Polygon>& polys) {
  Chromosome c;
  c.order.resize(polys.size());
  std::iota(c.order.begin(), c.order.end(), std::size_t{0});
  std::stable_sort(c.order.begin(), c.order.end(),
                   [&](std::size_t a, std::size_t b) { return area(polys[a]) > area(polys[b]); });
  c.angle_idx.assign(polys.size(), 0);
  return c;
}

/// Adjacent swaps of the order and uniform angle resampling, each gene with
/// probability `rate`.
inline Chromosome mutate(Chromosome c, double rate, int n_angles, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> ang(0, n_angles - 1);
  for (std::size_t i = 0; i + 1 < c.order.size(); ++i) {
    if (u(rng) < rate) std::swap(c.order[i], c.order[i + 1]);
  }
  for (auto& a : c.angle_idx) {
    if (u(rng) < rate) a = ang(rng);
  }
  return c;
}

/// Single-point order crossover: the prefix of `a` up to the cut, then the
/// remaining ids in `b`'s order. Each id keeps the angle of the parent it came from.
inline Chromosome crossover(const Chromosome& a, const Chromosome& b, std::size_t cut) {
  const std::size_t n = a.order.size();
  Chromosome c;
  c.angle_idx.assign(n, 0);
  std::vector<bool> used(n, false);
  for (std::size_t i = 0; i < cut && i < n; ++i) {
    c.order.push_back(a.order[i]);
    c.angle_idx[a.order[i]] = a.angle_idx[a.order[i]];
    used[a.order[i]] = true;
  }
  for (std::size_t id : b.order) {
    if (used[id]) continue;
    c.order.push_back(id);
    c.angle_idx[id] = b.angle_idx[id];
  }
  return c;
}

/// One GA run: member 0 is the descending-area order at angle 0, the rest are
/// its mutations. Rank-weighted roulette selection, elitism of one.
inline GaResult run_ga(const NfpCache& cache, const Container& container, const TeacherConfig& cfg, Rng& rng) {
  const auto& polys = cache.polygons();
  const std::size_t n = polys.size();
  const std::size_t pop_n = static_cast<std::size_t>(cfg.population);

  struct Member {
    Chromosome c;
    Placement p;
  };
  auto eval = [&](Chromosome c) { return Member{c, place_sequence(cache, c, container)}; };
  auto better = [](const Member& x, const Member& y) { return x.p.length < y.p.length; };

  std::vector<Member> pop;
  const Chromosome seed = descending_area_chromosome(polys);
  pop.push_back(eval(seed));
  while (pop.size() < pop_n) pop.push_back(eval(mutate(seed, cfg.mutation_rate, cfg.n_angles, rng)));

  GaResult res{{}, pop.front().p, {}};
  for (const auto& m : pop) res.trace.initial_lengths.push_back(m.p.length);

  auto sort_pop = [&] { std::stable_sort(pop.begin(), pop.end(), better); };
  sort_pop();
  res.trace.best_length.push_back(pop.front().p.length);

  // rank weights: best gets pop_n, worst gets 1
  std::vector<double> weights(pop_n);
  for (std::size_t i = 0; i < pop_n; ++i) weights[i] = static_cast<double>(pop_n - i);
  std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> cut(1, std::max<std::size_t>(1, n - 1));

  for (int g = 0; g < cfg.generations; ++g) {
    std::vector<Member> next;
    next.push_back(pop.front());
    while (next.size() < pop_n) {
      const auto& a = pop[pick(rng)].c;
      const auto& b = pop[pick(rng)].c;
      const std::size_t c = n > 1 ? cut(rng) : 0;
      next.push_back(eval(mutate(crossover(a, b, c), cfg.mutation_rate, cfg.n_angles, rng)));
    }
    pop = std::move(next);
    sort_pop();
    res.trace.best_length.push_back(pop.front().p.length);
  }
  res.best = pop.front().c;
  res.placement = pop.front().p;
  return res;
}

namespace detail {

inline void check_fits(const NfpCache& cache, const Container& c) {
  for (std::size_t i = 0; i < cache.polygons().size(); ++i) {
    bool ok = false;
    for (int a = 0; a < cache.n_angles() && !ok; ++a) ok = fits_height(cache.oriented(i, a).box, c.height());
    if (!ok) throw PlacementImpossible("polygon " + std::to_string(i) + " does not fit the strip height at any angle");
  }
}

inline TeacherRecord evolve_impl(const std::vector<Polygon>& polygons, const Container& container,
                                 const TeacherConfig& cfg, bool parallel_restarts) {
  cfg.validate();
  if (!container.is_strip()) throw std::invalid_argument("the teacher packs into strip containers");
  const NfpCache cache(polygons, cfg.n_angles);
  check_fits(cache, container);

  std::vector<std::optional<GaResult>> runs(cfg.restarts);
  auto one = [&](std::size_t r) {
    Rng rng = make_rng(cfg.rng_seed, {r});
    runs[r] = run_ga(cache, container, cfg, rng);
  };
  if (parallel_restarts) {
    parallel_for(runs.size(), one);
  } else {
    for (std::size_t r = 0; r < runs.size(); ++r) one(r);
  }
  std::size_t best = 0;
  for (std::size_t r = 1; r < runs.size(); ++r) {
    if (runs[r]->placement.length < runs[best]->placement.length) best = r;
  }
  const GaResult& win = *runs[best];
  TeacherRecord rec{win.placement.instance, utilization(win.placement.instance).value, {}};
  nlohmann::json traces = nlohmann::json::array();
  for (const auto& r : runs) traces.push_back({{"best_length", r->trace.best_length}, {"initial_lengths", r->trace.initial_lengths}});
  rec.provenance = {{"config", to_json(cfg)},
                    {"restart", best},
                    {"length", win.placement.length},
                    {"order", win.best.order},
                    {"angle_idx", win.placement.angles},
                    {"restarts", traces}};
  return rec;
}

}  // namespace detail

/// GA over placement order and discrete angles, restarted `cfg.restarts` times
/// (restart r seeded from derive_seed(rng_seed, r)); the shortest strip wins,
/// ties to the lowest restart.
inline TeacherRecord evolve(const std::vector<Polygon>& polygons, const Container& container, const TeacherConfig& cfg) {
  return detail::evolve_impl(polygons, container, cfg, true);
}

inline nlohmann::json to_json(const TeacherRecord& r) {
  auto j = io::to_json(r.instance);
  j["utilization"] = r.utilization;
  j["provenance"] = r.provenance;
  return j;
}

inline TeacherRecord record_from_json(const nlohmann::json& j, std::size_t line = 0) {
  auto inst = io::from_json(j, line);
  const auto u = j.find("utilization");
  if (u == j.end() || !u->is_number()) throw io::ParseError(line, "utilization", "missing or not a number");
  TeacherRecord r{std::move(inst.instance), u->get<double>(), {}};
  if (auto p = j.find("provenance"); p != j.end()) r.provenance = *p;
  return r;
}

inline std::vector<TeacherRecord> load_records(const std::string& path) {
  io::JsonlReader in(path);
  std::vector<TeacherRecord> out;
  while (auto j = in.next()) out.push_back(record_from_json(*j, in.line()));
  return out;
}

struct Corpus {
  std::vector<TeacherRecord> records;
  diffusion::WeightStats stats;
  /// indices of draws skipped because a polygon could not be placed
  std::vector<std::size_t> skipped;
};

inline nlohmann::json stats_json(const Corpus& c) {
  return {{"u_min", c.stats.u_min},
          {"u_avg", c.stats.u_avg},
          {"u_max", c.stats.u_max},
          {"count", c.records.size()},
          {"skipped", c.skipped}};
}

/// Teacher layouts for `count` puzzles drawn from `spec` (draw i uses seed
/// derive_seed(spec.rng_seed, i)), packed into a strip `height_factor` times
/// the boundary's height. Draws run in parallel; restarts within a draw run
/// sequentially.
inline Corpus generate_corpus(const dataset::PuzzleSpec& spec, std::size_t count, const TeacherConfig& cfg,
                              const std::function<void(const std::string&)>& log = nullptr,
                              double height_factor = 1.0) {
  if (!(height_factor >= 1.0)) throw std::invalid_argument("height_factor must be >= 1");
  std::vector<std::optional<TeacherRecord>> out(count);
  std::vector<std::string> errors(count);
  parallel_for(count, [&](std::size_t i) {
    auto s = spec;
    s.rng_seed = derive_seed(spec.rng_seed, {i});
    const auto puzzle = dataset::generate_puzzle(s);
    auto c = cfg;
    c.rng_seed = derive_seed(cfg.rng_seed, {i});
    try {
      const auto strip = Container::strip(height_factor * puzzle.ground_truth.container.height());
      auto rec = detail::evolve_impl(puzzle.fragments, strip, c, false);
      rec.provenance["puzzle_seed"] = s.rng_seed;
      out[i] = std::move(rec);
    } catch (const PlacementImpossible& e) {
      errors[i] = e.what();
    }
  });
  Corpus corpus;
  std::vector<double> us;
  for (std::size_t i = 0; i < count; ++i) {
    if (!out[i]) {
      corpus.skipped.push_back(i);
      if (log) log("draw " + std::to_string(i) + " skipped: " + errors[i]);
      continue;
    }
    us.push_back(out[i]->utilization);
    corpus.records.push_back(std::move(*out[i]));
  }
  if (!us.empty()) corpus.stats = diffusion::WeightStats::from(us);
  return corpus;
}

inline void write_corpus(const Corpus& c, const std::string& jsonl_path, const std::string& stats_path) {
  io::JsonlWriter w(jsonl_path);
  for (const auto& r : c.records) w.write(to_json(r));
  w.flush();
  std::ofstream s(stats_path);
  if (!s) throw std::runtime_error("cannot write " + stats_path);
  s << stats_json(c).dump(2) << '\n';
}

}  // namespace gfpack::teacher
