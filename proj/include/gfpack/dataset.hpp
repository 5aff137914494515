#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfpack/collision.hpp"
#include "gfpack/geometry.hpp"
#include "gfpack/random.hpp"

namespace gfpack::dataset {

class GenerationFailed : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultSide = 2000.0;

struct PuzzleSpec {
  Polygon boundary = Polygon::rectangle(kDefaultSide, kDefaultSide);
  int fragments = 16;
  double min_fragment_area_frac = 0.02;
  std::uint64_t rng_seed = 0;
  /// Present fragments with uniform random rotations.
  bool scramble = true;
  int max_attempts = 50;
};

struct Puzzle {
  /// Fragments in their local (centroid-origin) frames, as presented to a packer.
  std::vector<Polygon> fragments;
  /// Boundary container with the exact reconstruction poses.
  PackingInstance ground_truth;
};

namespace detail {

// Cuts a simple polygon along the chord of the line through interior point `p`
// (direction `d`) that contains `p`. Both pieces share the same cut points.
inline std::optional<std::pair<Polygon, Polygon>> split(const Polygon& piece, Point p, Point d) {
  const auto& v = piece.vertices();
  const std::size_t n = v.size();
  const BBox b = bbox(piece);
  const double eps = 1e-9 * std::max(b.width(), b.height());
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = cross(d, v[i] - p);
    if (std::abs(s[i]) <= eps) return std::nullopt;  // line through a vertex
  }
  std::optional<std::pair<double, std::size_t>> lo, hi;
  std::vector<Point> cut(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = (i + 1) % n;
    if ((s[i] > 0) == (s[j] > 0)) continue;
    cut[i] = v[i] + (v[j] - v[i]) * (s[i] / (s[i] - s[j]));
    const double t = dot(cut[i] - p, d);
    if (t < 0 && (!lo || t > lo->first)) lo = {t, i};
    if (t > 0 && (!hi || t < hi->first)) hi = {t, i};
  }
  if (!lo || !hi) return std::nullopt;
  const std::size_t ea = lo->second, eb = hi->second;
  auto walk = [&](std::size_t from, std::size_t to) {
    std::vector<Point> out{cut[from]};
    for (std::size_t k = (from + 1) % n;; k = (k + 1) % n) {
      out.push_back(v[k]);
      if (k == to) break;
    }
    out.push_back(cut[to]);
    return out;
  };
  try {
    return std::pair{Polygon(walk(ea, eb)), Polygon(walk(eb, ea))};
  } catch (const GeometryError&) {
    return std::nullopt;
  }
}

inline Point random_interior_point(const Polygon& p, Rng& rng) {
  const BBox b = bbox(p);
  std::uniform_real_distribution<double> ux(b.min.x, b.max.x), uy(b.min.y, b.max.y);
  for (int k = 0; k < 10000; ++k) {
    const Point q{ux(rng), uy(rng)};
    if (point_in_ring(p.vertices(), q)) return q;
  }
  return centroid(p);
}

}  // namespace detail

/// Recursive random straight-chord splitting of the boundary. The ground truth
/// reproduces the boundary exactly (utilization 1).
inline Puzzle generate_puzzle(const PuzzleSpec& spec) {
  if (spec.fragments < 2) throw GenerationFailed("fragments must be >= 2");
  Rng rng(spec.rng_seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  const double total = area(spec.boundary);
  const double min_area = spec.min_fragment_area_frac * total;

  std::vector<Polygon> pieces{spec.boundary};
  while (static_cast<int>(pieces.size()) < spec.fragments) {
    const auto largest = std::max_element(pieces.begin(), pieces.end(),
                                          [](const Polygon& a, const Polygon& b) { return area(a) < area(b); });
    bool done = false;
    for (int attempt = 0; attempt < spec.max_attempts && !done; ++attempt) {
      const Point p = detail::random_interior_point(*largest, rng);
      const double th = angle(rng);
      auto halves = detail::split(*largest, p, {std::cos(th), std::sin(th)});
      if (!halves || area(halves->first) < min_area || area(halves->second) < min_area) continue;
      *largest = std::move(halves->first);
      pieces.push_back(std::move(halves->second));
      done = true;
    }
    if (!done) {
      throw GenerationFailed("no valid cut after " + std::to_string(spec.max_attempts) + " attempts at " +
                             std::to_string(pieces.size()) + " fragments");
    }
  }

  std::uniform_real_distribution<double> turn(0.0, 2 * std::numbers::pi);
  Puzzle out{{}, PackingInstance({}, Container::boundary(spec.boundary))};
  for (const auto& piece : pieces) {
    auto [local, c] = recentered(piece);
    const double th = spec.scramble ? turn(rng) : 0.0;
    if (th != 0.0) local = apply_pose(local, Pose::from_angle(0, 0, th));
    out.fragments.push_back(local);
    out.ground_truth.polygons.push_back(local);
    out.ground_truth.poses.push_back(Pose::from_angle(c.x, c.y, -th));
  }
  return out;
}

inline Polygon square_boundary(double side = kDefaultSide) { return Polygon::rectangle(side, side); }

/// 16 fragments of a square.
inline PuzzleSpec square16(std::uint64_t seed, double side = kDefaultSide) {
  PuzzleSpec s;
  s.boundary = square_boundary(side);
  s.fragments = 16;
  s.rng_seed = seed;
  return s;
}

/// 10 fragments of a boundary that is itself a fragment of a square16 puzzle,
/// rescaled to the square's area and moved to the positive quadrant.
inline PuzzleSpec arbitrary(std::uint64_t seed, double side = kDefaultSide) {
  auto src = square16(derive_seed(seed, {1}), side);
  src.scramble = false;
  const auto parent = generate_puzzle(src);
  Rng rng(derive_seed(seed, {2}));
  std::uniform_int_distribution<std::size_t> pick(0, parent.fragments.size() - 1);
  const Polygon& f = parent.fragments[pick(rng)];
  const double k = side / std::sqrt(area(f));
  std::vector<Point> pts;
  for (const Point& p : f.vertices()) pts.push_back(p * k);
  const BBox b = bbox(pts);
  for (Point& p : pts) p -= b.min;
  PuzzleSpec s;
  s.boundary = Polygon(std::move(pts));
  s.fragments = 10;
  s.rng_seed = derive_seed(seed, {3});
  return s;
}

inline PuzzleSpec preset(const std::string& name, std::uint64_t seed, double side = kDefaultSide) {
  if (name == "square16") return square16(seed, side);
  if (name == "arbitrary") return arbitrary(seed, side);
  if (name.rfind("square", 0) == 0) {
    PuzzleSpec s = square16(seed, side);
    s.fragments = std::stoi(name.substr(6));
    return s;
  }
  throw std::invalid_argument("unknown preset '" + name + "' (square16, arbitrary, squareN)");
}

/// The ground truth re-expressed in a strip of the boundary's height (the
/// boundary's bounding box starts at the origin for all presets).
inline PackingInstance as_strip(const Puzzle& p) {
  return PackingInstance(p.ground_truth.polygons, Container::strip(p.ground_truth.container.height()),
                         p.ground_truth.poses);
}

/// Boundary-vs-pieces intersection over union.
inline double iou(const PackingInstance& inst) {
  if (!inst.container.is_boundary()) throw std::invalid_argument("iou requires a boundary container");
  const auto placed = inst.placed();
  const double b = area(inst.container.polygon());
  const double pieces = union_area(placed);
  std::vector<Polygon> all = placed;
  all.push_back(inst.container.polygon());
  const double uni = union_area(all);
  const double inter = std::clamp(b + pieces - uni, 0.0, uni);
  return uni > 0.0 ? inter / uni : 0.0;
}

struct FeasibilityReport {
  bool feasible = false;
  double overlap = 0.0;
  double tol = 0.0;
  std::vector<std::size_t> outside;
};

/// Feasible iff total pairwise overlap <= tol (inclusive) and every polygon is
/// inside the container. Default tol: 1e-9 times the summed polygon area.
inline FeasibilityReport feasibility(const PackingInstance& inst, std::optional<double> tol = std::nullopt) {
  FeasibilityReport r;
  r.tol = tol ? *tol : 1e-9 * inst.total_area();
  r.overlap = collision::overlap_area(inst).total;
  const auto placed = inst.placed();
  for (std::size_t i = 0; i < placed.size(); ++i) {
    if (!inside_container(placed[i], inst.container)) r.outside.push_back(i);
  }
  r.feasible = r.overlap <= r.tol && r.outside.empty();
  return r;
}

struct Metrics {
  double utilization = 0.0;
  double overlap_percent = 0.0;
  std::optional<double> iou;
  bool feasible = false;
};

inline Metrics evaluate(const PackingInstance& inst, std::optional<double> tol = std::nullopt) {
  Metrics m;
  m.utilization = utilization(inst).value;
  const auto f = feasibility(inst, tol);
  m.feasible = f.feasible;
  const double total = inst.total_area();
  m.overlap_percent = total > 0.0 ? 100.0 * f.overlap / total : 0.0;
  if (inst.container.is_boundary()) m.iou = iou(inst);
  return m;
}

/// Min | Avg | Max summary of a series.
struct Summary {
  double min = 0.0, avg = 0.0, max = 0.0;
  std::size_t count = 0;
};

inline Summary summarize(std::span<const double> xs) {
  Summary s;
  s.count = xs.size();
  if (xs.empty()) return s;
  s.min = *std::min_element(xs.begin(), xs.end());
  s.max = *std::max_element(xs.begin(), xs.end());
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.avg = sum / static_cast<double>(xs.size());
  return s;
}

}  // namespace gfpack::dataset
