#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "gfpack/collision.hpp"
#include "gfpack/geometry.hpp"
#include "gfpack/parallel.hpp"

namespace gfpack::enhancement {

class EnhancementError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EnhanceConfig {
  int max_iters = 100;
  /// Absolute overlap tolerance; unset means 1e-9 times the summed polygon area.
  std::optional<double> overlap_tol;
  double gap_search_eps = 1e-4;
  double step_damping = 1.0;
  /// Number of (resolve, eliminate-gaps) rounds.
  int repeats = 1;
  int max_gap_sweeps = 50;

  void validate() const {
    if (max_iters < 1) throw EnhancementError("max_iters must be >= 1");
    if (overlap_tol && !(*overlap_tol > 0.0)) throw EnhancementError("overlap_tol must be > 0");
    if (!(gap_search_eps > 0.0)) throw EnhancementError("gap_search_eps must be > 0");
    if (!(step_damping > 0.0 && step_damping <= 1.0)) throw EnhancementError("step_damping must be in (0, 1]");
    if (repeats < 1) throw EnhancementError("repeats must be >= 1");
  }
  [[nodiscard]] double overlap_tolerance(const PackingInstance& inst) const {
    return overlap_tol ? *overlap_tol : 1e-9 * inst.total_area();
  }
};

struct EnhanceReport {
  int iterations = 0;
  double final_overlap = 0.0;
  bool inside = false;
  bool feasible = false;
  /// false when max_iters ran out with residual overlap (NonConvergence)
  bool converged = false;
  int gap_sweeps = 0;
  double length_before_gaps = 0.0;
  double length_after_gaps = 0.0;
  /// Strip length after each polygon processed by gap elimination.
  std::vector<double> length_trace;
};

struct EnhanceResult {
  PackingInstance instance;
  EnhanceReport report;
};

namespace detail {

inline BBox cover_box(std::span<const collision::PlacedShape> shapes) {
  BBox b;
  for (const auto& s : shapes) b.expand(s.box);
  return b;
}

// The displacement update with precomputed placed shapes.
inline std::vector<Point> displacement(std::span<const collision::PlacedShape> shapes,
                                       const collision::ContainerOffsets& offsets) {
  const std::size_t n = shapes.size();
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (shapes[i].box.overlaps(shapes[j].box)) pairs.emplace_back(i, j);
    }
  }
  std::vector<Point> nu(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t k) {
    const auto [i, j] = pairs[k];
    nu[k] = collision::separation(shapes[i], shapes[j], true).vec();
  });
  std::vector<Point> off(n);
  parallel_for(n, [&](std::size_t i) { off[i] = offsets(shapes[i]); });

  std::vector<Point> v(n);
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const auto [i, j] = pairs[k];
    const double si = shapes[i].area, sj = shapes[j].area;
    v[i] += nu[k] * (sj / (si + sj));
    v[j] -= nu[k] * (si / (si + sj));
  }
  for (std::size_t i = 0; i < n; ++i) v[i] += off[i];
  return v;
}

struct Status {
  double overlap = 0.0;
  bool inside = true;
};

inline Status status(std::span<const collision::PlacedShape> shapes, const Container& c) {
  Status s;
  s.overlap = collision::overlap_area(shapes).total;
  for (const auto& sh : shapes) {
    if (!inside_container(sh.polygon, c)) {
      s.inside = false;
      break;
    }
  }
  return s;
}

}  // namespace detail

/// Per-polygon displacement vectors for one overlap-resolution step. Pure.
inline std::vector<Point> displacement_step(const PackingInstance& inst) {
  const auto parts = collision::decompose_all(inst);
  const auto shapes = collision::place_all(inst, parts);
  const collision::ContainerOffsets offsets(inst.container, detail::cover_box(shapes));
  return detail::displacement(shapes, offsets);
}

/// Iterates the area-weighted displacement (translation only) until the layout
/// is overlap-free and inside the container, or max_iters is reached.
inline EnhanceResult resolve_overlaps(const PackingInstance& inst, const EnhanceConfig& cfg = {}) {
  cfg.validate();
  const auto parts = collision::decompose_all(inst);
  const double tol = cfg.overlap_tolerance(inst);
  EnhanceResult out{inst, {}};
  auto& poses = out.instance.poses;
  for (auto& p : poses) p = p.normalized();

  auto shapes = collision::place_all(out.instance, parts);
  const collision::ContainerOffsets offsets(inst.container, detail::cover_box(shapes));
  auto st = detail::status(shapes, inst.container);
  int it = 0;
  while (!(st.overlap <= tol && st.inside) && it < cfg.max_iters) {
    const auto v = detail::displacement(shapes, offsets);
    for (std::size_t i = 0; i < poses.size(); ++i) poses[i] = poses[i].translated(v[i] * cfg.step_damping);
    shapes = collision::place_all(out.instance, parts);
    st = detail::status(shapes, inst.container);
    ++it;
  }
  out.report.iterations = it;
  out.report.final_overlap = st.overlap;
  out.report.inside = st.inside;
  out.report.feasible = st.overlap <= tol && st.inside;
  out.report.converged = out.report.feasible;
  return out;
}

namespace detail {

// Whether sliding `moving` by distance d along unit direction u stays clear of
// every other shape: each convex part's swept hull is tested, which makes the
// predicate monotone in d.
inline bool sweep_is_free(const collision::PlacedShape& moving, std::span<const collision::PlacedShape> others,
                          std::size_t self, Point u, double d) {
  const Point shift = u * d;
  for (const auto& part : moving.parts) {
    std::vector<Point> pts(part.vertices().begin(), part.vertices().end());
    if (d > 0.0) {
      for (const Point& p : part.vertices()) pts.push_back(p + shift);
    }
    const auto hull = convex_hull(std::move(pts));
    const BBox hb = bbox(hull);
    for (std::size_t j = 0; j < others.size(); ++j) {
      if (j == self || !hb.overlaps(others[j].box)) continue;
      for (std::size_t k = 0; k < others[j].parts.size(); ++k) {
        if (!hb.overlaps(others[j].part_boxes[k])) continue;
        if (collision::detail::convex_mtv(hull, others[j].parts[k].vertices(), {}, {1, 0})) return false;
      }
    }
  }
  return true;
}

// Largest collision-free slide in [0, limit], to within eps.
inline double max_slide(const collision::PlacedShape& moving, std::span<const collision::PlacedShape> shapes,
                        std::size_t self, Point u, double limit, double eps) {
  if (limit <= 0.0) return 0.0;
  if (sweep_is_free(moving, shapes, self, u, limit)) return limit;
  double lo = 0.0, hi = limit;
  while (hi - lo > eps) {
    const double mid = 0.5 * (lo + hi);
    (sweep_is_free(moving, shapes, self, u, mid) ? lo : hi) = mid;
  }
  return lo;
}

}  // namespace detail

/// Left-bottom compaction for strip layouts: each polygon, in ascending min-x
/// order, slides as far as it can along -x and then -y. Sweeps repeat until no
/// polygon moves by more than gap_search_eps.
inline PackingInstance eliminate_gaps(const PackingInstance& inst, const EnhanceConfig& cfg = {},
                                      EnhanceReport* report = nullptr) {
  cfg.validate();
  if (!inst.container.is_strip()) throw EnhancementError("gap elimination requires a strip container");
  const auto parts = collision::decompose_all(inst);
  PackingInstance out = inst;
  for (auto& p : out.poses) p = p.normalized();
  auto shapes = collision::place_all(out, parts);
  const double h = inst.container.height();
  if (report) report->length_before_gaps = strip_length(out);

  int sweeps = 0;
  for (; sweeps < cfg.max_gap_sweeps; ++sweeps) {
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return std::tuple(shapes[a].box.min.x, shapes[a].box.min.y, a) <
             std::tuple(shapes[b].box.min.x, shapes[b].box.min.y, b);
    });
    double moved_max = 0.0;
    for (std::size_t i : order) {
      for (const Point u : {Point{-1, 0}, Point{0, -1}}) {
        const double limit = u.x != 0.0 ? shapes[i].box.min.x : std::min(shapes[i].box.min.y, h);
        const double d = detail::max_slide(shapes[i], shapes, i, u, limit, cfg.gap_search_eps);
        if (d <= 0.0) continue;
        out.poses[i] = out.poses[i].translated(u * d);
        shapes[i] = collision::PlacedShape(out.polygons[i], parts[i], out.poses[i]);
        moved_max = std::max(moved_max, d);
      }
      if (report) report->length_trace.push_back(strip_length(out));
    }
    if (moved_max <= cfg.gap_search_eps) {
      ++sweeps;
      break;
    }
  }
  if (report) {
    report->gap_sweeps += sweeps;
    report->length_after_gaps = strip_length(out);
  }
  return out;
}

/// Overlap resolution followed, for feasible strip layouts, by gap elimination.
inline EnhanceResult enhance(const PackingInstance& inst, const EnhanceConfig& cfg = {}) {
  cfg.validate();
  EnhanceResult cur{inst, {}};
  int total_iters = 0;
  for (int r = 0; r < cfg.repeats; ++r) {
    auto resolved = resolve_overlaps(cur.instance, cfg);
    total_iters += resolved.report.iterations;
    EnhanceReport rep = resolved.report;
    rep.gap_sweeps = cur.report.gap_sweeps;
    rep.length_trace = std::move(cur.report.length_trace);
    cur.instance = std::move(resolved.instance);
    if (rep.feasible && cur.instance.container.is_strip()) {
      cur.instance = eliminate_gaps(cur.instance, cfg, &rep);
    }
    cur.report = std::move(rep);
  }
  cur.report.iterations = total_iters;
  return cur;
}

}  // namespace gfpack::enhancement
