#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "gfpack/geometry.hpp"
#include "gfpack/parallel.hpp"

namespace gfpack::collision {

/// Translation that moves the first polygon of an ordered pair out of overlap.
struct SeparationVector {
  double dx = 0.0;
  double dy = 0.0;
  double depth = 0.0;

  [[nodiscard]] Point vec() const { return {dx, dy}; }
  [[nodiscard]] bool zero() const { return depth == 0.0; }
};

struct ConvexDecomposition {
  std::vector<Polygon> parts;
};

namespace detail {

inline bool point_in_triangle_closed(Point p, Point a, Point b, Point c, double eps) {
  return orient(a, b, p) >= -eps && orient(b, c, p) >= -eps && orient(c, a, p) >= -eps;
}

/// Drops vertices whose neighbours are collinear with them.
inline std::vector<Point> strip_collinear(std::span<const Point> v) {
  std::vector<Point> out(v.begin(), v.end());
  bool changed = true;
  while (changed && out.size() > 3) {
    changed = false;
    for (std::size_t i = 0; i < out.size() && out.size() > 3; ++i) {
      const std::size_t n = out.size();
      const Point a = out[(i + n - 1) % n], b = out[i], c = out[(i + 1) % n];
      const double scale = std::max(norm(b - a), norm(c - b));
      if (std::abs(orient(a, b, c)) <= kWeldTol * scale && dot(b - a, c - b) > 0.0) {
        out.erase(out.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        --i;
      }
    }
  }
  return out;
}

// Ear clipping on a CCW simple contour. Returns index triples into v.
inline std::vector<std::array<std::size_t, 3>> triangulate(std::span<const Point> v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) idx[i] = i;
  std::vector<std::array<std::size_t, 3>> tris;
  const double scale = std::max(bbox(v).width(), bbox(v).height());
  const double eps = 1e-12 * scale * scale;

  auto is_ear = [&](std::size_t k, bool strict) {
    const std::size_t m = idx.size();
    const std::size_t i0 = idx[(k + m - 1) % m], i1 = idx[k], i2 = idx[(k + 1) % m];
    const Point a = v[i0], b = v[i1], c = v[i2];
    if (orient(a, b, c) <= eps) return false;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t q = idx[j];
      if (q == i0 || q == i1 || q == i2) continue;
      const Point p = v[q];
      if (p == a || p == b || p == c) continue;
      if (strict ? point_in_triangle_closed(p, a, b, c, -eps) : point_in_triangle_closed(p, a, b, c, eps)) {
        return false;
      }
    }
    return true;
  };

  while (idx.size() > 3) {
    bool clipped = false;
    for (int pass = 0; pass < 2 && !clipped; ++pass) {
      for (std::size_t k = 0; k < idx.size(); ++k) {
        if (!is_ear(k, pass == 1)) continue;
        const std::size_t m = idx.size();
        tris.push_back({idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]});
        idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(k));
        clipped = true;
        break;
      }
    }
    if (!clipped) throw GeometryError("ear clipping failed: polygon is not simple");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

// Hertel-Mehlhorn: greedily remove triangulation diagonals whose removal keeps
// both merged pieces convex.
inline std::vector<std::vector<std::size_t>> merge_convex(
    std::span<const Point> v, const std::vector<std::array<std::size_t, 3>>& tris) {
  const std::size_t n = v.size();
  std::vector<std::vector<std::size_t>> pieces;
  for (const auto& t : tris) pieces.push_back({t[0], t[1], t[2]});

  auto is_boundary_edge = [n](std::size_t a, std::size_t b) {
    return (a + 1) % n == b || (b + 1) % n == a;
  };
  auto find_edge = [&](std::size_t a, std::size_t b) -> std::pair<std::size_t, std::size_t> {
    for (std::size_t p = 0; p < pieces.size(); ++p) {
      const auto& pc = pieces[p];
      for (std::size_t k = 0; k < pc.size(); ++k) {
        if (pc[k] == a && pc[(k + 1) % pc.size()] == b) return {p, k};
      }
    }
    return {pieces.size(), 0};
  };

  std::vector<std::pair<std::size_t, std::size_t>> diagonals;
  for (const auto& t : tris) {
    for (int e = 0; e < 3; ++e) {
      const std::size_t a = t[e], b = t[(e + 1) % 3];
      if (!is_boundary_edge(a, b) && a < b) diagonals.emplace_back(a, b);
    }
  }

  for (const auto& [a, b] : diagonals) {
    const auto [pi, ki] = find_edge(a, b);
    const auto [qi, kq] = find_edge(b, a);
    if (pi >= pieces.size() || qi >= pieces.size() || pi == qi) continue;
    const auto& p = pieces[pi];
    const auto& q = pieces[qi];
    // p walks ... a b ...; start it at b so it ends at a, then append q's
    // vertices strictly between a and b.
    std::vector<std::size_t> merged;
    for (std::size_t s = 0; s < p.size(); ++s) merged.push_back(p[(ki + 1 + s) % p.size()]);
    for (std::size_t s = 2; s < q.size(); ++s) merged.push_back(q[(kq + s) % q.size()]);
    std::vector<Point> pts;
    pts.reserve(merged.size());
    for (auto i : merged) pts.push_back(v[i]);
    if (!is_convex(pts)) continue;
    pieces[pi] = std::move(merged);
    pieces.erase(pieces.begin() + static_cast<std::ptrdiff_t>(qi));
  }
  return pieces;
}

}  // namespace detail

/// Splits a simple polygon into convex, pairwise interior-disjoint parts.
inline ConvexDecomposition convex_decompose(const Polygon& p) {
  if (is_convex(p)) return {{p}};
  const auto v = detail::strip_collinear(p.vertices());
  const auto tris = detail::triangulate(v);
  const auto pieces = detail::merge_convex(v, tris);
  ConvexDecomposition out;
  out.parts.reserve(pieces.size());
  for (const auto& pc : pieces) {
    std::vector<Point> pts;
    pts.reserve(pc.size());
    for (auto i : pc) pts.push_back(v[i]);
    out.parts.push_back(Polygon::trusted(std::move(pts)));
  }
  return out;
}

namespace detail {

inline std::pair<double, double> project(std::span<const Point> v, Point axis) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Point& p : v) {
    const double d = dot(p, axis);
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  return {lo, hi};
}

// Minimal translation of convex `a` out of convex `b` over the edge normals of
// both. Equal depths are broken by the larger dot product with `prefer`, then
// with `fallback`.
inline std::optional<SeparationVector> convex_mtv(std::span<const Point> a, std::span<const Point> b,
                                                  Point prefer, Point fallback,
                                                  double contact = kContactTol) {
  double best = std::numeric_limits<double>::infinity();
  Point best_dir{};
  const double scale = std::max({bbox(a).width(), bbox(a).height(), bbox(b).width(), bbox(b).height(), 1.0});
  const double tie = 1e-12 * scale;

  auto consider = [&](Point dir, double depth) {
    if (depth < best - tie) {
      best = depth;
      best_dir = dir;
      return;
    }
    if (depth > best + tie) return;
    const double dp = dot(dir, prefer) - dot(best_dir, prefer);
    const double pscale = std::max(norm(prefer), 1e-300);
    if (dp > 1e-12 * pscale) {
      best = std::min(best, depth);
      best_dir = dir;
    } else if (std::abs(dp) <= 1e-12 * pscale && dot(dir, fallback) > dot(best_dir, fallback) + 1e-12) {
      best = std::min(best, depth);
      best_dir = dir;
    }
  };

  for (int which = 0; which < 2; ++which) {
    const auto v = which == 0 ? a : b;
    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point e = v[(i + 1) % n] - v[i];
      const double len = norm(e);
      if (len <= 0.0) continue;
      const Point axis{e.y / len, -e.x / len};
      const auto [amin, amax] = project(a, axis);
      const auto [bmin, bmax] = project(b, axis);
      const double push_neg = amax - bmin;
      const double push_pos = bmax - amin;
      if (std::min(push_neg, push_pos) <= contact) return std::nullopt;
      consider(-axis, push_neg);
      consider(axis, push_pos);
    }
  }
  return SeparationVector{best_dir.x * best, best_dir.y * best, best};
}

inline Point mean_point(std::span<const Point> v) {
  Point c{};
  for (const Point& p : v) c += p;
  return c / static_cast<double>(v.size());
}

}  // namespace detail

/// Minimal translation vector separating convex `a` from convex `b`; empty
/// when their interiors are disjoint.
inline std::optional<SeparationVector> sat_mtv(const Polygon& a, const Polygon& b) {
  const Point prefer = centroid(a) - centroid(b);
  return detail::convex_mtv(a.vertices(), b.vertices(), prefer, Point{1.0, 0.0});
}

/// A polygon at its pose with cached world-space convex parts.
struct PlacedShape {
  Polygon polygon;
  std::vector<Polygon> parts;
  std::vector<BBox> part_boxes;
  BBox box;
  Point center;
  double area = 0.0;

  PlacedShape(const Polygon& local, const ConvexDecomposition& local_parts, const Pose& pose)
      : polygon(apply_pose(local, pose)) {
    parts.reserve(local_parts.parts.size());
    for (const auto& part : local_parts.parts) {
      parts.push_back(apply_pose(part, pose));
      part_boxes.push_back(bbox(parts.back()));
    }
    box = bbox(polygon);
    center = centroid(polygon);
    area = gfpack::area(polygon);
  }
  PlacedShape(const Polygon& world, const ConvexDecomposition& world_parts)
      : PlacedShape(world, world_parts, Pose::identity()) {}
};

// Aggregates per convex-part-pair MTVs of `a` against `b`: the vector sum,
// capped in magnitude at the deepest single pair. Equal-depth axes are broken
// toward `prefer`, then toward `fallback`.
inline SeparationVector separation(const PlacedShape& a, const PlacedShape& b, Point prefer, Point fallback,
                                   double contact = kContactTol) {
  if (!a.box.overlaps(b.box)) return {};
  Point sum{};
  double deepest = 0.0;
  bool any = false;
  for (std::size_t i = 0; i < a.parts.size(); ++i) {
    for (std::size_t j = 0; j < b.parts.size(); ++j) {
      if (!a.part_boxes[i].overlaps(b.part_boxes[j])) continue;
      const auto m = detail::convex_mtv(a.parts[i].vertices(), b.parts[j].vertices(), prefer, fallback, contact);
      if (!m) continue;
      any = true;
      sum += m->vec();
      deepest = std::max(deepest, m->depth);
    }
  }
  if (!any) return {};
  double mag = norm(sum);
  if (mag > deepest) {
    sum *= deepest / mag;
    mag = deepest;
  }
  if (mag == 0.0) {
    // opposing part MTVs cancelled; fall back to the tie direction
    sum = fallback * deepest;
    mag = deepest;
  }
  return {sum.x, sum.y, mag};
}

/// Separation of `a` from `b`; coincident ties go to +x when `a` is the lower index.
inline SeparationVector separation(const PlacedShape& a, const PlacedShape& b, bool a_is_lower = true) {
  return separation(a, b, a.center - b.center, Point{a_is_lower ? 1.0 : -1.0, 0.0});
}

/// Interior-overlap predicate (penetration beyond the contact tolerance).
inline bool overlaps(const PlacedShape& a, const PlacedShape& b, double contact = kContactTol) {
  if (!a.box.overlaps(b.box)) return false;
  for (std::size_t i = 0; i < a.parts.size(); ++i) {
    for (std::size_t j = 0; j < b.parts.size(); ++j) {
      if (!a.part_boxes[i].overlaps(b.part_boxes[j])) continue;
      if (detail::convex_mtv(a.parts[i].vertices(), b.parts[j].vertices(), {}, {1, 0}, contact)) return true;
    }
  }
  return false;
}

/// Separation vector for polygon i (at pose a_i) against polygon j (at a_j).
/// The vector moves i; the coincident-case tie goes to +x for the lower index.
inline SeparationVector separation_vector(const Polygon& p_i, const Pose& a_i, const Polygon& p_j,
                                          const Pose& a_j, bool i_is_lower = true) {
  const PlacedShape si(p_i, convex_decompose(p_i), a_i);
  const PlacedShape sj(p_j, convex_decompose(p_j), a_j);
  return separation(si, sj, i_is_lower);
}

/// Intersection area of two placed shapes, summed over convex part pairs.
inline double intersection_area(const PlacedShape& a, const PlacedShape& b) {
  if (!a.box.overlaps(b.box)) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.parts.size(); ++i) {
    for (std::size_t j = 0; j < b.parts.size(); ++j) {
      if (!a.part_boxes[i].overlaps(b.part_boxes[j])) continue;
      s += convex_intersection_area(a.parts[i].vertices(), b.parts[j].vertices());
    }
  }
  return s;
}

// Exterior band of a boundary polygon inside an enclosing rectangle, split at
// a vertical line through the boundary so each band piece is hole-free, then
// convex-decomposed.
class BoundaryBand {
 public:
  BoundaryBand(const Polygon& boundary, const BBox& must_cover) : boundary_(boundary) {
    BBox r = bbox(boundary);
    r.expand(must_cover);
    const double m = std::max(r.width(), r.height()) + 1.0;
    rect_ = r;
    rect_.min -= Point{m, m};
    rect_.max += Point{m, m};

    const BBox bb = bbox(boundary);
    std::vector<double> xs;
    for (const Point& p : boundary.vertices()) xs.push_back(p.x);
    std::sort(xs.begin(), xs.end());
    // cut through the widest gap between vertex abscissae near the middle
    double cut = 0.5 * (bb.min.x + bb.max.x);
    double best_gap = -1.0;
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
      const double gap = xs[i + 1] - xs[i];
      const double mid = 0.5 * (xs[i] + xs[i + 1]);
      const double centrality = 1.0 - std::abs(mid - 0.5 * (bb.min.x + bb.max.x)) / std::max(bb.width(), 1e-300);
      if (gap > 0.0 && gap * centrality > best_gap) {
        best_gap = gap * centrality;
        cut = mid;
      }
    }
    const Polygon left = Polygon::rectangle(cut - rect_.min.x, rect_.height(), rect_.min);
    const Polygon right = Polygon::rectangle(rect_.max.x - cut, rect_.height(), Point{cut, rect_.min.y});
    for (const Polygon* half : {&left, &right}) {
      for (const Region& reg : difference_regions(*half, boundary)) {
        if (reg.outer.size() < 3) continue;
        std::vector<Point> outer = reg.outer;
        Polygon piece(std::move(outer));
        auto dec = convex_decompose(piece);
        for (auto& part : dec.parts) parts_.push_back(std::move(part));
      }
    }
    ConvexDecomposition dec{parts_};
    shape_.emplace(Polygon::rectangle(rect_.width(), rect_.height(), rect_.min), dec);
    shape_->center = centroid(boundary);
  }

  [[nodiscard]] bool covers(const BBox& b) const {
    return rect_.min.x < b.min.x && rect_.min.y < b.min.y && rect_.max.x > b.max.x && rect_.max.y > b.max.y;
  }
  [[nodiscard]] const std::vector<Polygon>& parts() const { return parts_; }

  /// Translation pushing the placed shape out of the band (into the boundary).
  /// Capped part sums under-shoot at corners, so the push is repeated from the
  /// moved position until nothing protrudes.
  [[nodiscard]] Point offset(const PlacedShape& s, int max_rounds = 16) const {
    Point total{};
    for (int round = 0; round < max_rounds; ++round) {
      PlacedShape moved = s;
      if (round > 0) moved = PlacedShape(s.polygon, ConvexDecomposition{s.parts}, Pose{total.x, total.y, 1, 0});
      // ties prefer moving toward the boundary interior
      const Point inward = shape_->center - moved.center;
      const auto v = separation(moved, *shape_, inward, inward);
      if (v.zero()) break;
      total += v.vec();
    }
    return total;
  }

 private:
  Polygon boundary_;
  BBox rect_;
  std::vector<Polygon> parts_;
  std::optional<PlacedShape> shape_;
};

namespace detail {
inline Point strip_offset(const BBox& b, double h) {
  Point o{};
  if (b.min.x < 0.0) o.x = -b.min.x;
  if (b.min.y < 0.0 && b.max.y > h) {
    o.y = 0.5 * (h - b.min.y - b.max.y);
  } else if (b.min.y < 0.0) {
    o.y = -b.min.y;
  } else if (b.max.y > h) {
    o.y = h - b.max.y;
  }
  return o;
}
}  // namespace detail

/// Minimal offset bringing a placed shape back inside the container.
inline Point boundary_offset(const PlacedShape& s, const Container& c) {
  if (c.is_strip()) return detail::strip_offset(s.box, c.height());
  if (inside_container(s.polygon, c)) return {};
  const BoundaryBand band(c.polygon(), s.box);
  return band.offset(s);
}

/// Container offsets for many shapes, reusing one exterior band for Boundary
/// containers. Shapes outside the prepared cover get a temporary band.
class ContainerOffsets {
 public:
  ContainerOffsets(const Container& c, const BBox& cover) : container_(c) {
    if (c.is_boundary()) band_.emplace(c.polygon(), cover);
  }

  [[nodiscard]] Point operator()(const PlacedShape& s) const {
    if (container_.is_strip()) return detail::strip_offset(s.box, container_.height());
    if (inside_container(s.polygon, container_)) return {};
    if (band_->covers(s.box)) return band_->offset(s);
    return BoundaryBand(container_.polygon(), s.box).offset(s);
  }

 private:
  Container container_;
  std::optional<BoundaryBand> band_;
};

inline Point boundary_offset(const Polygon& p, const Pose& a, const Container& c) {
  return boundary_offset(PlacedShape(p, convex_decompose(p), a), c);
}

struct PairOverlap {
  std::size_t i = 0;
  std::size_t j = 0;
  double area = 0.0;
};

struct OverlapReport {
  double total = 0.0;
  /// total as a percentage of the summed polygon areas
  double percent = 0.0;
  std::vector<PairOverlap> pairs;
};

inline std::vector<PlacedShape> place_all(const PackingInstance& inst,
                                          std::span<const ConvexDecomposition> parts) {
  std::vector<PlacedShape> out;
  out.reserve(inst.size());
  for (std::size_t i = 0; i < inst.size(); ++i) out.emplace_back(inst.polygons[i], parts[i], inst.poses[i]);
  return out;
}

inline std::vector<ConvexDecomposition> decompose_all(const PackingInstance& inst) {
  std::vector<ConvexDecomposition> out;
  out.reserve(inst.size());
  for (const auto& p : inst.polygons) out.push_back(convex_decompose(p));
  return out;
}

inline OverlapReport overlap_area(std::span<const PlacedShape> shapes) {
  const std::size_t n = shapes.size();
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (shapes[i].box.overlaps(shapes[j].box)) index.emplace_back(i, j);
    }
  }
  std::vector<double> areas(index.size(), 0.0);
  parallel_for(index.size(), [&](std::size_t k) {
    areas[k] = intersection_area(shapes[index[k].first], shapes[index[k].second]);
  });
  OverlapReport r;
  double total_area = 0.0;
  for (const auto& s : shapes) total_area += s.area;
  for (std::size_t k = 0; k < index.size(); ++k) {
    if (areas[k] <= 0.0) continue;
    r.total += areas[k];
    r.pairs.push_back({index[k].first, index[k].second, areas[k]});
  }
  r.percent = total_area > 0.0 ? 100.0 * r.total / total_area : 0.0;
  return r;
}

inline OverlapReport overlap_area(const PackingInstance& inst) {
  const auto parts = decompose_all(inst);
  const auto shapes = place_all(inst, parts);
  return overlap_area(shapes);
}

}  // namespace gfpack::collision
