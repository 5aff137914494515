#pragma once

#include <algorithm>
#include <span>
#include <utility>
#include <vector>

#include <boost/geometry.hpp>
#include <boost/geometry/geometries/point_xy.hpp>
#include <boost/geometry/geometries/polygon.hpp>
#include <boost/geometry/geometries/multi_polygon.hpp>

#include "gfpack/geometry/primitives.hpp"

namespace gfpack {

// Area of the union of CCW simple polygons.
//
// Each edge contributes the portions of it not covered by any other polygon.
// Collinear same-direction edges are kept by the lowest polygon index only;
// opposite-direction shared edges cancel in the sum. Side tests use a
// distance tolerance of `tol`, which welds nearly coincident contours.
inline double union_area(std::span<const Polygon> polys, double tol = kWeldTol) {
  auto side = [tol](Point s, Point e, Point p) {
    const double a = orient(s, e, p);
    const double l = norm(e - s) * tol;
    return (a > l) - (a < -l);
  };
  std::vector<BBox> boxes;
  boxes.reserve(polys.size());
  for (const auto& p : polys) boxes.push_back(bbox(p));

  double total = 0.0;
  std::vector<std::pair<double, int>> segs;
  for (std::size_t i = 0; i < polys.size(); ++i) {
    const auto vi = polys[i].vertices();
    for (std::size_t v = 0; v < vi.size(); ++v) {
      const Point a = vi[v];
      const Point b = vi[(v + 1) % vi.size()];
      BBox eb;
      eb.expand(a);
      eb.expand(b);
      segs.assign({{0.0, 0}, {1.0, 0}});
      for (std::size_t j = 0; j < polys.size(); ++j) {
        if (j == i || !eb.overlaps(boxes[j], tol)) continue;
        const auto vj = polys[j].vertices();
        for (std::size_t u = 0; u < vj.size(); ++u) {
          const Point c = vj[u];
          const Point d = vj[(u + 1) % vj.size()];
          const int sc = side(a, b, c);
          const int sd = side(a, b, d);
          if (sc != sd) {
            const double sa = orient(c, d, a);
            const double sb = orient(c, d, b);
            if (std::min(sc, sd) < 0) segs.emplace_back(sa / (sa - sb), (sc - sd > 0) - (sc - sd < 0));
          } else if (sc == 0 && sd == 0 && j < i && dot(b - a, d - c) > 0.0) {
            const double l2 = norm2(b - a);
            segs.emplace_back(dot(c - a, b - a) / l2, 1);
            segs.emplace_back(dot(d - a, b - a) / l2, -1);
          }
        }
      }
      std::sort(segs.begin(), segs.end());
      for (auto& s : segs) s.first = std::clamp(s.first, 0.0, 1.0);
      double uncovered = 0.0;
      int cnt = segs[0].second;
      for (std::size_t k = 1; k < segs.size(); ++k) {
        if (cnt == 0) uncovered += segs[k].first - segs[k - 1].first;
        cnt += segs[k].second;
      }
      total += cross(a, b) * uncovered;
    }
  }
  return 0.5 * total;
}

/// Sutherland-Hodgman clip of `subject` by the convex CCW polygon `clip`.
inline std::vector<Point> clip_convex(std::span<const Point> subject, std::span<const Point> clip) {
  std::vector<Point> out(subject.begin(), subject.end());
  std::vector<Point> in;
  const std::size_t nc = clip.size();
  for (std::size_t e = 0; e < nc && !out.empty(); ++e) {
    const Point c0 = clip[e];
    const Point c1 = clip[(e + 1) % nc];
    in.swap(out);
    out.clear();
    const std::size_t m = in.size();
    for (std::size_t k = 0; k < m; ++k) {
      const Point p = in[k];
      const Point q = in[(k + 1) % m];
      const double sp = orient(c0, c1, p);
      const double sq = orient(c0, c1, q);
      if (sp >= 0.0) {
        out.push_back(p);
        if (sq < 0.0) out.push_back(p + (q - p) * (sp / (sp - sq)));
      } else if (sq >= 0.0) {
        out.push_back(p + (q - p) * (sp / (sp - sq)));
      }
    }
  }
  return out;
}

/// Intersection area of two convex CCW polygons.
inline double convex_intersection_area(std::span<const Point> a, std::span<const Point> b) {
  const auto r = clip_convex(a, b);
  if (r.size() < 3) return 0.0;
  return std::max(0.0, signed_area(r));
}

/// A planar region: CCW outer loop with CW holes. Rings are open (no repeated
/// closing vertex).
struct Region {
  std::vector<Point> outer;
  std::vector<std::vector<Point>> holes;
};

/// +1 strictly inside (beyond tol from every loop), 0 on a loop, -1 outside.
inline int classify_point(const Region& r, Point q, double tol = kContactTol) {
  if (distance_to_ring(r.outer, q) <= tol) return 0;
  for (const auto& h : r.holes) {
    if (distance_to_ring(h, q) <= tol) return 0;
  }
  if (!point_in_ring(r.outer, q)) return -1;
  for (const auto& h : r.holes) {
    if (point_in_ring(h, q)) return -1;
  }
  return 1;
}

inline double region_area(const Region& r) {
  double a = signed_area(r.outer);
  for (const auto& h : r.holes) a += signed_area(h);
  return a;
}

namespace bgeo {

namespace bg = boost::geometry;
using BPoint = bg::model::d2::point_xy<double>;
using BPolygon = bg::model::polygon<BPoint, false, true>;
using BMulti = bg::model::multi_polygon<BPolygon>;

inline void fill_ring(std::span<const Point> v, BPolygon::ring_type& ring) {
  ring.clear();
  for (const Point& p : v) ring.emplace_back(p.x, p.y);
  if (!v.empty()) ring.emplace_back(v.front().x, v.front().y);
}

inline BPolygon to_boost(std::span<const Point> v) {
  BPolygon out;
  fill_ring(v, out.outer());
  return out;
}
inline BPolygon to_boost(const Polygon& p) { return to_boost(p.vertices()); }

inline std::vector<Point> from_ring(const BPolygon::ring_type& ring) {
  std::vector<Point> out;
  out.reserve(ring.size());
  for (const auto& p : ring) out.push_back({p.x(), p.y()});
  if (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

inline std::vector<Region> to_regions(const BMulti& m) {
  std::vector<Region> out;
  for (const auto& poly : m) {
    Region r;
    r.outer = from_ring(poly.outer());
    if (r.outer.size() < 3) continue;
    if (signed_area(r.outer) < 0) std::reverse(r.outer.begin(), r.outer.end());
    for (const auto& h : poly.inners()) {
      auto ring = from_ring(h);
      if (ring.size() < 3) continue;
      if (signed_area(ring) > 0) std::reverse(ring.begin(), ring.end());
      r.holes.push_back(std::move(ring));
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bgeo

/// Boolean union of polygons as regions (outer loops plus holes).
inline std::vector<Region> union_regions(std::span<const Polygon> polys) {
  bgeo::BMulti acc;
  for (const auto& p : polys) {
    bgeo::BMulti next;
    boost::geometry::union_(acc, bgeo::to_boost(p), next);
    acc = std::move(next);
  }
  return bgeo::to_regions(acc);
}

/// `a` minus `b` as regions.
inline std::vector<Region> difference_regions(const Polygon& a, const Polygon& b) {
  bgeo::BMulti out;
  boost::geometry::difference(bgeo::to_boost(a), bgeo::to_boost(b), out);
  return bgeo::to_regions(out);
}

}  // namespace gfpack
