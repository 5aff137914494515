#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "gfpack/geometry.hpp"

namespace gfpack::testing {

inline Polygon unit_square(Point origin = {}) { return Polygon::rectangle(1.0, 1.0, origin); }

inline Polygon l_shape(double s = 1.0) {
  return Polygon({{0, 0}, {2 * s, 0}, {2 * s, s}, {s, s}, {s, 2 * s}, {0, 2 * s}});
}

/// Convex polygon: sorted random angles on a jittered ellipse.
inline Polygon random_convex(std::mt19937_64& rng, Point center, double radius, int min_v = 3, int max_v = 9) {
  std::uniform_int_distribution<int> nv(min_v, max_v);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = nv(rng);
  std::vector<double> ang(n);
  for (auto& a : ang) a = u(rng) * 2 * std::numbers::pi;
  std::sort(ang.begin(), ang.end());
  const double rx = radius * (0.5 + u(rng));
  const double ry = radius * (0.5 + u(rng));
  const double rot = u(rng) * 2 * std::numbers::pi;
  std::vector<Point> pts;
  for (double a : ang) {
    const Point p{rx * std::cos(a), ry * std::sin(a)};
    pts.push_back(center + Point{std::cos(rot) * p.x - std::sin(rot) * p.y, std::sin(rot) * p.x + std::cos(rot) * p.y});
  }
  // convex hull (monotone chain) guards against near-collinear triples
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Point> hull;
  for (int pass = 0; pass < 2; ++pass) {
    const std::size_t start = hull.size();
    for (const Point& p : pts) {
      while (hull.size() >= start + 2 && orient(hull[hull.size() - 2], hull.back(), p) <= 1e-9 * radius * radius) {
        hull.pop_back();
      }
      hull.push_back(p);
    }
    hull.pop_back();
    std::reverse(pts.begin(), pts.end());
  }
  if (hull.size() < 3) return random_convex(rng, center, radius, min_v, max_v);
  return Polygon(hull);
}

/// Star-shaped simple polygon around `center`.
inline Polygon random_star(std::mt19937_64& rng, Point center, double radius, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point> pts;
  for (int i = 0; i < n; ++i) {
    const double a = (i + 0.1 + 0.8 * u(rng)) * 2 * std::numbers::pi / n;
    const double r = radius * (0.35 + 0.65 * u(rng));
    pts.push_back(center + Point{r * std::cos(a), r * std::sin(a)});
  }
  return Polygon(pts);
}

/// Grid-sampling estimate of the area covered by any polygon (independent oracle).
inline double sampled_union_area(const std::vector<Polygon>& polys, int grid = 600) {
  BBox b;
  for (const auto& p : polys) b.expand(bbox(p));
  const double dx = b.width() / grid, dy = b.height() / grid;
  long hits = 0;
  for (int i = 0; i < grid; ++i) {
    for (int j = 0; j < grid; ++j) {
      const Point q{b.min.x + (i + 0.5) * dx, b.min.y + (j + 0.5) * dy};
      for (const auto& p : polys) {
        if (point_in_ring(p.vertices(), q)) {
          ++hits;
          break;
        }
      }
    }
  }
  return hits * dx * dy;
}

/// Dense-direction brute force: for each direction, binary-search the shortest
/// translation of `a` that leaves zero intersection area with `b`.
inline double brute_force_mtv(const Polygon& a, const Polygon& b, int directions = 3600) {
  auto overlapping = [&](Point t) {
    const auto moved = translated(a, t);
    return convex_intersection_area(moved.vertices(), b.vertices()) > 1e-13;
  };
  if (!overlapping({})) return 0.0;
  const BBox ba = bbox(a), bb = bbox(b);
  double best = ba.width() + ba.height() + bb.width() + bb.height();
  for (int k = 0; k < directions; ++k) {
    const double th = 2 * std::numbers::pi * k / directions;
    const Point u{std::cos(th), std::sin(th)};
    if (overlapping(u * best)) continue;
    double lo = 0.0, hi = best;
    while (hi - lo > 1e-7 * best) {
      const double mid = 0.5 * (lo + hi);
      (overlapping(u * mid) ? lo : hi) = mid;
    }
    best = hi;
  }
  return best;
}

/// Grid-and-refine search for the shortest translation bringing `p` inside `c`.
inline double min_containment_offset(const Polygon& p, const Container& c, double radius, int grid = 120) {
  auto inside = [&](Point t) { return inside_container(translated(p, t), c, 1e-9); };
  Point center{};
  double best = std::numeric_limits<double>::infinity();
  double step = 2 * radius / grid;
  for (int level = 0; level < 5; ++level) {
    Point next = center;
    for (int i = -grid / 2; i <= grid / 2; ++i) {
      for (int j = -grid / 2; j <= grid / 2; ++j) {
        const Point t = center + Point{i * step, j * step};
        if (norm(t) < best && inside(t)) {
          best = norm(t);
          next = t;
        }
      }
    }
    center = next;
    step /= 10.0;
  }
  return best;
}

}  // namespace gfpack::testing
