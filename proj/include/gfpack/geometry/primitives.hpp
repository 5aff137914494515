#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace gfpack {

/// Vertices closer than this are welded at polygon construction (model units).
inline constexpr double kWeldTol = 1e-9;
/// Polygons touching within this distance are treated as disjoint.
inline constexpr double kContactTol = 1e-7;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Point {
  double x = 0.0;
  double y = 0.0;

  constexpr Point& operator+=(Point o) { x += o.x; y += o.y; return *this; }
  constexpr Point& operator-=(Point o) { x -= o.x; y -= o.y; return *this; }
  constexpr Point& operator*=(double s) { x *= s; y *= s; return *this; }
  friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Point operator-(Point a) { return {-a.x, -a.y}; }
  friend constexpr Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Point operator*(double s, Point a) { return {a.x * s, a.y * s}; }
  friend constexpr Point operator/(Point a, double s) { return {a.x / s, a.y / s}; }
  friend constexpr bool operator==(Point, Point) = default;
};

constexpr double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }
constexpr double cross(Point a, Point b) { return a.x * b.y - a.y * b.x; }
/// Cross product of (b - a) and (c - a); positive when a, b, c turn left.
constexpr double orient(Point a, Point b, Point c) { return cross(b - a, c - a); }
inline double norm(Point a) { return std::hypot(a.x, a.y); }
constexpr double norm2(Point a) { return dot(a, a); }
constexpr Point perp(Point a) { return {-a.y, a.x}; }

inline bool is_finite(Point p) { return std::isfinite(p.x) && std::isfinite(p.y); }

struct BBox {
  Point min{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  Point max{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};

  void expand(Point p) {
    min.x = std::min(min.x, p.x);
    min.y = std::min(min.y, p.y);
    max.x = std::max(max.x, p.x);
    max.y = std::max(max.y, p.y);
  }
  void expand(const BBox& b) {
    expand(b.min);
    expand(b.max);
  }
  [[nodiscard]] bool empty() const { return min.x > max.x; }
  [[nodiscard]] double width() const { return max.x - min.x; }
  [[nodiscard]] double height() const { return max.y - min.y; }
  [[nodiscard]] bool overlaps(const BBox& o, double tol = 0.0) const {
    return min.x <= o.max.x + tol && o.min.x <= max.x + tol && min.y <= o.max.y + tol &&
           o.min.y <= max.y + tol;
  }
};

/// SE(2) placement. Rotation is about the polygon's local origin.
struct Pose {
  double tx = 0.0;
  double ty = 0.0;
  double cos_t = 1.0;
  double sin_t = 0.0;

  static Pose from_angle(double tx, double ty, double theta) {
    return {tx, ty, std::cos(theta), std::sin(theta)};
  }
  static Pose identity() { return {}; }

  [[nodiscard]] double angle() const { return std::atan2(sin_t, cos_t); }
  [[nodiscard]] Point translation() const { return {tx, ty}; }

  /// Projects (cos_t, sin_t) onto the unit circle; a zero vector maps to angle 0.
  [[nodiscard]] Pose normalized() const {
    const double r = std::hypot(cos_t, sin_t);
    if (!(r > 0.0) || !std::isfinite(r)) return {tx, ty, 1.0, 0.0};
    return {tx, ty, cos_t / r, sin_t / r};
  }
  [[nodiscard]] bool is_normalized(double tol = 1e-9) const {
    return std::abs(cos_t * cos_t + sin_t * sin_t - 1.0) <= tol;
  }
  [[nodiscard]] Point apply(Point p) const {
    return {cos_t * p.x - sin_t * p.y + tx, sin_t * p.x + cos_t * p.y + ty};
  }
  [[nodiscard]] Point rotate(Point p) const {
    return {cos_t * p.x - sin_t * p.y, sin_t * p.x + cos_t * p.y};
  }
  [[nodiscard]] Pose translated(Point d) const { return {tx + d.x, ty + d.y, cos_t, sin_t}; }

  friend bool operator==(const Pose&, const Pose&) = default;
};

inline double signed_area(std::span<const Point> v) {
  double s = 0.0;
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) s += cross(v[i], v[(i + 1) % n]);
  return 0.5 * s;
}

/// Closed segment intersection test, including touching and collinear overlap.
inline bool segments_intersect(Point a, Point b, Point c, Point d, double tol = 0.0) {
  auto sgn = [tol](double v, double scale) {
    const double e = tol * scale;
    return (v > e) - (v < -e);
  };
  const double lab = std::max(norm(b - a), 1e-300);
  const double lcd = std::max(norm(d - c), 1e-300);
  const int o1 = sgn(orient(a, b, c), lab);
  const int o2 = sgn(orient(a, b, d), lab);
  const int o3 = sgn(orient(c, d, a), lcd);
  const int o4 = sgn(orient(c, d, b), lcd);
  if (o1 * o2 < 0 && o3 * o4 < 0) return true;
  auto on_seg = [tol](Point p, Point q, Point r) {
    return std::min(p.x, q.x) - tol <= r.x && r.x <= std::max(p.x, q.x) + tol &&
           std::min(p.y, q.y) - tol <= r.y && r.y <= std::max(p.y, q.y) + tol;
  };
  if (o1 == 0 && on_seg(a, b, c)) return true;
  if (o2 == 0 && on_seg(a, b, d)) return true;
  if (o3 == 0 && on_seg(c, d, a)) return true;
  if (o4 == 0 && on_seg(c, d, b)) return true;
  return false;
}

/// Simple closed contour, stored counter-clockwise with no repeated vertices.
class Polygon {
 public:
  /// Welds near-duplicate vertices, orients CCW and rejects degenerate or
  /// self-intersecting contours.
  explicit Polygon(std::vector<Point> vertices) : v_(std::move(vertices)) {
    for (const Point& p : v_) {
      if (!is_finite(p)) throw GeometryError("polygon vertex is not finite");
    }
    weld();
    if (v_.size() < 3) throw GeometryError("polygon needs at least 3 distinct vertices");
    const double a = signed_area(v_);
    if (!(std::abs(a) > 0.0)) throw GeometryError("polygon has zero area");
    if (a < 0.0) std::reverse(v_.begin(), v_.end());
    if (!check_simple()) throw GeometryError("polygon is not simple");
  }

  /// Wraps vertices already known to be CCW, simple and welded (rigid images
  /// and decomposition pieces of valid polygons).
  static Polygon trusted(std::vector<Point> vertices) {
    Polygon p;
    p.v_ = std::move(vertices);
    return p;
  }

  static Polygon rectangle(double w, double h, Point origin = {}) {
    return Polygon({origin, origin + Point{w, 0}, origin + Point{w, h}, origin + Point{0, h}});
  }

  [[nodiscard]] std::span<const Point> vertices() const { return v_; }
  [[nodiscard]] std::size_t size() const { return v_.size(); }
  [[nodiscard]] const Point& operator[](std::size_t i) const { return v_[i]; }
  [[nodiscard]] const Point& vertex(std::size_t i) const { return v_[i % v_.size()]; }

  friend bool operator==(const Polygon&, const Polygon&) = default;

 private:
  Polygon() = default;

  void weld() {
    std::vector<Point> out;
    out.reserve(v_.size());
    for (const Point& p : v_) {
      if (!out.empty() && norm(p - out.back()) <= kWeldTol) continue;
      out.push_back(p);
    }
    while (out.size() > 1 && norm(out.front() - out.back()) <= kWeldTol) out.pop_back();
    v_ = std::move(out);
  }

  [[nodiscard]] bool check_simple() const {
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point a = v_[i];
      const Point b = v_[(i + 1) % n];
      const Point c = v_[(i + 2) % n];
      // spike: the next edge folds back onto this one
      if (std::abs(orient(a, b, c)) <= kWeldTol * norm(b - a) && dot(b - a, c - b) < 0.0) {
        return false;
      }
      for (std::size_t j = i + 2; j < n; ++j) {
        if (i == 0 && j == n - 1) continue;
        if (segments_intersect(a, b, v_[j], v_[(j + 1) % n], kWeldTol)) return false;
      }
    }
    return true;
  }

  std::vector<Point> v_;
};

inline double area(const Polygon& p) { return signed_area(p.vertices()); }

inline Point centroid(const Polygon& p) {
  const auto v = p.vertices();
  const std::size_t n = v.size();
  // shift to the first vertex to limit cancellation for far-away polygons
  const Point o = v[0];
  double a2 = 0.0;
  Point c{};
  for (std::size_t i = 0; i < n; ++i) {
    const Point p0 = v[i] - o;
    const Point p1 = v[(i + 1) % n] - o;
    const double w = cross(p0, p1);
    a2 += w;
    c += (p0 + p1) * w;
  }
  return o + c / (3.0 * a2);
}

inline BBox bbox(std::span<const Point> v) {
  BBox b;
  for (const Point& p : v) b.expand(p);
  return b;
}
inline BBox bbox(const Polygon& p) { return bbox(p.vertices()); }

inline bool is_convex(std::span<const Point> v, double tol = kWeldTol) {
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = v[i], b = v[(i + 1) % n], c = v[(i + 2) % n];
    if (orient(a, b, c) < -tol * std::max(norm(b - a), norm(c - b))) return false;
  }
  return true;
}
inline bool is_convex(const Polygon& p) { return is_convex(p.vertices()); }

/// Convex hull (Andrew's monotone chain), CCW, collinear points dropped.
inline std::vector<Point> convex_hull(std::vector<Point> pts) {
  std::sort(pts.begin(), pts.end(), [](Point a, Point b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Point> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, lo = k + 1; i-- > 0;) {
    while (k >= lo && orient(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  return hull;
}

/// Interior angle at each vertex of a CCW polygon, in (0, 2*pi).
inline std::vector<double> internal_angles(const Polygon& p) {
  const auto v = p.vertices();
  const std::size_t n = v.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Point in = v[i] - v[(i + n - 1) % n];
    const Point outd = v[(i + 1) % n] - v[i];
    const double turn = std::atan2(cross(in, outd), dot(in, outd));
    out[i] = std::numbers::pi - turn;
  }
  return out;
}

inline Polygon apply_pose(const Polygon& p, const Pose& a) {
  std::vector<Point> out;
  out.reserve(p.size());
  for (const Point& q : p.vertices()) out.push_back(a.apply(q));
  return Polygon::trusted(std::move(out));
}

inline Polygon translated(const Polygon& p, Point d) {
  return apply_pose(p, Pose{d.x, d.y, 1.0, 0.0});
}

/// Returns the polygon moved so its centroid is the origin, and that centroid.
inline std::pair<Polygon, Point> recentered(const Polygon& p) {
  const Point c = centroid(p);
  return {translated(p, -c), c};
}

/// Signed distance-free point containment (crossing number); boundary points
/// may land on either side.
inline bool point_in_ring(std::span<const Point> v, Point q) {
  bool inside = false;
  const std::size_t n = v.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = v[i], b = v[j];
    if ((a.y > q.y) != (b.y > q.y)) {
      const double x = a.x + (q.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (q.x < x) inside = !inside;
    }
  }
  return inside;
}

inline double point_segment_distance(Point q, Point a, Point b) {
  const Point ab = b - a;
  const double l2 = norm2(ab);
  double t = l2 > 0.0 ? dot(q - a, ab) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(q - (a + ab * t));
}

inline double distance_to_ring(std::span<const Point> v, Point q) {
  double d = std::numeric_limits<double>::infinity();
  const std::size_t n = v.size();
  for (std::size_t i = 0; i < n; ++i) d = std::min(d, point_segment_distance(q, v[i], v[(i + 1) % n]));
  return d;
}

/// +1 strictly inside (farther than tol from the boundary), 0 on boundary, -1 outside.
inline int classify_point(const Polygon& p, Point q, double tol = kContactTol) {
  if (distance_to_ring(p.vertices(), q) <= tol) return 0;
  return point_in_ring(p.vertices(), q) ? 1 : -1;
}

/// Cycle graph over a contour with per-vertex features (x, y, interior angle).
struct ContourGraph {
  std::size_t nodes = 0;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  std::vector<std::array<double, 3>> features;
};

/// Coordinates are divided by `scale` (container height for network conditioning).
inline ContourGraph contour_graph(const Polygon& p, double scale = 1.0) {
  ContourGraph g;
  g.nodes = p.size();
  const auto angles = internal_angles(p);
  g.edges.reserve(g.nodes);
  g.features.reserve(g.nodes);
  for (std::size_t i = 0; i < g.nodes; ++i) {
    g.edges.emplace_back(i, (i + 1) % g.nodes);
    g.features.push_back({p[i].x / scale, p[i].y / scale, angles[i]});
  }
  return g;
}

struct Strip {
  double height = 0.0;
};
struct Boundary {
  Polygon polygon;
};

class Container {
 public:
  static Container strip(double height) {
    if (!(height > 0.0) || !std::isfinite(height)) throw GeometryError("strip height must be > 0");
    return Container(Strip{height});
  }
  static Container boundary(Polygon p) { return Container(Boundary{std::move(p)}); }

  [[nodiscard]] bool is_strip() const { return std::holds_alternative<Strip>(kind_); }
  [[nodiscard]] bool is_boundary() const { return std::holds_alternative<Boundary>(kind_); }
  /// Strip height, or the boundary's bounding-box height.
  [[nodiscard]] double height() const {
    if (is_strip()) return std::get<Strip>(kind_).height;
    return bbox(std::get<Boundary>(kind_).polygon).height();
  }
  [[nodiscard]] const Polygon& polygon() const {
    if (!is_boundary()) throw GeometryError("strip container has no boundary polygon");
    return std::get<Boundary>(kind_).polygon;
  }
  [[nodiscard]] const std::variant<Strip, Boundary>& kind() const { return kind_; }

 private:
  explicit Container(std::variant<Strip, Boundary> k) : kind_(std::move(k)) {}
  std::variant<Strip, Boundary> kind_;
};

struct PackingInstance {
  std::vector<Polygon> polygons;
  Container container;
  std::vector<Pose> poses;

  PackingInstance(std::vector<Polygon> polys, Container c, std::vector<Pose> a)
      : polygons(std::move(polys)), container(std::move(c)), poses(std::move(a)) {
    if (polygons.size() != poses.size()) {
      throw GeometryError("polygon and pose counts differ");
    }
  }
  PackingInstance(std::vector<Polygon> polys, Container c)
      : polygons(std::move(polys)), container(std::move(c)), poses(polygons.size()) {}

  [[nodiscard]] std::size_t size() const { return polygons.size(); }
  [[nodiscard]] Polygon placed(std::size_t i) const { return apply_pose(polygons[i], poses[i]); }
  [[nodiscard]] std::vector<Polygon> placed() const {
    std::vector<Polygon> out;
    out.reserve(polygons.size());
    for (std::size_t i = 0; i < polygons.size(); ++i) out.push_back(placed(i));
    return out;
  }
  [[nodiscard]] double total_area() const {
    double s = 0.0;
    for (const auto& p : polygons) s += area(p);
    return s;
  }
};

}  // namespace gfpack
