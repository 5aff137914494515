#pragma once

#include <algorithm>
#include <array>
#include <vector>

#include "gfpack/geometry/boolean.hpp"
#include "gfpack/geometry/primitives.hpp"

namespace gfpack {

/// Occupied strip length: the largest transformed x over all polygons.
inline double strip_length(const PackingInstance& inst) {
  double len = 0.0;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    for (const Point& p : inst.polygons[i].vertices()) len = std::max(len, inst.poses[i].apply(p).x);
  }
  return len;
}

/// Whether a placed polygon lies inside the container (touching allowed).
inline bool inside_container(const Polygon& placed, const Container& c, double tol = kContactTol) {
  if (c.is_strip()) {
    const double h = c.height();
    return std::all_of(placed.vertices().begin(), placed.vertices().end(), [&](Point p) {
      return p.x >= -tol && p.y >= -tol && p.y <= h + tol;
    });
  }
  const Polygon& b = c.polygon();
  for (const Point& p : placed.vertices()) {
    if (classify_point(b, p, tol) < 0) return false;
  }
  if (is_convex(b)) return true;
  // vertices inside a non-convex boundary can still have edges leaving it
  const std::array<Polygon, 2> pair{b, placed};
  const double outside = union_area(pair) - area(b);
  return outside <= 1e-9 * std::max(area(placed), 1.0);
}

struct UtilizationReport {
  double value = 0.0;
  double union_area = 0.0;
  double container_area = 0.0;
  bool boundary_violation = false;
};

// u = area(union of placed polygons) / area(container). For a strip the
// container area is height times the occupied length measured from x = 0.
inline UtilizationReport utilization(const PackingInstance& inst) {
  UtilizationReport r;
  const auto placed = inst.placed();
  r.union_area = union_area(placed);
  if (inst.container.is_strip()) {
    r.container_area = inst.container.height() * strip_length(inst);
  } else {
    r.container_area = area(inst.container.polygon());
  }
  for (const auto& p : placed) {
    if (!inside_container(p, inst.container)) {
      r.boundary_violation = true;
      break;
    }
  }
  r.value = r.container_area > 0.0 ? r.union_area / r.container_area : 0.0;
  return r;
}

}  // namespace gfpack
