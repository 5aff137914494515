#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gfpack/diffusion.hpp"
#include "gfpack/geometry.hpp"

namespace gfpack::render {

struct RenderOptions {
  /// Output width in pixels; the height follows the drawing's aspect ratio.
  double width_px = 800.0;
  /// Margin around the drawing, as a fraction of its larger extent.
  double margin = 0.03;
  double fill_opacity = 0.85;
  /// Strip outlines extend to at least this length (0: the packed length).
  double min_strip_length = 0.0;
};

/// Stable fill color for polygon `index` (golden-angle hue walk).
inline std::string color(std::size_t index) {
  const double hue = std::fmod(static_cast<double>(index) * 137.507764, 360.0);
  char buf[40];
  std::snprintf(buf, sizeof buf, "hsl(%.1f,62%%,58%%)", hue);
  return buf;
}

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  std::string s = buf;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s == "-0" ? "0" : s;
}

inline std::string path_data(const std::vector<Point>& pts) {
  std::string d;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    d += (i == 0 ? "M" : " L");
    d += num(pts[i].x) + "," + num(pts[i].y);
  }
  return d + " Z";
}

inline std::vector<Point> outline(const Container& c, double length) {
  if (c.is_boundary()) {
    const auto v = c.polygon().vertices();
    return {v.begin(), v.end()};
  }
  const double h = c.height();
  return {{0, 0}, {length, 0}, {length, h}, {0, h}};
}

}  // namespace detail

/// One SVG document: the container outline followed by one filled path per
/// polygon, in index order. World y points up.
inline std::string svg(const PackingInstance& inst, const RenderOptions& opt = {}) {
  const double length = std::max(strip_length(inst), opt.min_strip_length);
  const auto box_pts = detail::outline(inst.container, length);
  BBox box = bbox(box_pts);
  std::vector<std::vector<Point>> shapes;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto v = apply_pose(inst.polygons[i], inst.poses[i]).vertices();
    shapes.emplace_back(v.begin(), v.end());
    const BBox b = bbox(shapes.back());
    box.min.x = std::min(box.min.x, b.min.x);
    box.min.y = std::min(box.min.y, b.min.y);
    box.max.x = std::max(box.max.x, b.max.x);
    box.max.y = std::max(box.max.y, b.max.y);
  }
  const double extent = std::max({box.max.x - box.min.x, box.max.y - box.min.y, 1e-12});
  const double pad = opt.margin * extent;
  const double vx = box.min.x - pad, vy = box.min.y - pad;
  const double vw = box.max.x - box.min.x + 2 * pad, vh = box.max.y - box.min.y + 2 * pad;
  const double stroke = extent / 400.0;
  using detail::num;

  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(opt.width_px) + "\" height=\"" +
                    num(opt.width_px * vh / vw) + "\" viewBox=\"" + num(vx) + " " + num(-(vy + vh)) + " " + num(vw) +
                    " " + num(vh) + "\">\n";
  out += "<g transform=\"scale(1,-1)\">\n";
  out += "<path d=\"" + detail::path_data(box_pts) + "\" fill=\"none\" stroke=\"#222\" stroke-width=\"" +
         num(2 * stroke) + "\"/>\n";
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    out += "<path d=\"" + detail::path_data(shapes[i]) + "\" fill=\"" + color(i) + "\" fill-opacity=\"" +
           num(opt.fill_opacity) + "\" stroke=\"#333\" stroke-width=\"" + num(stroke) + "\"/>\n";
  }
  out += "</g>\n</svg>\n";
  return out;
}

/// One frame per recorded diffusion state (r steps give r + 1 frames). All
/// frames share the strip length of the final state so they line up.
inline std::vector<std::string> trajectory_frames(const std::vector<Polygon>& polygons, const Container& container,
                                                  const std::vector<diffusion::State>& trajectory,
                                                  double translation_scale = 1.0, RenderOptions opt = {}) {
  std::vector<std::string> frames;
  if (trajectory.empty()) return frames;
  PackingInstance last(polygons, container, diffusion::to_poses(trajectory.back(), translation_scale));
  opt.min_strip_length = std::max(opt.min_strip_length, strip_length(last));
  frames.reserve(trajectory.size());
  for (const auto& s : trajectory) {
    frames.push_back(svg(PackingInstance(polygons, container, diffusion::to_poses(s, translation_scale)), opt));
  }
  return frames;
}

}  // namespace gfpack::render
