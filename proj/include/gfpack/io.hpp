#pragma once

#include <cstddef>
#include <fstream>
#include <istream>
#include <iterator>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gfpack/geometry.hpp"

namespace gfpack::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// Malformed input. `line` is 1-based (0 when unknown); `field` is a JSON path.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what)
      : std::runtime_error(format(line, field, what)), line_(line), field_(std::move(field)) {}

  [[nodiscard]] std::size_t line() const { return line_; }
  [[nodiscard]] const std::string& field() const { return field_; }

 private:
  static std::string format(std::size_t line, const std::string& field, const std::string& what) {
    std::string s = "parse error";
    if (line > 0) s += " at line " + std::to_string(line);
    if (!field.empty()) s += " in field '" + field + "'";
    return s + ": " + what;
  }
  std::size_t line_;
  std::string field_;
};

/// An instance plus free-form metadata carried through files unchanged.
struct InstanceRecord {
  PackingInstance instance;
  json meta = json::object();
};

inline json points_to_json(std::span<const Point> pts) {
  json a = json::array();
  for (const Point& p : pts) a.push_back({p.x, p.y});
  return a;
}

inline json to_json(const PackingInstance& inst, const json& meta = json::object()) {
  json j;
  j["version"] = kSchemaVersion;
  if (inst.container.is_strip()) {
    j["container"] = {{"kind", "strip"}, {"height", inst.container.height()}};
  } else {
    j["container"] = {{"kind", "boundary"}, {"polygon", points_to_json(inst.container.polygon().vertices())}};
  }
  j["polygons"] = json::array();
  for (const auto& p : inst.polygons) j["polygons"].push_back(points_to_json(p.vertices()));
  j["poses"] = json::array();
  for (const auto& a : inst.poses) j["poses"].push_back({a.tx, a.ty, a.cos_t, a.sin_t});
  j["meta"] = meta;
  return j;
}

namespace detail {

inline const json& require(const json& j, const std::string& key, const std::string& path, std::size_t line) {
  if (!j.is_object()) throw ParseError(line, path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw ParseError(line, path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline double number(const json& j, const std::string& path, std::size_t line) {
  if (!j.is_number()) throw ParseError(line, path, "expected a number");
  return j.get<double>();
}

inline std::vector<Point> points(const json& j, const std::string& path, std::size_t line) {
  if (!j.is_array()) throw ParseError(line, path, "expected an array of [x, y] pairs");
  std::vector<Point> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    if (!j[i].is_array() || j[i].size() != 2) throw ParseError(line, p, "expected [x, y]");
    out.push_back({number(j[i][0], p, line), number(j[i][1], p, line)});
  }
  return out;
}

inline Polygon polygon(const json& j, const std::string& path, std::size_t line) {
  try {
    return Polygon(points(j, path, line));
  } catch (const GeometryError& e) {
    throw ParseError(line, path, e.what());
  }
}

}  // namespace detail

/// Parses one instance object; `line` is reported in errors.
inline InstanceRecord from_json(const json& j, std::size_t line = 0) {
  using namespace detail;
  if (!j.is_object()) throw ParseError(line, "", "expected an instance object");
  const json& version = require(j, "version", "", line);
  if (!version.is_number_integer() || version.get<int>() != kSchemaVersion) {
    throw ParseError(line, "version", "unsupported schema version");
  }
  const json& cj = require(j, "container", "", line);
  const json& kind = require(cj, "kind", "container", line);
  std::optional<Container> container;
  if (kind == "strip") {
    const double h = number(require(cj, "height", "container", line), "container.height", line);
    if (!(h > 0.0)) throw ParseError(line, "container.height", "must be > 0");
    container = Container::strip(h);
  } else if (kind == "boundary") {
    container = Container::boundary(polygon(require(cj, "polygon", "container", line), "container.polygon", line));
  } else {
    throw ParseError(line, "container.kind", "expected \"strip\" or \"boundary\"");
  }

  const json& pj = require(j, "polygons", "", line);
  if (!pj.is_array()) throw ParseError(line, "polygons", "expected an array");
  std::vector<Polygon> polys;
  polys.reserve(pj.size());
  for (std::size_t i = 0; i < pj.size(); ++i) polys.push_back(polygon(pj[i], "polygons[" + std::to_string(i) + "]", line));

  const json& aj = require(j, "poses", "", line);
  if (!aj.is_array()) throw ParseError(line, "poses", "expected an array");
  if (aj.size() != polys.size()) throw ParseError(line, "poses", "pose count differs from polygon count");
  std::vector<Pose> poses;
  poses.reserve(aj.size());
  for (std::size_t i = 0; i < aj.size(); ++i) {
    const std::string p = "poses[" + std::to_string(i) + "]";
    if (!aj[i].is_array() || aj[i].size() != 4) throw ParseError(line, p, "expected [tx, ty, cos, sin]");
    poses.push_back({number(aj[i][0], p, line), number(aj[i][1], p, line), number(aj[i][2], p, line),
                     number(aj[i][3], p, line)});
  }
  InstanceRecord r{PackingInstance(std::move(polys), std::move(*container), std::move(poses)), json::object()};
  if (const auto it = j.find("meta"); it != j.end()) r.meta = *it;
  return r;
}

namespace detail {
inline std::size_t line_of(const std::string& text, std::size_t byte) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) line += text[i] == '\n';
  return line;
}

inline json parse_text(const std::string& text, std::size_t base_line) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    throw ParseError(base_line + line_of(text, byte) - 1, "", e.what());
  }
}
}  // namespace detail

inline InstanceRecord parse_instance(const std::string& text) { return from_json(detail::parse_text(text, 1)); }

inline InstanceRecord load_instance(std::istream& in) {
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json(detail::parse_text(text, 1));
}

inline InstanceRecord load_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_instance(in);
}

inline void save_instance(std::ostream& out, const PackingInstance& inst, const json& meta = json::object()) {
  out << to_json(inst, meta).dump(2) << '\n';
}

inline void save_instance(const std::string& path, const PackingInstance& inst, const json& meta = json::object()) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_instance(out, inst, meta);
}

/// Line-by-line reader for JSON-lines files; holds one record at a time.
class JsonlReader {
 public:
  explicit JsonlReader(std::istream& in) : in_(&in) {}
  explicit JsonlReader(const std::string& path) : owned_(std::make_unique<std::ifstream>(path)), in_(owned_.get()) {
    if (!*owned_) throw std::runtime_error("cannot open " + path);
  }

  /// Next non-blank line as JSON; empty at end of input.
  std::optional<json> next() {
    std::string text;
    while (std::getline(*in_, text)) {
      ++line_;
      if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
      return detail::parse_text(text, line_);
    }
    return std::nullopt;
  }
  std::optional<InstanceRecord> next_instance() {
    auto j = next();
    if (!j) return std::nullopt;
    return from_json(*j, line_);
  }
  /// 1-based line number of the most recently returned record.
  [[nodiscard]] std::size_t line() const { return line_; }

 private:
  std::unique_ptr<std::ifstream> owned_;
  std::istream* in_;
  std::size_t line_ = 0;
};

class JsonlWriter {
 public:
  explicit JsonlWriter(std::ostream& out) : out_(&out) {}
  explicit JsonlWriter(const std::string& path) : owned_(std::make_unique<std::ofstream>(path)), out_(owned_.get()) {
    if (!*owned_) throw std::runtime_error("cannot write " + path);
  }
  void write(const json& j) { *out_ << j.dump() << '\n'; }
  void flush() { out_->flush(); }

 private:
  std::unique_ptr<std::ofstream> owned_;
  std::ostream* out_;
};

inline std::vector<InstanceRecord> load_corpus(const std::string& path) {
  JsonlReader r(path);
  std::vector<InstanceRecord> out;
  while (auto rec = r.next_instance()) out.push_back(std::move(*rec));
  return out;
}

}  // namespace gfpack::io
