#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#ifndef GFPACK_GIT_DESCRIBE
#define GFPACK_GIT_DESCRIBE "unknown"
#endif

namespace gfpack::cli {

using json = nlohmann::json;

/// Relative paths resolve under $GFPACK_DATA_ROOT when it is set.
inline std::string resolve(const std::string& path) {
  if (path.empty()) return path;
  const char* root = std::getenv("GFPACK_DATA_ROOT");
  const std::filesystem::path p(path);
  if (!root || !*root || p.is_absolute()) return path;
  return (std::filesystem::path(root) / p).string();
}

inline void ensure_parent(const std::string& path) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

/// Reproducibility record written next to every artifact a command produces.
class Manifest {
 public:
  Manifest(std::string command, std::vector<std::string> argv, std::string config, std::uint64_t seed,
           unsigned threads)
      : start_(std::chrono::steady_clock::now()) {
    j_["command"] = std::move(command);
    j_["argv"] = std::move(argv);
    j_["config"] = std::move(config);
    j_["seed"] = seed;
    j_["threads"] = threads;
    j_["git_describe"] = GFPACK_GIT_DESCRIBE;
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
    j_["timings"] = json::object();
    if (const char* root = std::getenv("GFPACK_DATA_ROOT")) j_["data_root"] = root;
  }

  void input(const std::string& path) { j_["inputs"].push_back(path); }
  void output(const std::string& path) { j_["outputs"].push_back(path); }
  void set(const std::string& key, json value) { j_[key] = std::move(value); }
  void timing(const std::string& key, double seconds) { j_["timings"][key] = seconds; }
  [[nodiscard]] double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

  /// Writes `<primary>.manifest.json`.
  void write(const std::string& primary) {
    timing("wall_s", elapsed());
    const std::string path = primary + ".manifest.json";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j_.dump(2) << '\n';
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

}  // namespace gfpack::cli
