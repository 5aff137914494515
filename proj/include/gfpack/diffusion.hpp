#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gfpack/dataset.hpp"
#include "gfpack/geometry.hpp"
#include "gfpack/parallel.hpp"
#include "gfpack/random.hpp"

namespace gfpack::diffusion {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Variance-exploding schedule sigma(t) = sigma_min (sigma_max / sigma_min)^t.
struct SigmaSchedule {
  double sigma_min = 0.1;
  double sigma_max = 1000.0;

  void validate() const {
    if (!(sigma_min > 0.0 && sigma_min < sigma_max)) throw ConfigError("need 0 < sigma_min < sigma_max");
  }
  [[nodiscard]] double log_ratio() const { return std::log(sigma_max / sigma_min); }
};

inline void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("diffusion time must lie in [0, 1]");
}

inline double sigma(double t, const SigmaSchedule& s = {}) {
  check_time(t);
  if (t == 0.0) return s.sigma_min;
  if (t == 1.0) return s.sigma_max;
  return s.sigma_min * std::pow(s.sigma_max / s.sigma_min, t);
}

/// Diffusion coefficient g(t) = sigma(t) sqrt(2 ln(sigma_max / sigma_min)).
inline double g_coeff(double t, const SigmaSchedule& s = {}) {
  return sigma(t, s) * std::sqrt(2.0 * s.log_ratio());
}

/// Per-polygon raw diffusion coordinates (tx, ty, c, s).
using Vec4 = std::array<double, 4>;
using State = std::vector<Vec4>;

inline State to_state(std::span<const Pose> poses, double translation_scale = 1.0) {
  State s;
  s.reserve(poses.size());
  for (const auto& p : poses) s.push_back({p.tx / translation_scale, p.ty / translation_scale, p.cos_t, p.sin_t});
  return s;
}

/// Unit-circle projection of (c, s) on readout.
inline std::vector<Pose> to_poses(const State& s, double translation_scale = 1.0) {
  std::vector<Pose> out;
  out.reserve(s.size());
  for (const auto& a : s) out.push_back(Pose{a[0] * translation_scale, a[1] * translation_scale, a[2], a[3]}.normalized());
  return out;
}

/// A(t) = A(0) + sigma(t) eps with independent standard normal eps.
inline State perturb(const State& a0, double t, Rng& rng, const SigmaSchedule& sched = {}) {
  const double sg = sigma(t, sched);
  std::normal_distribution<double> n(0.0, 1.0);
  State out = a0;
  for (auto& a : out) {
    for (double& x : a) x += sg * n(rng);
  }
  return out;
}

/// Denoising score-matching target (A(0) - A(t)) / sigma(t)^2.
inline State dsm_target(const State& a0, const State& at, double t, const SigmaSchedule& sched = {}) {
  if (a0.size() != at.size()) throw std::invalid_argument("state sizes differ");
  const double s2 = sigma(t, sched) * sigma(t, sched);
  State out(a0.size());
  for (std::size_t i = 0; i < a0.size(); ++i) {
    for (int k = 0; k < 4; ++k) out[i][k] = (a0[i][k] - at[i][k]) / s2;
  }
  return out;
}

/// Utilization statistics of a teacher corpus.
struct WeightStats {
  double u_min = 0.0;
  double u_avg = 0.0;
  double u_max = 0.0;

  void validate() const {
    if (!(u_min <= u_avg && u_avg <= u_max)) throw ConfigError("weight stats must satisfy u_min <= u_avg <= u_max");
    if (!(u_max > u_min)) throw ConfigError("degenerate weight stats: u_max == u_min");
  }
  static WeightStats from(std::span<const double> us) {
    if (us.empty()) throw ConfigError("weight stats need at least one utilization");
    const auto s = dataset::summarize(us);
    return {s.min, s.avg, s.max};
  }
};

/// lambda = sigmoid(10 (u - U_avg) / (U_max - U_min)).
inline double weight_lambda(double u, const WeightStats& st) {
  st.validate();
  const double z = (u - st.u_avg) / (st.u_max - st.u_min) * 10.0;
  return 1.0 / (1.0 + std::exp(-z));
}

/// Mean over instances of lambda_i times the mean squared coordinate error.
inline double dsm_loss(std::span<const State> out, std::span<const State> target, std::span<const double> lambda) {
  if (out.size() != target.size() || out.size() != lambda.size()) throw std::invalid_argument("batch sizes differ");
  if (out.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < out.size(); ++b) {
    if (out[b].size() != target[b].size()) throw std::invalid_argument("state sizes differ");
    double se = 0.0;
    for (std::size_t i = 0; i < out[b].size(); ++i) {
      for (int k = 0; k < 4; ++k) se += (out[b][i][k] - target[b][i][k]) * (out[b][i][k] - target[b][i][k]);
    }
    total += lambda[b] * se / static_cast<double>(4 * std::max<std::size_t>(out[b].size(), 1));
  }
  return total / static_cast<double>(out.size());
}

struct SampleConfig {
  int steps = 128;
  double t_start = 1.0;
  double t_end = 0.01;
  int batch = 128;
  std::uint64_t rng_seed = 0;
  SigmaSchedule schedule{};
  /// Translation coordinates are divided by this in the diffusion state.
  double translation_scale = 1.0;
  /// Add sigma(t_end)^2 psi to the final state before readout.
  bool final_denoise = false;
  /// Project (c, s) to the unit circle after every step.
  bool renormalize_each_step = false;
  bool record_trajectory = false;

  void validate() const {
    schedule.validate();
    if (steps < 1) throw ConfigError("steps must be >= 1");
    if (!(t_end > 0.0 && t_end < t_start && t_start <= 1.0)) throw ConfigError("need 0 < t_end < t_start <= 1");
    if (batch < 1) throw ConfigError("batch must be >= 1");
    if (!(translation_scale > 0.0)) throw ConfigError("translation_scale must be > 0");
  }
  [[nodiscard]] double dt() const { return (t_start - t_end) / steps; }
  [[nodiscard]] double time(int k) const { return k == steps ? t_end : t_start - k * dt(); }
};

/// Score function: (state, t) -> per-coordinate score. Must be safe to call
/// concurrently from several chains.
using ScoreFn = std::function<State(const State&, double)>;
/// Deterministic noise source for a chain: fills eps for one step.
using NoiseFn = std::function<void(State&)>;

/// Reverse-time Euler-Maruyama integration of one chain from the given start
/// state. Returns the trajectory (steps + 1 states) or only the final state.
inline std::vector<State> integrate(const ScoreFn& score, State a, const SampleConfig& cfg, const NoiseFn& noise) {
  const double dt = cfg.dt();
  std::vector<State> traj;
  if (cfg.record_trajectory) traj.reserve(cfg.steps + 1);
  if (cfg.record_trajectory) traj.push_back(a);
  State eps(a.size());
  for (int k = 0; k < cfg.steps; ++k) {
    const double t = cfg.time(k);
    const double g = g_coeff(t, cfg.schedule);
    const State psi = score(a, t);
    noise(eps);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (int c = 0; c < 4; ++c) a[i][c] += g * g * psi[i][c] * dt + g * std::sqrt(dt) * eps[i][c];
      if (cfg.renormalize_each_step) {
        const double r = std::hypot(a[i][2], a[i][3]);
        if (r > 0.0) {
          a[i][2] /= r;
          a[i][3] /= r;
        }
      }
    }
    if (cfg.record_trajectory) traj.push_back(a);
  }
  if (cfg.final_denoise) {
    const double s = sigma(cfg.t_end, cfg.schedule);
    const State psi = score(a, cfg.t_end);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (int c = 0; c < 4; ++c) a[i][c] += s * s * psi[i][c];
    }
    if (cfg.record_trajectory) traj.back() = a;
  }
  if (!cfg.record_trajectory) traj.push_back(std::move(a));
  return traj;
}

inline NoiseFn gaussian_noise(Rng& rng) {
  return [&rng](State& eps) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& e : eps) {
      for (double& x : e) x = n(rng);
    }
  };
}

/// A(t_start) ~ N(0, sigma(t_start)^2 I).
inline State initial_state(std::size_t n, const SampleConfig& cfg, Rng& rng) {
  std::normal_distribution<double> d(0.0, sigma(cfg.t_start, cfg.schedule));
  State a(n);
  for (auto& v : a) {
    for (double& x : v) x = d(rng);
  }
  return a;
}

struct ChainResult {
  PackingInstance instance;
  double utilization = 0.0;
  bool feasible = false;
  std::vector<State> trajectory;
};

struct SampleResult {
  std::vector<ChainResult> chains;
  std::size_t best = 0;
  /// false when no chain was feasible and `best` is the best-utilization fallback
  bool best_feasible = false;
};

/// Optional per-chain post-processing of the read-out instance (e.g. enhancement).
using PostProcess = std::function<PackingInstance(const PackingInstance&)>;

/// Feasible chains first, then higher utilization, then lower index.
inline bool better_chain(const ChainResult& a, std::size_t ia, const ChainResult& b, std::size_t ib) {
  if (a.feasible != b.feasible) return a.feasible;
  if (a.utilization != b.utilization) return a.utilization > b.utilization;
  return ia < ib;
}

inline std::size_t select_best(std::span<const ChainResult> chains) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < chains.size(); ++i) {
    if (better_chain(chains[i], i, chains[best], best)) best = i;
  }
  return best;
}

/// Batch of independent reverse-SDE chains over the poses of `polygons` in
/// `container`. Chain k draws from the stream derive_seed(rng_seed, k), so a
/// larger batch with the same seed contains every chain of a smaller one.
inline SampleResult sample_rsde(const ScoreFn& score, const std::vector<Polygon>& polygons, const Container& container,
                                const SampleConfig& cfg, const PostProcess& post = nullptr,
                                std::optional<double> feasibility_tol = std::nullopt) {
  cfg.validate();
  SampleResult out;
  out.chains.resize(cfg.batch, ChainResult{PackingInstance(polygons, container), 0.0, false, {}});
  parallel_for(static_cast<std::size_t>(cfg.batch), [&](std::size_t k) {
    Rng rng = make_rng(cfg.rng_seed, {k});
    State a0 = initial_state(polygons.size(), cfg, rng);
    auto traj = integrate(score, std::move(a0), cfg, gaussian_noise(rng));
    ChainResult& c = out.chains[k];
    c.instance.poses = to_poses(traj.back(), cfg.translation_scale);
    if (post) c.instance = post(c.instance);
    c.utilization = utilization(c.instance).value;
    c.feasible = dataset::feasibility(c.instance, feasibility_tol).feasible;
    if (cfg.record_trajectory) c.trajectory = std::move(traj);
  });
  out.best = select_best(out.chains);
  out.best_feasible = out.chains[out.best].feasible;
  return out;
}

}  // namespace gfpack::diffusion
