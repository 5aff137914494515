// Runs the reverse-SDE sampler with a closed-form score whose data
// distribution is a row of unit squares, then renders the trajectory of the
// selected chain as frame_XXX.svg.
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "gfpack.hpp"

int main() {
  using namespace gfpack;
  const int n = 4;
  const std::vector<Polygon> squares(n, Polygon::rectangle(1, 1, {-0.5, -0.5}));
  diffusion::SampleConfig cfg;
  cfg.batch = 16;
  cfg.steps = 64;
  cfg.final_denoise = true;
  cfg.record_trajectory = true;
  const auto sched = cfg.schedule;
  const double spread = 0.05;
  auto score = [&](const diffusion::State& a, double t) {
    const double v = spread * spread + std::pow(diffusion::sigma(t, sched), 2);
    diffusion::State out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      const diffusion::Vec4 target{0.6 + 1.1 * static_cast<double>(i), 0.6, 1.0, 0.0};
      for (int k = 0; k < 4; ++k) out[i][k] = -(a[i][k] - target[k]) / v;
    }
    return out;
  };
  const auto res = diffusion::sample_rsde(score, squares, Container::strip(1.2), cfg,
                                          [](const PackingInstance& in) { return enhancement::enhance(in).instance; });
  const auto& best = res.chains[res.best];
  const auto frames = render::trajectory_frames(squares, Container::strip(1.2), best.trajectory);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    char name[32];
    std::snprintf(name, sizeof name, "frame_%03zu.svg", k);
    std::ofstream(name) << frames[k];
  }
  std::cout << "chain " << res.best << ": utilization " << best.utilization << ", feasible " << best.feasible << ", "
            << frames.size() << " frames\n";
}
