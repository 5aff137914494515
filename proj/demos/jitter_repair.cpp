// Jitters a puzzle's ground truth inside a strip, runs overlap resolution and
// gap elimination, and renders the layout before and after.
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "gfpack.hpp"

int main(int argc, char** argv) {
  using namespace gfpack;
  const double jitter = argc > 1 ? std::atof(argv[1]) : 0.02;
  const auto puzzle = dataset::generate_puzzle(dataset::square16(11));
  PackingInstance inst = dataset::as_strip(puzzle);
  const double h = inst.container.height();
  Rng rng = make_rng(11, {1});
  std::uniform_real_distribution<double> u(-jitter * h, jitter * h);
  for (auto& p : inst.poses) p = p.translated({u(rng), u(rng)});

  const auto before = dataset::evaluate(inst);
  enhancement::EnhanceConfig cfg;
  cfg.max_iters = 1000;
  const auto out = enhancement::enhance(inst, cfg);
  const auto after = dataset::evaluate(out.instance);
  std::ofstream("jitter_before.svg") << render::svg(inst);
  std::ofstream("jitter_after.svg") << render::svg(out.instance);
  std::cout << "before: overlap " << before.overlap_percent << "%, feasible " << before.feasible << '\n'
            << "after " << out.report.iterations << " iterations: overlap " << after.overlap_percent
            << "%, utilization " << after.utilization << ", feasible " << after.feasible << '\n';
}
