// Packs the fragments of one square16 puzzle into a strip with the NFP + GA
// teacher and writes the layout as teacher_strip.svg.
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "gfpack.hpp"

int main(int argc, char** argv) {
  using namespace gfpack;
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const auto puzzle = dataset::generate_puzzle(dataset::square16(seed));
  teacher::TeacherConfig cfg;
  cfg.rng_seed = seed;
  const auto rec = teacher::evolve(puzzle.fragments, Container::strip(puzzle.ground_truth.container.height()), cfg);
  std::ofstream("teacher_strip.svg") << render::svg(rec.instance);
  std::cout << "utilization " << rec.utilization << ", strip length " << strip_length(rec.instance)
            << " -> teacher_strip.svg\n";
}
