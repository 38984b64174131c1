// rms of f - P_{m-1} f for exp(-|x|^2/n) on uniform(-1,1)^n, scaled by n^{m/2}.
#include <cstdio>

#include "anova/experiments.hpp"

int main() {
  using namespace anova;
  ExperimentConfig cfg;
  cfg.dims = {2, 5, 10, 20, 50};
  cfg.samples = 20000;
  std::printf("%4s %2s %14s %14s %14s %14s\n", "n", "m", "rms", "scaled", "bound", "mc_rms");
  for (const auto& r : run_example1(cfg))
    std::printf("%4zu %2zu %14.6e %14.6e %14.6e %14.6e\n", r.n, r.m, r.rms, r.scaled, *r.bound, *r.mc_rms);
}
