// Prints gamma for a few common marginals.
#include <cstdio>

#include "anova/marginals.hpp"

int main() {
  using namespace anova;
  const Marginal ms[] = {Marginal::uniform(-1, 1), Marginal::uniform(0, 1), Marginal::normal(0, 1),
                         Marginal::normal(0, 0.25)};
  for (const auto& m : ms) {
    const auto r = gamma_constant(ProductMeasure({m}));
    std::printf("%-20s gamma=%.10f  variance=%.10f\n", m.describe().c_str(), r.value, m.variance());
  }
  GammaOptions opt;
  opt.window = std::make_pair(-1.0, 1.0);
  std::printf("%-20s gamma=%.10f  (integration window [-1,1]^2)\n", "normal:0:1",
              gamma_constant(ProductMeasure({Marginal::normal(0, 1)}), opt).value);
}
