// Fits the mixture space to the hand-designed reference schedule and prints
// both curves side by side.

#include <cstdio>

#include "memosched/schedule.hpp"

int main() {
  using namespace memosched;
  const int horizon = 200;
  const auto map = ShapeMap::defaults();
  const auto reference = [](int t) { return coteaching_schedule(0.5, 1.0, 10.0, t); };

  const FitResult fit = fit_to_reference(reference, horizon, map);
  std::printf("max deviation over the epoch grid: %.5f\n\n", fit.residual);
  std::printf("%6s %10s %10s\n", "epoch", "reference", "fitted");
  for (int t = 0; t <= horizon; t += 20) {
    std::printf("%6d %10.4f %10.4f\n", t, reference(t), eval_schedule(fit.params, t, horizon, map));
  }
  return 0;
}
