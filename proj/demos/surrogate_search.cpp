// Runs the four update rules against the analytic surrogate objective at an
// equal evaluation budget and prints the efficiency table.

#include <cstdio>

#include "memosched/harness.hpp"

int main() {
  using namespace memosched;
  const SurrogateObjective surrogate = SurrogateObjective::defaults();

  std::printf("%8s %8s %12s\n", "rule", "calls", "best_f");
  for (UpdateRule rule :
       {UpdateRule::newton, UpdateRule::gd, UpdateRule::ng, UpdateRule::random}) {
    SearchConfig cfg;
    cfg.outer_iterations = 20;
    cfg.samples_per_iteration = 8;
    cfg.rule = rule;
    cfg.seed = 7;
    const SearchResult result = rule == UpdateRule::random ? random_search(cfg, surrogate)
                                                           : run_search(cfg, surrogate);
    std::printf("%8s %8llu %12.6f\n", to_string(rule).c_str(),
                static_cast<unsigned long long>(result.trace.iterations.back().calls),
                result.best_f);
  }
  return 0;
}
