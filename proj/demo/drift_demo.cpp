// A DP-mitigated scorer deployed across two time slices with growing bias.

#include <iostream>

#include "fairkit/experiments.hpp"

using namespace fairkit;

int main() {
  const auto r = experiments::run_temporal();
  std::cout << to_table(r.drift) << "\n";
  std::cout << "shock on " << r.shock_column << ": |DP| overall " << std::abs(r.dp_overall_shock)
            << ", conditioned on group " << r.deprived << " " << std::abs(r.dp_conditioned_shock) << "\n";
  std::cout << "retrained on slice 2: |DP| " << std::abs(r.dp_retrained_slice2) << "\n\n";
  std::cout << to_table(r.delta);
}
