#pragma once

#include <vector>

namespace jampr {

struct PairedTTest {
  double t = 0;       // mean(d) / (sd(d) / sqrt(n)), d = candidate - incumbent
  double p_less = 1;  // one-sided p-value for H1: candidate is better (mean d < 0)
  int n = 0;
};

// Paired t-test on per-instance costs. Throws std::invalid_argument when the
// vectors mismatch or hold fewer than two pairs.
PairedTTest paired_t_test(const std::vector<double>& candidate,
                          const std::vector<double>& incumbent);

}  // namespace jampr
