#include "jampr/stats.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/students_t.hpp>

namespace jampr {

PairedTTest paired_t_test(const std::vector<double>& candidate,
                          const std::vector<double>& incumbent) {
  if (candidate.size() != incumbent.size())
    throw std::invalid_argument("paired_t_test: length mismatch");
  int n = static_cast<int>(candidate.size());
  if (n < 2) throw std::invalid_argument("paired_t_test: need at least two pairs");

  double mean = 0;
  for (int i = 0; i < n; ++i) mean += candidate[i] - incumbent[i];
  mean /= n;
  double ss = 0;
  for (int i = 0; i < n; ++i) {
    double d = candidate[i] - incumbent[i] - mean;
    ss += d * d;
  }
  double sd = std::sqrt(ss / (n - 1));

  PairedTTest out;
  out.n = n;
  if (sd == 0) {
    // all differences identical: a strict improvement is certain or impossible
    out.t = mean < 0 ? -std::numeric_limits<double>::infinity()
                     : (mean > 0 ? std::numeric_limits<double>::infinity() : 0.0);
    out.p_less = mean < 0 ? 0.0 : 1.0;
    return out;
  }
  out.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  boost::math::students_t dist(n - 1);
  out.p_less = boost::math::cdf(dist, out.t);
  return out;
}

}  // namespace jampr
