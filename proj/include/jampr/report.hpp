#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace jampr {

struct EvalRow {
  std::string instance;
  double cost = 0;
  int k = 0;
  double distance = 0;
  double duration = 0;
  double early_pen = 0, late_pen = 0;
  double seconds = 0;
};

struct EvalAggregates {
  int count = 0;
  double mean_cost = 0, std_cost = 0;
  double mean_k = 0;
  double mean_distance = 0;
  double mean_duration = 0;
  double mean_seconds = 0;
};

// Aggregate metrics over an instance set, written as CSV (metadata in
// comment lines). Re-parsing the rows reproduces the aggregates.
struct EvalReport {
  std::string policy;   // checkpoint path, "random", ...
  std::string mode;     // greedy / sample / random
  std::string variant;
  int m_con = 0;
  int n_samples = 0;
  uint64_t seed = 0;
  std::vector<EvalRow> rows;

  EvalAggregates aggregates() const;
  void write_csv(std::ostream& out) const;
  static EvalReport read_csv(std::istream& in);
};

std::string format_eval_table(const EvalReport& rep);

}  // namespace jampr
