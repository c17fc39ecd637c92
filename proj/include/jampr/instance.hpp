#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace jampr {

struct Node {
  int id = 0;          // 0 is the depot
  double x = 0, y = 0;
  double demand = 0;   // raw units, 0 for the depot
  double tw_start = 0; // a_i
  double tw_end = 0;   // b_i
  double service = 0;  // h_i
};

enum class VariantHint { CVRP, CVRPTW };

// Finite stand-in for an unbounded window end, so penalty arithmetic on
// CVRP instances never sees infinities.
inline constexpr double kOpenEnd = 1073741824.0;  // 2^30

// Immutable routing problem. nodes[0] is the depot; its window is the
// planning horizon. Instances are value types, safe to share across threads.
struct Instance {
  std::vector<Node> nodes;
  double capacity = 0;  // Q
  VariantHint variant_hint = VariantHint::CVRPTW;
  uint64_t seed = 0;    // provenance tag

  int n() const { return static_cast<int>(nodes.size()) - 1; }
  double horizon() const { return nodes[0].tw_end; }
  double dist(int i, int j) const;

  // Structural invariants: depot present with zero demand/service, windows
  // ordered, customer demands positive and within capacity.
  void check() const;
};

bool operator==(const Node& a, const Node& b);
bool operator==(const Instance& a, const Instance& b);

struct GenParams {
  double horizon = 1000.0;
  double service = 10.0;
  std::optional<double> capacity;  // overrides the size table
};

// Samples a CVRP-TW instance: coordinates uniform in [0,100]^2, demands
// min(42, max(1, floor(|N(15,10)|))), windows drawn inside the per-customer
// reachable horizon. Deterministic in (n, seed, params).
Instance generate_cvrptw(int n, uint64_t seed, const GenParams& params = {});

// Samples a CVRP instance: coordinates uniform in [0,1]^2, integer demands
// uniform in {1..9}, windows disabled (open sentinel), zero service.
Instance generate_cvrp(int n, uint64_t seed, std::optional<double> capacity = {});

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Solomon benchmark format (VEHICLE / CUSTOMER sections). By default the
// DUE DATE column is taken as the window end b_i verbatim; with
// due_minus_service the convention b_i = due - service is applied instead.
Instance parse_solomon(std::istream& in, bool due_minus_service = false);
Instance parse_solomon_file(const std::string& path, bool due_minus_service = false);

enum class Half { First, Second };

// Splits a 100-customer instance into depot + customers 1-50 or 51-100,
// re-indexed 1-50, keeping capacity and horizon.
Instance split_instance(const Instance& inst, Half half);

// VRPFILE v1: versioned text schema with shortest round-trip reals,
// bit-exact across save/load.
void save_instance(const Instance& inst, std::ostream& out);
Instance load_instance(std::istream& in);
void save_instance_file(const Instance& inst, const std::string& path);
Instance load_instance_file(const std::string& path);

}  // namespace jampr
