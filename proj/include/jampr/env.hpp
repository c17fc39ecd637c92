#pragma once

#include <limits>
#include <string>
#include <vector>

#include "jampr/instance.hpp"
#include "jampr/rng.hpp"

namespace jampr {

enum class VariantKind { CVRP, TW1, TW2, TW3 };
enum class PenaltyFn { Linear, Quadratic };

const char* to_string(VariantKind k);
VariantKind variant_kind_from(const std::string& s);

// Problem variant: which window bounds are hard, penalty weights and shape.
// TW1 keeps hard upper bounds (beta infinite); TW2/TW3 soften them.
//
// The objective prices each arc at distance plus the departure service time,
// and both window deviations are measured at the arrival time T: early
// deviation max(a_i - T, 0), late deviation max(T - b_i, 0). For waiting
// variants the early deviation equals the waiting time, so alpha is the
// price of waiting (free under TW2's alpha = 0, fully priced under TW1's
// alpha = 1). cost_includes_wait = false drops that term for waiting
// variants instead, leaving only the arc costs and the remaining penalties.
struct Variant {
  VariantKind kind = VariantKind::TW1;
  double alpha = 1.0;
  double beta = std::numeric_limits<double>::infinity();
  PenaltyFn penalty = PenaltyFn::Linear;
  bool cost_includes_wait = true;

  static Variant make(VariantKind k);

  bool is_tw() const { return kind != VariantKind::CVRP; }
  bool hard_late() const { return kind == VariantKind::TW1; }
  // TW1/TW2 vehicles wait (free of penalty) until the window opens;
  // TW3 serves on arrival and pays the early deviation.
  bool waits() const { return kind != VariantKind::TW3; }
  double lambda(double x) const { return penalty == PenaltyFn::Linear ? x : x * x; }
  void check() const;
};

struct EnvConfig {
  int m_con = 1;  // concurrently active vehicles
  int m_pre = 6;  // episode budget of premature depot returns
  int K = 0;      // fleet size; 0 means one vehicle per customer

  static EnvConfig defaults(VariantKind k, int n);
};

struct infeasible_state_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct infeasible_action_error : std::logic_error {
  using std::logic_error::logic_error;
};
struct infeasible_solution_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct VehicleState {
  int index = 0;
  int position = 0;  // node id of the last served node, 0 at the depot
  double time = 0;   // service-start clock at position; return clock once back
  double load = 0;   // fraction of Q
  bool active = false;
  bool used = false;
  std::vector<int> tour;  // customer ids, depot endpoints implicit

  // Incremental tour accounting, kept after the vehicle returns.
  double tour_dist = 0, tour_service = 0, tour_wait = 0;
  double early_lam = 0, late_lam = 0;  // sums of lambda(deviation)
  double early_raw = 0, late_raw = 0;
  double finish_time = 0;
};

struct Action {
  int vehicle = 0;
  int node = 0;  // 0 = return to depot
};

struct StepEvents {
  double arrival = 0, service_start = 0, wait = 0;
  double early_dev = 0, late_dev = 0;
  bool premature = false;
  int activated = -1;
  bool finished = false;
};

inline constexpr int kNoVehicle = -1;

class Env;

// Mutable construction state. A value type: copy freely, mutate through
// Env::step under exclusive access only.
struct State {
  const Env* env = nullptr;
  std::vector<VehicleState> vehicles;
  std::vector<int> active_set;  // m_con slots, kNoVehicle once exhausted
  std::vector<uint8_t> visited; // indexed by node id, [0] unused
  int visited_count = 0;
  int premature_budget = 0;
  int next_vehicle = 0;
  int step_count = 0;
  bool done = false;

  bool finished() const { return done; }
  int active_count() const;
  std::vector<std::vector<int>> tour_plan() const;  // K x L, zero-padded
};

struct Solution {
  std::vector<std::vector<int>> tours;  // non-empty customer sequences
  int k() const { return static_cast<int>(tours.size()); }
};

struct TourCost {
  int customers = 0;
  double load = 0;  // raw demand
  double distance = 0, service = 0, wait = 0, duration = 0;
  double early_lam = 0, late_lam = 0;
  double early_raw = 0, late_raw = 0;
};

struct CostBreakdown {
  std::vector<TourCost> tours;
  double distance = 0, service = 0, wait = 0, duration = 0;
  double early_pen = 0, late_pen = 0;
  double total = 0;
  int k = 0;
};

// Per-instance environment context: distance matrix, normalized demands,
// transition and masking rules. Immutable; share one across rollouts.
class Env {
 public:
  Env(Instance inst, Variant variant, EnvConfig cfg);

  const Instance& instance() const { return inst_; }
  const Variant& variant() const { return variant_; }
  const EnvConfig& config() const { return cfg_; }
  int n() const { return inst_.n(); }
  int n_nodes() const { return inst_.n() + 1; }
  int fleet_size() const { return cfg_.K; }
  int max_tour_len() const { return inst_.n(); }

  double d(int i, int j) const { return dist_[i * stride_ + j]; }
  // Arc cost c_ij: distance, plus the departure node's service time for TW.
  double transit(int i, int j) const {
    return d(i, j) + (variant_.is_tw() ? inst_.nodes[i].service : 0.0);
  }
  double qn(int i) const { return qn_[i]; }

  State reset() const;

  double arrival_time(const State& s, int k, int i) const;
  bool customer_feasible(const State& s, int k, int i) const;
  bool any_customer_feasible(const State& s, int k) const;
  bool depot_feasible(const State& s, int k) const;

  // Flat row-major boolean mask over active slots x nodes, consistent with
  // phi. Throws infeasible_state_error if nothing is feasible while
  // customers remain unvisited.
  std::vector<uint8_t> feasible_mask(const State& s) const;

  StepEvents step(State& s, Action a) const;

  Solution solution(const State& s) const;  // requires finished()
  CostBreakdown incremental_cost(const State& s) const;

 private:
  void do_return(State& s, int k) const;

  Instance inst_;
  Variant variant_;
  EnvConfig cfg_;
  int stride_;
  std::vector<double> dist_;
  std::vector<double> qn_;
};

// Flat action index mapping: m -> (slot, node id), row-major over slots.
std::pair<int, int> phi(int m, int n_nodes, int m_con);
int flat_index(int slot, int node, int n_nodes);
// Resolves the slot through the state's active set.
Action phi_action(const State& s, int m);

// Recomputes cost from the tour list by simulating each tour from a_0 under
// the variant's waiting rule. Throws infeasible_solution_error when TW1
// (beta infinite) meets a late arrival.
CostBreakdown cost(const Instance& inst, const Solution& sol, const Variant& variant);

struct Violation {
  int tour = -1;  // -1 for solution-level violations
  std::string kind;
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

// Independent structural checks: customers covered exactly once, capacity,
// hard windows under TW1, depot horizon. Violations are data, not errors.
ValidationReport validate(const Instance& inst, const Solution& sol, const Variant& variant);

// Sequential single-tour random policy: one active vehicle, uniform choice
// over all its feasible actions (the depot return counts as one action
// whenever the mask allows it).
Solution random_rollout(const Env& env, Rng& rng);

struct RandomSolveResult {
  Solution best;
  CostBreakdown cost;
  int samples = 0;
};

// Best of n random rollouts by total cost. Draw j uses the rng sub-stream
// derive(seed, j), so sample sets are nested across increasing n.
RandomSolveResult random_solve(const Instance& inst, const Variant& variant, int n_samples,
                               uint64_t seed);

// SOLFILE v1 text format: COST, K, then one `TOUR <k>: ...` line per tour.
void save_solution(std::ostream& out, const Solution& sol, double total_cost);
std::pair<Solution, double> load_solution(std::istream& in);
void save_solution_file(const std::string& path, const Solution& sol, double total_cost);
std::pair<Solution, double> load_solution_file(const std::string& path);

}  // namespace jampr
