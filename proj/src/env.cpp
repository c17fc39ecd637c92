#include "jampr/env.hpp"

#include <algorithm>
#include <cassert>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace jampr {

namespace {
constexpr double kEps = 1e-9;
}

const char* to_string(VariantKind k) {
  switch (k) {
    case VariantKind::CVRP: return "CVRP";
    case VariantKind::TW1: return "TW1";
    case VariantKind::TW2: return "TW2";
    case VariantKind::TW3: return "TW3";
  }
  return "?";
}

VariantKind variant_kind_from(const std::string& s) {
  if (s == "CVRP" || s == "cvrp") return VariantKind::CVRP;
  if (s == "TW1" || s == "tw1") return VariantKind::TW1;
  if (s == "TW2" || s == "tw2") return VariantKind::TW2;
  if (s == "TW3" || s == "tw3") return VariantKind::TW3;
  throw std::invalid_argument("unknown variant '" + s + "'");
}

Variant Variant::make(VariantKind k) {
  Variant v;
  v.kind = k;
  switch (k) {
    case VariantKind::CVRP:
      v.alpha = 0;
      v.beta = 0;
      v.cost_includes_wait = false;
      break;
    case VariantKind::TW1:
      v.alpha = 1.0;
      v.beta = std::numeric_limits<double>::infinity();
      break;
    case VariantKind::TW2:
      v.alpha = 0.0;
      v.beta = 0.5;
      break;
    case VariantKind::TW3:
      v.alpha = 0.1;
      v.beta = 0.5;
      break;
  }
  return v;
}

void Variant::check() const {
  if (alpha < 0 || beta < 0) throw std::invalid_argument("variant: weights must be non-negative");
  if (kind == VariantKind::TW1 && !std::isinf(beta))
    throw std::invalid_argument("variant: TW1 requires an infinite late weight");
}

EnvConfig EnvConfig::defaults(VariantKind k, int n) {
  EnvConfig cfg;
  cfg.m_pre = k == VariantKind::CVRP ? 3 : 6;
  cfg.K = n;
  return cfg;
}

int State::active_count() const {
  int c = 0;
  for (int k : active_set)
    if (k != kNoVehicle) ++c;
  return c;
}

std::vector<std::vector<int>> State::tour_plan() const {
  int L = env->max_tour_len();
  std::vector<std::vector<int>> plan(vehicles.size(), std::vector<int>(L, 0));
  for (size_t k = 0; k < vehicles.size(); ++k)
    for (size_t t = 0; t < vehicles[k].tour.size(); ++t) plan[k][t] = vehicles[k].tour[t];
  return plan;
}

Env::Env(Instance inst, Variant variant, EnvConfig cfg)
    : inst_(std::move(inst)), variant_(variant), cfg_(cfg) {
  inst_.check();
  variant_.check();
  if (cfg_.m_con < 1) throw std::invalid_argument("env: m_con must be >= 1");
  if (cfg_.m_pre < 0) throw std::invalid_argument("env: m_pre must be >= 0");
  if (cfg_.K <= 0) cfg_.K = std::max(inst_.n(), 1);
  stride_ = n_nodes();
  dist_.resize(static_cast<size_t>(stride_) * stride_);
  for (int i = 0; i < stride_; ++i)
    for (int j = 0; j < stride_; ++j) dist_[i * stride_ + j] = inst_.dist(i, j);
  qn_.resize(stride_);
  for (int i = 0; i < stride_; ++i) qn_[i] = inst_.nodes[i].demand / inst_.capacity;
}

State Env::reset() const {
  State s;
  s.env = this;
  s.vehicles.resize(cfg_.K);
  double t0 = inst_.nodes[0].tw_start;
  for (int k = 0; k < cfg_.K; ++k) {
    s.vehicles[k].index = k;
    s.vehicles[k].time = t0;
  }
  s.visited.assign(n_nodes(), 0);
  s.premature_budget = cfg_.m_pre;
  s.active_set.assign(cfg_.m_con, kNoVehicle);
  if (n() == 0) {
    s.done = true;
    s.next_vehicle = 0;
    return s;
  }
  int act = std::min(cfg_.m_con, cfg_.K);
  for (int k = 0; k < act; ++k) {
    s.vehicles[k].active = true;
    s.vehicles[k].used = true;
    s.active_set[k] = k;
  }
  s.next_vehicle = act;
  return s;
}

double Env::arrival_time(const State& s, int k, int i) const {
  const VehicleState& v = s.vehicles[k];
  return v.time + transit(v.position, i);
}

bool Env::customer_feasible(const State& s, int k, int i) const {
  const VehicleState& v = s.vehicles[k];
  if (!v.active || s.visited[i]) return false;
  if (v.load + qn_[i] > 1.0 + kEps) return false;
  if (!variant_.is_tw()) return true;

  const Node& nd = inst_.nodes[i];
  double arr = v.time + transit(v.position, i);
  if (variant_.hard_late() && arr > nd.tw_end + kEps) return false;
  double start = variant_.waits() ? std::max(arr, nd.tw_start) : arr;
  // The vehicle must be able to reach the depot again before the horizon
  // closes. The bound is on travel arrival; the generator guarantees every
  // window satisfies it for a fresh vehicle.
  return start + d(i, 0) <= inst_.horizon() + kEps;
}

bool Env::any_customer_feasible(const State& s, int k) const {
  for (int i = 1; i < n_nodes(); ++i)
    if (customer_feasible(s, k, i)) return true;
  return false;
}

bool Env::depot_feasible(const State& s, int k) const {
  const VehicleState& v = s.vehicles[k];
  if (!v.active || v.tour.empty()) return false;
  return s.premature_budget > 0 || !any_customer_feasible(s, k);
}

std::vector<uint8_t> Env::feasible_mask(const State& s) const {
  if (s.done) throw std::logic_error("feasible_mask: construction already finished");
  std::vector<uint8_t> mask(static_cast<size_t>(cfg_.m_con) * n_nodes(), 0);
  bool any = false;
  for (int slot = 0; slot < cfg_.m_con; ++slot) {
    int k = s.active_set[slot];
    if (k == kNoVehicle) continue;
    uint8_t* row = mask.data() + static_cast<size_t>(slot) * n_nodes();
    row[0] = depot_feasible(s, k) ? 1 : 0;
    any = any || row[0];
    for (int i = 1; i < n_nodes(); ++i) {
      row[i] = customer_feasible(s, k, i) ? 1 : 0;
      any = any || row[i];
    }
  }
  if (!any)
    throw infeasible_state_error("no feasible action with " +
                                 std::to_string(n() - s.visited_count) +
                                 " customers unvisited");
  return mask;
}

void Env::do_return(State& s, int k) const {
  VehicleState& v = s.vehicles[k];
  assert(v.active && !v.tour.empty());
  double leg_d = d(v.position, 0);
  double leg_h = variant_.is_tw() ? inst_.nodes[v.position].service : 0.0;
  v.time += leg_d + leg_h;
  v.finish_time = v.time;
  v.tour_dist += leg_d;
  v.tour_service += leg_h;
  v.position = 0;
  v.active = false;
}

StepEvents Env::step(State& s, Action a) const {
  if (s.done) throw infeasible_action_error("step: construction already finished");
  if (a.vehicle < 0 || a.vehicle >= cfg_.K) throw infeasible_action_error("step: bad vehicle index");
  if (a.node < 0 || a.node >= n_nodes()) throw infeasible_action_error("step: bad node index");

  StepEvents ev;
  if (a.node == 0) {
    if (!depot_feasible(s, a.vehicle))
      throw infeasible_action_error("step: depot return not feasible for vehicle " +
                                    std::to_string(a.vehicle));
    ev.premature = any_customer_feasible(s, a.vehicle);
    if (ev.premature) --s.premature_budget;
    do_return(s, a.vehicle);
    ev.arrival = ev.service_start = s.vehicles[a.vehicle].time;

    auto it = std::find(s.active_set.begin(), s.active_set.end(), a.vehicle);
    assert(it != s.active_set.end());
    s.active_set.erase(it);
    if (s.next_vehicle < cfg_.K) {
      int nv = s.next_vehicle++;
      s.vehicles[nv].active = true;
      s.vehicles[nv].used = true;
      s.active_set.push_back(nv);
      ev.activated = nv;
    }
    s.active_set.resize(cfg_.m_con, kNoVehicle);
  } else {
    if (!customer_feasible(s, a.vehicle, a.node))
      throw infeasible_action_error("step: node " + std::to_string(a.node) +
                                    " not feasible for vehicle " + std::to_string(a.vehicle));
    VehicleState& v = s.vehicles[a.vehicle];
    const Node& nd = inst_.nodes[a.node];
    double leg_d = d(v.position, a.node);
    double leg_h = variant_.is_tw() ? inst_.nodes[v.position].service : 0.0;
    double arr = v.time + leg_d + leg_h;
    double early = std::max(nd.tw_start - arr, 0.0);
    double wait = variant_.waits() ? early : 0.0;
    double start = arr + wait;
    double late = std::max(arr - nd.tw_end, 0.0);

    ev.arrival = arr;
    ev.service_start = start;
    ev.wait = wait;
    ev.early_dev = early;
    ev.late_dev = late;

    v.time = start;
    v.position = a.node;
    v.load += qn_[a.node];
    v.tour.push_back(a.node);
    v.tour_dist += leg_d;
    v.tour_service += leg_h;
    v.tour_wait += wait;
    v.early_raw += early;
    v.late_raw += late;
    v.early_lam += variant_.lambda(early);
    v.late_lam += variant_.lambda(late);

    s.visited[a.node] = 1;
    ++s.visited_count;
    if (s.visited_count == n()) {
      for (int k : s.active_set) {
        if (k == kNoVehicle) continue;
        if (s.vehicles[k].tour.empty())
          s.vehicles[k].active = false;
        else
          do_return(s, k);
      }
      s.active_set.assign(cfg_.m_con, kNoVehicle);
      s.done = true;
      ev.finished = true;
    }
  }
  ++s.step_count;
  return ev;
}

Solution Env::solution(const State& s) const {
  if (!s.done) throw std::logic_error("solution: construction not finished");
  Solution sol;
  for (const VehicleState& v : s.vehicles)
    if (!v.tour.empty()) sol.tours.push_back(v.tour);
  return sol;
}

namespace {

CostBreakdown finalize_breakdown(std::vector<TourCost> tours, const Variant& variant) {
  CostBreakdown cb;
  double early_lam = 0, late_lam = 0;
  for (const TourCost& tc : tours) {
    cb.distance += tc.distance;
    cb.service += tc.service;
    cb.wait += tc.wait;
    cb.duration += tc.duration;
    early_lam += tc.early_lam;
    late_lam += tc.late_lam;
  }
  cb.k = static_cast<int>(tours.size());
  cb.tours = std::move(tours);
  bool price_early = variant.waits() ? variant.cost_includes_wait : true;
  cb.early_pen = (early_lam == 0 || !price_early) ? 0.0 : variant.alpha * early_lam;
  if (late_lam == 0) {
    cb.late_pen = 0.0;
  } else if (std::isinf(variant.beta)) {
    throw infeasible_solution_error("late arrival under a hard upper bound");
  } else {
    cb.late_pen = variant.beta * late_lam;
  }
  cb.total = cb.distance + cb.service + cb.early_pen + cb.late_pen;
  return cb;
}

}  // namespace

CostBreakdown Env::incremental_cost(const State& s) const {
  if (!s.done) throw std::logic_error("incremental_cost: construction not finished");
  std::vector<TourCost> tours;
  double t0 = inst_.nodes[0].tw_start;
  for (const VehicleState& v : s.vehicles) {
    if (v.tour.empty()) continue;
    TourCost tc;
    tc.customers = static_cast<int>(v.tour.size());
    for (int i : v.tour) tc.load += inst_.nodes[i].demand;
    tc.distance = v.tour_dist;
    tc.service = v.tour_service;
    tc.wait = v.tour_wait;
    tc.duration = v.finish_time - t0;
    tc.early_lam = v.early_lam;
    tc.late_lam = v.late_lam;
    tc.early_raw = v.early_raw;
    tc.late_raw = v.late_raw;
    tours.push_back(tc);
  }
  return finalize_breakdown(std::move(tours), variant_);
}

std::pair<int, int> phi(int m, int n_nodes, int m_con) {
  if (m < 0 || m >= m_con * n_nodes) throw std::out_of_range("phi: flat index out of range");
  return {m / n_nodes, m % n_nodes};
}

int flat_index(int slot, int node, int n_nodes) { return slot * n_nodes + node; }

Action phi_action(const State& s, int m) {
  auto [slot, node] = phi(m, s.env->n_nodes(), s.env->config().m_con);
  int k = s.active_set[slot];
  if (k == kNoVehicle) throw infeasible_action_error("phi_action: sentinel slot selected");
  return {k, node};
}

CostBreakdown cost(const Instance& inst, const Solution& sol, const Variant& variant) {
  std::vector<TourCost> tours;
  tours.reserve(sol.tours.size());
  double t0 = inst.nodes[0].tw_start;
  for (const auto& tour : sol.tours) {
    if (tour.empty()) throw std::invalid_argument("cost: empty tour");
    TourCost tc;
    tc.customers = static_cast<int>(tour.size());
    double t = t0;
    int pos = 0;
    for (int i : tour) {
      if (i < 1 || i > inst.n()) throw std::invalid_argument("cost: node id out of range");
      const Node& nd = inst.nodes[i];
      double leg_d = inst.dist(pos, i);
      double leg_h = variant.is_tw() ? inst.nodes[pos].service : 0.0;
      double arr = t + leg_d + leg_h;
      double early = std::max(nd.tw_start - arr, 0.0);
      double wait = variant.waits() ? early : 0.0;
      double late = std::max(arr - nd.tw_end, 0.0);
      tc.load += nd.demand;
      tc.distance += leg_d;
      tc.service += leg_h;
      tc.wait += wait;
      tc.early_raw += early;
      tc.late_raw += late;
      tc.early_lam += variant.lambda(early);
      tc.late_lam += variant.lambda(late);
      t = arr + wait;
      pos = i;
    }
    double leg_d = inst.dist(pos, 0);
    double leg_h = variant.is_tw() ? inst.nodes[pos].service : 0.0;
    t += leg_d + leg_h;
    tc.distance += leg_d;
    tc.service += leg_h;
    tc.duration = t - t0;
    tours.push_back(tc);
  }
  return finalize_breakdown(std::move(tours), variant);
}

ValidationReport validate(const Instance& inst, const Solution& sol, const Variant& variant) {
  ValidationReport rep;
  int n = inst.n();
  std::vector<int> count(n + 1, 0);

  for (size_t t = 0; t < sol.tours.size(); ++t) {
    const auto& tour = sol.tours[t];
    if (tour.empty()) {
      rep.violations.push_back({static_cast<int>(t), "structure", "empty tour"});
      continue;
    }
    double load = 0;
    bool ids_ok = true;
    for (int i : tour) {
      if (i < 1 || i > n) {
        rep.violations.push_back(
            {static_cast<int>(t), "structure", "node id " + std::to_string(i) + " out of range"});
        ids_ok = false;
        continue;
      }
      ++count[i];
      load += inst.nodes[i].demand;
    }
    if (load > inst.capacity * (1.0 + kEps))
      rep.violations.push_back({static_cast<int>(t), "condition (3)",
                                "tour load " + std::to_string(load) + " exceeds capacity " +
                                    std::to_string(inst.capacity)});
    if (!ids_ok) continue;

    // Straight-line schedule simulation for the window and horizon checks.
    double clock = inst.nodes[0].tw_start;
    int pos = 0;
    double last_start = clock;
    for (int i : tour) {
      const Node& nd = inst.nodes[i];
      double arr = clock + inst.dist(pos, i) + (variant.is_tw() ? inst.nodes[pos].service : 0.0);
      double start = variant.waits() ? std::max(arr, nd.tw_start) : arr;
      if (variant.hard_late() && arr > nd.tw_end + kEps)
        rep.violations.push_back({static_cast<int>(t), "hard-window",
                                  "arrival " + std::to_string(arr) + " after window end " +
                                      std::to_string(nd.tw_end) + " at node " + std::to_string(i)});
      clock = start;
      last_start = start;
      pos = i;
    }
    if (variant.is_tw() && last_start + inst.dist(pos, 0) > inst.horizon() + kEps)
      rep.violations.push_back({static_cast<int>(t), "horizon",
                                "return at " + std::to_string(last_start + inst.dist(pos, 0)) +
                                    " after horizon " + std::to_string(inst.horizon())});
  }

  for (int i = 1; i <= n; ++i) {
    if (count[i] == 0)
      rep.violations.push_back({-1, "condition (1)", "customer " + std::to_string(i) + " unserved"});
    else if (count[i] > 1)
      rep.violations.push_back(
          {-1, "condition (2)", "customer " + std::to_string(i) + " served " +
                                    std::to_string(count[i]) + " times"});
  }
  return rep;
}

Solution random_rollout(const Env& env, Rng& rng) {
  if (env.config().m_con != 1)
    throw std::logic_error("random_rollout: sequential construction requires m_con = 1");
  State s = env.reset();
  std::vector<int> feas;
  feas.reserve(env.n() + 1);
  while (!s.done) {
    int k = s.active_set[0];
    if (k == kNoVehicle)
      throw infeasible_state_error("random_rollout: fleet exhausted with customers unvisited");
    feas.clear();
    if (env.depot_feasible(s, k)) feas.push_back(0);
    for (int i = 1; i < env.n_nodes(); ++i)
      if (env.customer_feasible(s, k, i)) feas.push_back(i);
    if (feas.empty())
      throw infeasible_state_error("random_rollout: vehicle stuck with an empty tour");
    env.step(s, {k, feas[static_cast<size_t>(rng.below(feas.size()))]});
  }
  return env.solution(s);
}

void save_solution(std::ostream& out, const Solution& sol, double total_cost) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), total_cost);
  (void)ec;
  out << "SOLFILE v1\n";
  out << "COST " << std::string(buf, p) << "\n";
  out << "K " << sol.k() << "\n";
  for (int t = 0; t < sol.k(); ++t) {
    out << "TOUR " << t << ":";
    for (int i : sol.tours[t]) out << ' ' << i;
    out << "\n";
  }
}

std::pair<Solution, double> load_solution(std::istream& in) {
  std::string line;
  auto need = [&](const char* what) {
    if (!std::getline(in, line)) throw parse_error(std::string("SOLFILE: truncated at ") + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  need("header");
  if (line != "SOLFILE v1") throw parse_error("SOLFILE: unsupported header '" + line + "'");
  need("cost");
  double total = 0;
  {
    std::istringstream iss(line);
    std::string key;
    iss >> key >> total;
    if (key != "COST" || !iss) throw parse_error("SOLFILE: expected COST line");
  }
  need("k");
  int k = 0;
  {
    std::istringstream iss(line);
    std::string key;
    iss >> key >> k;
    if (key != "K" || !iss || k < 0) throw parse_error("SOLFILE: expected K line");
  }
  Solution sol;
  for (int t = 0; t < k; ++t) {
    need("tour");
    std::istringstream iss(line);
    std::string key, idx;
    iss >> key >> idx;
    if (key != "TOUR") throw parse_error("SOLFILE: expected TOUR line");
    std::vector<int> tour;
    int node;
    while (iss >> node) tour.push_back(node);
    if (tour.empty()) throw parse_error("SOLFILE: empty tour record");
    sol.tours.push_back(std::move(tour));
  }
  return {sol, total};
}

void save_solution_file(const std::string& path, const Solution& sol, double total_cost) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open " + path + " for writing");
  save_solution(out, sol, total_cost);
}

std::pair<Solution, double> load_solution_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  return load_solution(in);
}

RandomSolveResult random_solve(const Instance& inst, const Variant& variant, int n_samples,
                               uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("random_solve: need at least one sample");
  EnvConfig cfg = EnvConfig::defaults(variant.kind, inst.n());
  cfg.m_con = 1;
  Env env(inst, variant, cfg);
  RandomSolveResult best;
  best.samples = n_samples;
  bool have = false;
  for (int j = 0; j < n_samples; ++j) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(j)));
    Solution sol = random_rollout(env, rng);
    CostBreakdown cb = cost(inst, sol, variant);
    if (!have || cb.total < best.cost.total) {
      best.best = std::move(sol);
      best.cost = std::move(cb);
      have = true;
    }
  }
  return best;
}

}  // namespace jampr
