#include "jampr/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "jampr/instance.hpp"
#include "jampr/rng.hpp"
#include "support/oracle.hpp"

using namespace jampr;

namespace {

Node node(int id, double x, double y, double q, double a, double b, double h) {
  Node nd;
  nd.id = id;
  nd.x = x;
  nd.y = y;
  nd.demand = q;
  nd.tw_start = a;
  nd.tw_end = b;
  nd.service = h;
  return nd;
}

Instance triangle_instance(double a1 = 0, double b1 = 1000) {
  Instance inst;
  inst.nodes.push_back(node(0, 0, 0, 0, 0, 1000, 0));
  inst.nodes.push_back(node(1, 3, 4, 100, a1, b1, 10));
  inst.capacity = 500;
  inst.variant_hint = VariantHint::CVRPTW;
  return inst;
}

// Same triangle plus a far second customer, so serving customer 1 does not
// finish the construction (which would trigger the implicit depot return).
Instance triangle_plus(double a1 = 0, double b1 = 1000) {
  Instance inst = triangle_instance(a1, b1);
  inst.nodes.push_back(node(2, 30, 40, 100, 0, 1000, 10));
  return inst;
}

// Random JAMPR-style rollout taking uniform choices over the full mask.
State random_mask_rollout(const Env& env, std::mt19937& gen) {
  State s = env.reset();
  while (!s.done) {
    auto mask = env.feasible_mask(s);
    std::vector<int> open;
    for (size_t m = 0; m < mask.size(); ++m)
      if (mask[m]) open.push_back(static_cast<int>(m));
    std::uniform_int_distribution<size_t> pick(0, open.size() - 1);
    env.step(s, phi_action(s, open[pick(gen)]));
  }
  return s;
}

double total_demand(const Instance& inst) {
  double q = 0;
  for (int i = 1; i <= inst.n(); ++i) q += inst.nodes[i].demand;
  return q;
}

}  // namespace

TEST_CASE("transit cost includes the departure service time for TW") {
  Instance inst = triangle_instance();
  Env tw(inst, Variant::make(VariantKind::TW1), EnvConfig::defaults(VariantKind::TW1, 1));
  CHECK(tw.transit(0, 1) == doctest::Approx(5.0));
  CHECK(tw.transit(1, 0) == doctest::Approx(15.0));

  inst.variant_hint = VariantHint::CVRP;
  Env cv(inst, Variant::make(VariantKind::CVRP), EnvConfig::defaults(VariantKind::CVRP, 1));
  CHECK(cv.transit(0, 1) == doctest::Approx(5.0));
  CHECK(cv.transit(1, 0) == doctest::Approx(5.0));
}

TEST_CASE("reset starts m_con vehicles at the depot") {
  Instance inst = generate_cvrptw(20, 5);
  EnvConfig cfg = EnvConfig::defaults(VariantKind::TW1, inst.n());
  cfg.m_con = 3;
  Env env(inst, Variant::make(VariantKind::TW1), cfg);
  State s = env.reset();
  CHECK(s.active_count() == 3);
  CHECK(s.premature_budget == 6);
  CHECK(s.next_vehicle == 3);
  for (int k = 0; k < 3; ++k) {
    CHECK(s.vehicles[k].active);
    CHECK(s.vehicles[k].position == 0);
    CHECK(s.vehicles[k].time == 0.0);
    CHECK(s.vehicles[k].load == 0.0);
  }
  CHECK(s.vehicles.size() == 20);  // K defaults to N

  SUBCASE("single vehicle fleet") {
    EnvConfig one;
    one.m_con = 1;
    one.m_pre = 6;
    one.K = 1;
    Env env1(inst, Variant::make(VariantKind::TW1), one);
    State s1 = env1.reset();
    CHECK(s1.active_count() == 1);
  }

  SUBCASE("m_con below one is rejected") {
    EnvConfig bad;
    bad.m_con = 0;
    CHECK_THROWS_AS(Env(inst, Variant::make(VariantKind::TW1), bad), std::invalid_argument);
  }
}

TEST_CASE("arrival time adds the transit cost to the vehicle clock") {
  Instance inst = triangle_plus(100, 1000);
  Env env(inst, Variant::make(VariantKind::TW1), EnvConfig::defaults(VariantKind::TW1, 1));
  State s = env.reset();
  CHECK(env.arrival_time(s, 0, 1) == doctest::Approx(5.0));

  env.step(s, {0, 1});  // wait until 100, serve
  CHECK(s.vehicles[0].time == doctest::Approx(100.0));
  CHECK(env.arrival_time(s, 0, 0) == doctest::Approx(115.0));

  // degenerate case: an idle vehicle at the depot "arrives" at its own clock
  State fresh = env.reset();
  CHECK(env.arrival_time(fresh, 0, 0) == doctest::Approx(fresh.vehicles[0].time));
}

TEST_CASE("step waits under TW1 and records the deviation under TW3") {
  SUBCASE("TW1 waits to the window start") {
    Instance inst = triangle_plus(100, 1000);
    Env env(inst, Variant::make(VariantKind::TW1), EnvConfig::defaults(VariantKind::TW1, 1));
    State s = env.reset();
    StepEvents ev = env.step(s, {0, 1});
    CHECK(ev.arrival == doctest::Approx(5.0));
    CHECK(ev.service_start == doctest::Approx(100.0));
    CHECK(ev.wait == doctest::Approx(95.0));
    CHECK(ev.early_dev == doctest::Approx(95.0));  // measured at arrival
  }
  SUBCASE("TW3 serves on arrival and pays the deviation") {
    Instance inst = triangle_plus(100, 1000);
    Env env(inst, Variant::make(VariantKind::TW3), EnvConfig::defaults(VariantKind::TW3, 1));
    State s = env.reset();
    StepEvents ev = env.step(s, {0, 1});
    CHECK(ev.service_start == doctest::Approx(5.0));
    CHECK(ev.early_dev == doctest::Approx(95.0));
    CHECK(s.vehicles[0].time == doctest::Approx(5.0));
  }
}

TEST_CASE("feasibility mask follows capacity and window rules") {
  SUBCASE("fresh state leaves every customer open") {
    Instance inst = generate_cvrptw(20, 11);
    EnvConfig cfg = EnvConfig::defaults(VariantKind::TW1, inst.n());
    cfg.m_con = 3;
    Env env(inst, Variant::make(VariantKind::TW1), cfg);
    State s = env.reset();
    auto mask = env.feasible_mask(s);
    for (int slot = 0; slot < 3; ++slot) {
      CHECK_FALSE(mask[flat_index(slot, 0, env.n_nodes())]);  // empty tours cannot return
      for (int i = 1; i <= 20; ++i) CHECK(mask[flat_index(slot, i, env.n_nodes())]);
    }
  }

  SUBCASE("capacity masks out an oversized customer") {
    Instance inst;
    inst.nodes.push_back(node(0, 0, 0, 0, 0, 1000, 0));
    inst.nodes.push_back(node(1, 1, 0, 100, 0, 1000, 0));   // 0.2 of capacity
    inst.nodes.push_back(node(2, 2, 0, 450, 0, 1000, 0));   // 0.9 of capacity
    inst.capacity = 500;
    Env env(inst, Variant::make(VariantKind::TW2), EnvConfig::defaults(VariantKind::TW2, 2));
    State s = env.reset();
    env.step(s, {0, 1});  // load now 0.2
    CHECK_FALSE(env.customer_feasible(s, 0, 2));
  }

  SUBCASE("hard versus soft upper bounds") {
    Instance inst;
    inst.nodes.push_back(node(0, 0, 0, 0, 0, 10000, 0));
    inst.nodes.push_back(node(1, 501, 0, 10, 0, 500, 0));
    inst.capacity = 500;
    Env hard(inst, Variant::make(VariantKind::TW1), EnvConfig::defaults(VariantKind::TW1, 1));
    State sh = hard.reset();
    CHECK_FALSE(hard.customer_feasible(sh, 0, 1));  // arrival 501 > 500
    CHECK_THROWS_AS(hard.feasible_mask(sh), infeasible_state_error);

    Env soft(inst, Variant::make(VariantKind::TW2), EnvConfig::defaults(VariantKind::TW2, 1));
    State ss = soft.reset();
    CHECK(soft.customer_feasible(ss, 0, 1));
  }

  SUBCASE("infeasible actions are contract violations") {
    Instance inst = generate_cvrptw(20, 3);
    Env env(inst, Variant::make(VariantKind::TW1), EnvConfig::defaults(VariantKind::TW1, 20));
    State s = env.reset();
    CHECK_THROWS_AS(env.step(s, {0, 0}), infeasible_action_error);  // empty tour
    env.step(s, {0, 1});
    CHECK_THROWS_AS(env.step(s, {0, 1}), infeasible_action_error);  // already visited
  }
}

TEST_CASE("premature returns consume the budget and activate the next vehicle") {
  Instance inst = generate_cvrptw(20, 21);
  EnvConfig cfg = EnvConfig::defaults(VariantKind::TW1, inst.n());
  cfg.m_con = 2;
  Env env(inst, Variant::make(VariantKind::TW1), cfg);
  State s = env.reset();
  env.step(s, {0, 1});
  CHECK(s.premature_budget == 6);
  StepEvents ev = env.step(s, {0, 0});
  CHECK(ev.premature);
  CHECK(s.premature_budget == 5);
  CHECK_FALSE(s.vehicles[0].active);
  CHECK(ev.activated == 2);
  CHECK(s.active_set == std::vector<int>{1, 2});
}

TEST_CASE("cost breakdown on hand-checked tours") {
  SUBCASE("single TW1 tour with open windows") {
    Instance inst = triangle_instance(0, 1000);
    Solution sol;
    sol.tours.push_back({1});
    CostBreakdown cb = cost(inst, sol, Variant::make(VariantKind::TW1));
    CHECK(cb.total == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(cb.k == 1);
    CHECK(cb.distance == doctest::Approx(10.0));
    CHECK(cb.service == doctest::Approx(10.0));
    CHECK(cb.wait == 0.0);
  }

  SUBCASE("soft late arrival pays beta lambda") {
    Instance inst = triangle_instance(0, 3);
    Solution sol;
    sol.tours.push_back({1});
    CostBreakdown cb = cost(inst, sol, Variant::make(VariantKind::TW2));
    CHECK(cb.late_pen == doctest::Approx(1.0));  // 0.5 * (5 - 3)
    CHECK(cb.total == doctest::Approx(21.0));
  }

  SUBCASE("waiting is priced through alpha") {
    Instance inst = triangle_instance(100, 1000);
    Solution sol;
    sol.tours.push_back({1});
    CostBreakdown cb = cost(inst, sol, Variant::make(VariantKind::TW1));
    CHECK(cb.wait == doctest::Approx(95.0));
    CHECK(cb.early_pen == doctest::Approx(95.0));  // alpha = 1
    CHECK(cb.total == doctest::Approx(115.0));

    Variant tw2 = Variant::make(VariantKind::TW2);  // alpha = 0: waiting free
    CHECK(cost(inst, sol, tw2).total == doctest::Approx(20.0));

    Variant nowait = Variant::make(VariantKind::TW1);
    nowait.cost_includes_wait = false;
    CHECK(cost(inst, sol, nowait).total == doctest::Approx(20.0));
  }

  SUBCASE("TW1 rejects late arrivals outright") {
    Instance inst = triangle_instance(0, 3);
    Solution sol;
    sol.tours.push_back({1});
    CHECK_THROWS_AS(cost(inst, sol, Variant::make(VariantKind::TW1)), infeasible_solution_error);
  }

  SUBCASE("empty solution on a zero-customer instance") {
    Instance inst;
    inst.nodes.push_back(node(0, 5, 5, 0, 0, 1000, 0));
    inst.capacity = 500;
    CHECK(cost(inst, Solution{}, Variant::make(VariantKind::TW1)).total == 0.0);
    Env env(inst, Variant::make(VariantKind::TW1), EnvConfig::defaults(VariantKind::TW1, 0));
    State s = env.reset();
    CHECK(s.finished());
  }

  SUBCASE("CVRP cost is the plain distance") {
    Instance inst = triangle_instance();
    inst.variant_hint = VariantHint::CVRP;
    Solution sol;
    sol.tours.push_back({1});
    CostBreakdown cb = cost(inst, sol, Variant::make(VariantKind::CVRP));
    CHECK(cb.total == doctest::Approx(10.0));
  }
}

TEST_CASE("validator flags the classic violations") {
  Instance inst = generate_cvrptw(10, 17, GenParams{1000, 10, 500.0});
  Variant v = Variant::make(VariantKind::TW2);

  Solution dup;
  dup.tours.push_back({1, 2, 3});
  dup.tours.push_back({3, 4, 5, 6, 7, 8, 9, 10});
  ValidationReport rep = validate(inst, dup, v);
  bool saw_dup = false;
  for (auto& viol : rep.violations) saw_dup = saw_dup || viol.kind == "condition (2)";
  CHECK(saw_dup);

  Solution missing;
  missing.tours.push_back({1, 2});
  rep = validate(inst, missing, v);
  bool saw_cov = false;
  for (auto& viol : rep.violations) saw_cov = saw_cov || viol.kind == "condition (1)";
  CHECK(saw_cov);

  Instance small;
  small.nodes.push_back(node(0, 0, 0, 0, 0, 1000, 0));
  small.nodes.push_back(node(1, 1, 0, 300, 0, 1000, 10));
  small.nodes.push_back(node(2, 2, 0, 300, 0, 1000, 10));
  small.capacity = 500;
  Solution heavy;
  heavy.tours.push_back({1, 2});  // 1.2 of capacity
  rep = validate(small, heavy, v);
  bool saw_cap = false;
  for (auto& viol : rep.violations) saw_cap = saw_cap || viol.kind == "condition (3)";
  CHECK(saw_cap);
}

TEST_CASE("phi is the row-major inverse of the flat index") {
  CHECK(phi(0, 21, 2) == std::pair<int, int>{0, 0});
  CHECK(phi(25, 21, 2) == std::pair<int, int>{1, 4});
  CHECK_THROWS_AS(phi(42, 21, 2), std::out_of_range);
  for (int n_nodes = 2; n_nodes <= 16; ++n_nodes)
    for (int m_con = 1; m_con <= 4; ++m_con)
      for (int m = 0; m < m_con * n_nodes; ++m) {
        auto [slot, nd] = phi(m, n_nodes, m_con);
        CHECK(flat_index(slot, nd, n_nodes) == m);
      }
}

TEST_CASE("masking soundness: random rollouts always validate") {
  std::mt19937 gen(2024);
  for (VariantKind kind :
       {VariantKind::CVRP, VariantKind::TW1, VariantKind::TW2, VariantKind::TW3}) {
    Variant v = Variant::make(kind);
    for (int trial = 0; trial < 40; ++trial) {
      Instance inst = kind == VariantKind::CVRP
                          ? generate_cvrp(20, Rng::derive(900 + (int)kind, trial))
                          : generate_cvrptw(20, Rng::derive(900 + (int)kind, trial));
      EnvConfig cfg = EnvConfig::defaults(kind, inst.n());
      cfg.m_con = 1 + trial % 4;
      Env env(inst, v, cfg);
      State s = random_mask_rollout(env, gen);
      Solution sol = env.solution(s);
      ValidationReport rep = validate(inst, sol, v);
      if (!rep.ok()) {
        for (auto& viol : rep.violations)
          MESSAGE(viol.kind, " tour=", viol.tour, " ", viol.detail);
      }
      CHECK(rep.ok());
      CHECK(s.premature_budget >= 0);

      // incremental accounting equals the from-scratch recomputation
      CostBreakdown inc = env.incremental_cost(s);
      CostBreakdown rec = cost(inst, sol, v);
      CHECK(inc.total == doctest::Approx(rec.total).epsilon(1e-9));
      CHECK(inc.distance == doctest::Approx(rec.distance).epsilon(1e-9));
      CHECK(inc.duration == doctest::Approx(rec.duration).epsilon(1e-9));
    }
  }
}

TEST_CASE("conservation of demand through a rollout") {
  std::mt19937 gen(7);
  Instance inst = generate_cvrptw(20, 77);
  Env env(inst, Variant::make(VariantKind::TW1),
          [&] {
            EnvConfig c = EnvConfig::defaults(VariantKind::TW1, inst.n());
            c.m_con = 3;
            return c;
          }());
  State s = env.reset();
  double q_total = total_demand(inst);
  while (!s.done) {
    double held = 0;
    for (auto& veh : s.vehicles) held += veh.load * inst.capacity;
    double open = 0;
    for (int i = 1; i <= inst.n(); ++i)
      if (!s.visited[i]) open += inst.nodes[i].demand;
    CHECK(held + open == doctest::Approx(q_total).epsilon(1e-9));

    auto mask = env.feasible_mask(s);
    std::vector<int> idx;
    for (size_t m = 0; m < mask.size(); ++m)
      if (mask[m]) idx.push_back(static_cast<int>(m));
    std::uniform_int_distribution<size_t> pick(0, idx.size() - 1);
    env.step(s, phi_action(s, idx[pick(gen)]));
  }
}

TEST_CASE("tour plan mirrors the vehicle tours, zero padded") {
  std::mt19937 gen(8);
  Instance inst = generate_cvrptw(20, 42);
  EnvConfig cfg = EnvConfig::defaults(VariantKind::TW1, inst.n());
  cfg.m_con = 2;
  Env env(inst, Variant::make(VariantKind::TW1), cfg);
  State s = random_mask_rollout(env, gen);
  auto plan = s.tour_plan();
  CHECK(plan.size() == s.vehicles.size());
  for (size_t k = 0; k < plan.size(); ++k) {
    CHECK(plan[k].size() == 20);
    for (size_t t = 0; t < plan[k].size(); ++t) {
      int expect = t < s.vehicles[k].tour.size() ? s.vehicles[k].tour[t] : 0;
      CHECK(plan[k][t] == expect);
    }
  }
}

TEST_CASE("cost agrees with the independent simulator") {
  std::mt19937 gen(99);
  int infeasible_hits = 0;
  for (int trial = 0; trial < 60; ++trial) {
    int n = 3 + trial % 5;  // N <= 7
    Instance inst = generate_cvrptw(n, Rng::derive(4000, trial), GenParams{1000, 10, 500.0});
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 1);
    std::shuffle(perm.begin(), perm.end(), gen);
    Solution sol;
    size_t at = 0;
    while (at < perm.size()) {
      std::uniform_int_distribution<size_t> len(1, perm.size() - at);
      size_t take = len(gen);
      sol.tours.emplace_back(perm.begin() + at, perm.begin() + at + take);
      at += take;
    }
    for (VariantKind kind : {VariantKind::TW1, VariantKind::TW2, VariantKind::TW3}) {
      Variant v = Variant::make(kind);
      auto expected = oracle::total_cost(inst, sol.tours, v);
      if (!expected) {
        ++infeasible_hits;
        CHECK_THROWS_AS(cost(inst, sol, v), infeasible_solution_error);
      } else {
        CHECK(cost(inst, sol, v).total == doctest::Approx(*expected).epsilon(1e-9));
      }
    }
    Instance cv = generate_cvrp(20, Rng::derive(4001, trial));
    std::vector<int> cperm(20);
    std::iota(cperm.begin(), cperm.end(), 1);
    std::shuffle(cperm.begin(), cperm.end(), gen);
    Solution csol;
    csol.tours.push_back(std::vector<int>(cperm.begin(), cperm.begin() + 10));
    csol.tours.push_back(std::vector<int>(cperm.begin() + 10, cperm.end()));
    Variant cvv = Variant::make(VariantKind::CVRP);
    CHECK(cost(cv, csol, cvv).total == doctest::Approx(*oracle::total_cost(cv, csol.tours, cvv))
                                           .epsilon(1e-9));
  }
  CHECK(infeasible_hits > 0);  // the shuffled tours should hit hard windows sometimes
}

TEST_CASE("feasibility mask agrees with the independent simulator") {
  std::mt19937 gen(123);
  int probes = 0;
  for (int trial = 0; trial < 25; ++trial) {
    int n = 4 + trial % 4;  // N <= 7
    for (VariantKind kind :
         {VariantKind::CVRP, VariantKind::TW1, VariantKind::TW2, VariantKind::TW3}) {
      Instance inst = kind == VariantKind::CVRP
                          ? generate_cvrp(n, Rng::derive(5000, trial), 12.0)
                          : generate_cvrptw(n, Rng::derive(5001, trial), GenParams{1000, 10, 60.0});
      Variant v = Variant::make(kind);
      EnvConfig cfg = EnvConfig::defaults(kind, n);
      cfg.m_con = 2;
      Env env(inst, v, cfg);
      State s = env.reset();
      std::vector<bool> visited(n + 1, false);
      while (!s.done) {
        auto mask = env.feasible_mask(s);
        for (int slot = 0; slot < cfg.m_con; ++slot) {
          int k = s.active_set[slot];
          for (int i = 0; i < env.n_nodes(); ++i) {
            bool got = mask[flat_index(slot, i, env.n_nodes())];
            if (k == kNoVehicle) {
              CHECK_FALSE(got);
              continue;
            }
            ++probes;
            if (i == 0) {
              bool any = false;
              for (int c = 1; c <= n; ++c)
                any = any ||
                      oracle::extend_feasible(inst, s.vehicles[k].tour, visited, c, v);
              bool want = !s.vehicles[k].tour.empty() && (s.premature_budget > 0 || !any);
              CHECK(got == want);
            } else {
              bool want = oracle::extend_feasible(inst, s.vehicles[k].tour, visited, i, v);
              CHECK(got == want);
            }
          }
        }
        std::vector<int> idx;
        for (size_t m = 0; m < mask.size(); ++m)
          if (mask[m]) idx.push_back(static_cast<int>(m));
        std::uniform_int_distribution<size_t> pick(0, idx.size() - 1);
        Action a = phi_action(s, idx[pick(gen)]);
        if (a.node > 0) visited[a.node] = true;
        env.step(s, a);
      }
    }
  }
  CHECK(probes > 1000);
}

TEST_CASE("appending a customer never shortens a tour") {
  std::mt19937 gen(31);
  Variant v = Variant::make(VariantKind::TW2);
  for (int trial = 0; trial < 50; ++trial) {
    Instance inst = generate_cvrptw(10, Rng::derive(6000, trial), GenParams{1000, 10, 10000.0});
    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 1);
    std::shuffle(perm.begin(), perm.end(), gen);
    std::uniform_int_distribution<size_t> len(1, 9);
    size_t take = len(gen);
    Solution base, ext;
    base.tours.push_back(std::vector<int>(perm.begin(), perm.begin() + take));
    ext.tours.push_back(std::vector<int>(perm.begin(), perm.begin() + take + 1));
    CHECK(cost(inst, ext, v).tours[0].duration >=
          cost(inst, base, v).tours[0].duration - 1e-12);
  }
}

TEST_CASE("random policy produces valid solutions and nested best-of-n") {
  Instance inst = generate_cvrptw(20, 404);
  Variant v = Variant::make(VariantKind::TW1);
  RandomSolveResult r1 = random_solve(inst, v, 1, 31337);
  RandomSolveResult r10 = random_solve(inst, v, 10, 31337);
  RandomSolveResult r100 = random_solve(inst, v, 100, 31337);
  CHECK(r10.cost.total <= r1.cost.total);
  CHECK(r100.cost.total <= r10.cost.total);
  CHECK(validate(inst, r100.best, v).ok());

  // one-customer instance has a single possible solution
  Instance one = generate_cvrptw(1, 5, GenParams{1000, 10, 500.0});
  RandomSolveResult rone = random_solve(one, v, 3, 1);
  CHECK(rone.best.tours == std::vector<std::vector<int>>{{1}});
}
