#include "jampr/instance.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "jampr/rng.hpp"

namespace jampr {

double Instance::dist(int i, int j) const {
  double dx = nodes[i].x - nodes[j].x;
  double dy = nodes[i].y - nodes[j].y;
  return std::sqrt(dx * dx + dy * dy);
}

void Instance::check() const {
  if (nodes.empty() || nodes[0].id != 0)
    throw std::invalid_argument("instance: missing depot node");
  if (capacity <= 0) throw std::invalid_argument("instance: capacity must be positive");
  if (nodes[0].demand != 0 || nodes[0].service != 0)
    throw std::invalid_argument("instance: depot must have zero demand and service");
  for (size_t i = 0; i < nodes.size(); ++i) {
    const Node& nd = nodes[i];
    if (nd.id != static_cast<int>(i))
      throw std::invalid_argument("instance: node ids must be contiguous from 0");
    if (nd.tw_start > nd.tw_end)
      throw std::invalid_argument("instance: window start exceeds end at node " + std::to_string(i));
    if (i > 0) {
      if (nd.demand <= 0)
        throw std::invalid_argument("instance: customer demand must be positive at node " + std::to_string(i));
      if (nd.demand > capacity)
        throw std::invalid_argument("instance: demand exceeds capacity at node " + std::to_string(i));
    }
  }
}

bool operator==(const Node& a, const Node& b) {
  return a.id == b.id && a.x == b.x && a.y == b.y && a.demand == b.demand &&
         a.tw_start == b.tw_start && a.tw_end == b.tw_end && a.service == b.service;
}

bool operator==(const Instance& a, const Instance& b) {
  return a.nodes == b.nodes && a.capacity == b.capacity &&
         a.variant_hint == b.variant_hint && a.seed == b.seed;
}

namespace {

double capacity_for_cvrptw(int n) {
  switch (n) {
    case 20: return 500;
    case 50: return 750;
    case 100: return 1000;
    default: return -1;
  }
}

double capacity_for_cvrp(int n) {
  switch (n) {
    case 20: return 30;
    case 50: return 40;
    default: return -1;
  }
}

}  // namespace

Instance generate_cvrptw(int n, uint64_t seed, const GenParams& params) {
  if (n < 1) throw std::invalid_argument("generate_cvrptw: n must be >= 1");
  double cap = params.capacity ? *params.capacity : capacity_for_cvrptw(n);
  if (cap <= 0)
    throw std::invalid_argument(
        "generate_cvrptw: no capacity known for n=" + std::to_string(n) +
        "; pass one explicitly");

  // Draw order per node is fixed (documented in the header of rng.hpp):
  // depot x, y; then per customer x, y, demand, window start, width noise.
  Rng rng(seed);
  Instance inst;
  inst.capacity = cap;
  inst.variant_hint = VariantHint::CVRPTW;
  inst.seed = seed;
  inst.nodes.resize(n + 1);

  Node& depot = inst.nodes[0];
  depot.id = 0;
  depot.x = rng.uniform(0.0, 100.0);
  depot.y = rng.uniform(0.0, 100.0);
  depot.tw_start = 0.0;
  depot.tw_end = params.horizon;

  for (int i = 1; i <= n; ++i) {
    Node& nd = inst.nodes[i];
    nd.id = i;
    nd.x = rng.uniform(0.0, 100.0);
    nd.y = rng.uniform(0.0, 100.0);
    nd.demand = std::min(42.0, std::max(1.0, std::floor(std::abs(rng.normal(15.0, 10.0)))));
    nd.service = params.service;

    double d0 = inst.dist(0, i);
    double hhat = std::ceil(d0) + 1.0;
    if (hhat > params.horizon - hhat)
      throw std::invalid_argument("generate_cvrptw: horizon too small for sampled customer");
    nd.tw_start = rng.uniform(hhat, params.horizon - hhat);
    double eps = std::max(std::abs(rng.normal()), 0.01);
    nd.tw_end = std::min(std::floor(nd.tw_start + 300.0 * eps), params.horizon - hhat);
  }
  inst.check();
  return inst;
}

Instance generate_cvrp(int n, uint64_t seed, std::optional<double> capacity) {
  if (n < 1) throw std::invalid_argument("generate_cvrp: n must be >= 1");
  double cap = capacity ? *capacity : capacity_for_cvrp(n);
  if (cap <= 0)
    throw std::invalid_argument(
        "generate_cvrp: no capacity known for n=" + std::to_string(n) +
        "; pass one explicitly");

  Rng rng(seed);
  Instance inst;
  inst.capacity = cap;
  inst.variant_hint = VariantHint::CVRP;
  inst.seed = seed;
  inst.nodes.resize(n + 1);

  Node& depot = inst.nodes[0];
  depot.id = 0;
  depot.x = rng.uniform();
  depot.y = rng.uniform();
  depot.tw_end = kOpenEnd;

  for (int i = 1; i <= n; ++i) {
    Node& nd = inst.nodes[i];
    nd.id = i;
    nd.x = rng.uniform();
    nd.y = rng.uniform();
    nd.demand = 1.0 + static_cast<double>(rng.below(9));
    nd.tw_start = 0.0;
    nd.tw_end = kOpenEnd;
    nd.service = 0.0;
  }
  inst.check();
  return inst;
}

// ---------------------------------------------------------------------------
// Solomon format
// ---------------------------------------------------------------------------

namespace {

struct LineReader {
  std::istream& in;
  int lineno = 0;
  bool next(std::string& out) {
    while (std::getline(in, out)) {
      ++lineno;
      if (!out.empty() && out.back() == '\r') out.pop_back();
      return true;
    }
    return false;
  }
};

[[noreturn]] void fail(int lineno, const std::string& what) {
  throw parse_error("solomon parse error at line " + std::to_string(lineno) + ": " + what);
}

bool blank(const std::string& s) {
  return s.find_first_not_of(" \t") == std::string::npos;
}

std::vector<double> numbers_of(const std::string& s) {
  std::vector<double> out;
  std::istringstream iss(s);
  std::string tok;
  while (iss >> tok) {
    double v;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) return {};
    out.push_back(v);
  }
  return out;
}

}  // namespace

Instance parse_solomon(std::istream& in, bool due_minus_service) {
  LineReader rd{in};
  std::string line;

  // Name line, then the VEHICLE section.
  if (!rd.next(line)) fail(rd.lineno, "empty file");
  while (blank(line)) {
    if (!rd.next(line)) fail(rd.lineno, "missing VEHICLE section");
  }
  while (line.find("VEHICLE") == std::string::npos) {
    if (!rd.next(line)) fail(rd.lineno, "missing VEHICLE section");
  }
  // Header row (NUMBER CAPACITY), then the values.
  double cap = -1;
  while (rd.next(line)) {
    if (blank(line)) continue;
    auto nums = numbers_of(line);
    if (nums.empty()) continue;  // column header
    if (nums.size() != 2) fail(rd.lineno, "expected '<count> <capacity>'");
    cap = nums[1];
    break;
  }
  if (cap <= 0) fail(rd.lineno, "missing or non-positive vehicle capacity");

  while (line.find("CUSTOMER") == std::string::npos) {
    if (!rd.next(line)) fail(rd.lineno, "missing CUSTOMER section");
  }

  std::map<int, Node> rows;
  while (rd.next(line)) {
    if (blank(line)) continue;
    auto nums = numbers_of(line);
    if (nums.empty()) {
      if (rows.empty()) continue;  // column header between CUSTOMER and data
      fail(rd.lineno, "non-numeric cell in customer table");
    }
    if (nums.size() != 7) fail(rd.lineno, "expected 7 columns in customer row");
    Node nd;
    nd.id = static_cast<int>(nums[0]);
    if (nd.id != nums[0] || nd.id < 0) fail(rd.lineno, "bad customer id");
    nd.x = nums[1];
    nd.y = nums[2];
    nd.demand = nums[3];
    nd.tw_start = nums[4];
    nd.service = nums[6];
    nd.tw_end = due_minus_service ? nums[5] - nd.service : nums[5];
    if (nd.tw_start > nd.tw_end) fail(rd.lineno, "window start exceeds end");
    if (!rows.emplace(nd.id, nd).second) fail(rd.lineno, "duplicate customer id");
  }
  if (!rows.count(0)) fail(rd.lineno, "missing depot row (CUST NO. 0)");

  Instance inst;
  inst.capacity = cap;
  inst.variant_hint = VariantHint::CVRPTW;
  inst.nodes.reserve(rows.size());
  int expect = 0;
  for (auto& [id, nd] : rows) {
    if (id != expect++) fail(rd.lineno, "customer ids are not contiguous");
    inst.nodes.push_back(nd);
  }
  inst.check();
  return inst;
}

Instance parse_solomon_file(const std::string& path, bool due_minus_service) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  return parse_solomon(in, due_minus_service);
}

Instance split_instance(const Instance& inst, Half half) {
  if (inst.n() != 100)
    throw std::invalid_argument("split_instance: expected a 100-customer instance");
  Instance out;
  out.capacity = inst.capacity;
  out.variant_hint = inst.variant_hint;
  out.seed = inst.seed;
  out.nodes.push_back(inst.nodes[0]);
  int first = half == Half::First ? 1 : 51;
  for (int i = first; i < first + 50; ++i) {
    Node nd = inst.nodes[i];
    nd.id = static_cast<int>(out.nodes.size());
    out.nodes.push_back(nd);
  }
  return out;
}

// ---------------------------------------------------------------------------
// VRPFILE v1
// ---------------------------------------------------------------------------

namespace {

std::string fmt_real(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

double parse_real(const std::string& tok, const char* what) {
  double v;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw parse_error(std::string("VRPFILE: bad ") + what + " value '" + tok + "'");
  return v;
}

}  // namespace

void save_instance(const Instance& inst, std::ostream& out) {
  out << "VRPFILE v1\n";
  out << "N " << inst.n() << "\n";
  out << "Q " << fmt_real(inst.capacity) << "\n";
  out << "VARIANT " << (inst.variant_hint == VariantHint::CVRP ? "CVRP" : "CVRPTW") << "\n";
  out << "SEED " << inst.seed << "\n";
  for (const Node& nd : inst.nodes) {
    out << "NODE " << nd.id << ' ' << fmt_real(nd.x) << ' ' << fmt_real(nd.y) << ' '
        << fmt_real(nd.demand) << ' ' << fmt_real(nd.tw_start) << ' ' << fmt_real(nd.tw_end)
        << ' ' << fmt_real(nd.service) << "\n";
  }
}

Instance load_instance(std::istream& in) {
  std::string line;
  auto need_line = [&](const char* what) {
    if (!std::getline(in, line)) throw parse_error(std::string("VRPFILE: truncated before ") + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
  };
  need_line("header");
  if (line != "VRPFILE v1") throw parse_error("VRPFILE: unsupported header '" + line + "'");

  Instance inst;
  int n = -1;
  bool have_q = false, have_variant = false;
  std::vector<std::string> toks;
  auto split_line = [&]() {
    toks.clear();
    std::istringstream iss(line);
    std::string t;
    while (iss >> t) toks.push_back(t);
  };

  while (true) {
    need_line("node list");
    split_line();
    if (toks.empty()) continue;
    if (toks[0] == "N" && toks.size() == 2) {
      n = static_cast<int>(parse_real(toks[1], "N"));
    } else if (toks[0] == "Q" && toks.size() == 2) {
      inst.capacity = parse_real(toks[1], "Q");
      have_q = true;
    } else if (toks[0] == "VARIANT" && toks.size() == 2) {
      if (toks[1] == "CVRP") inst.variant_hint = VariantHint::CVRP;
      else if (toks[1] == "CVRPTW") inst.variant_hint = VariantHint::CVRPTW;
      else throw parse_error("VRPFILE: unknown variant '" + toks[1] + "'");
      have_variant = true;
    } else if (toks[0] == "SEED" && toks.size() == 2) {
      inst.seed = std::stoull(toks[1]);
    } else if (toks[0] == "NODE") {
      break;
    } else {
      throw parse_error("VRPFILE: unexpected line '" + line + "'");
    }
  }
  if (n < 0 || !have_q || !have_variant)
    throw parse_error("VRPFILE: missing N, Q or VARIANT before nodes");

  inst.nodes.reserve(n + 1);
  for (int i = 0; i <= n; ++i) {
    if (i > 0) {
      need_line("node");
      split_line();
    }
    if (toks.size() != 8 || toks[0] != "NODE")
      throw parse_error("VRPFILE: expected 'NODE <id> <x> <y> <demand> <a> <b> <service>'");
    Node nd;
    nd.id = static_cast<int>(parse_real(toks[1], "id"));
    if (nd.id != i) throw parse_error("VRPFILE: node ids must run 0.." + std::to_string(n));
    nd.x = parse_real(toks[2], "x");
    nd.y = parse_real(toks[3], "y");
    nd.demand = parse_real(toks[4], "demand");
    nd.tw_start = parse_real(toks[5], "a");
    nd.tw_end = parse_real(toks[6], "b");
    nd.service = parse_real(toks[7], "service");
    inst.nodes.push_back(nd);
  }
  inst.check();
  return inst;
}

void save_instance_file(const Instance& inst, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot open " + path + " for writing");
  save_instance(inst, out);
}

Instance load_instance_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + path);
  return load_instance(in);
}

}  // namespace jampr
