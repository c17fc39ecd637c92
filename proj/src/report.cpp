#include "jampr/report.hpp"

#include <charconv>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace jampr {

namespace {

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

double to_real(const std::string& tok) {
  double v;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw std::runtime_error("report: bad numeric cell '" + tok + "'");
  return v;
}

}  // namespace

EvalAggregates EvalReport::aggregates() const {
  EvalAggregates agg;
  agg.count = static_cast<int>(rows.size());
  if (rows.empty()) return agg;
  for (const EvalRow& r : rows) {
    agg.mean_cost += r.cost;
    agg.mean_k += r.k;
    agg.mean_distance += r.distance;
    agg.mean_duration += r.duration;
    agg.mean_seconds += r.seconds;
  }
  agg.mean_cost /= agg.count;
  agg.mean_k /= agg.count;
  agg.mean_distance /= agg.count;
  agg.mean_duration /= agg.count;
  agg.mean_seconds /= agg.count;
  if (rows.size() > 1) {
    double ss = 0;
    for (const EvalRow& r : rows) ss += (r.cost - agg.mean_cost) * (r.cost - agg.mean_cost);
    agg.std_cost = std::sqrt(ss / (agg.count - 1));
  }
  return agg;
}

void EvalReport::write_csv(std::ostream& out) const {
  out << "# policy " << policy << "\n";
  out << "# mode " << mode << "\n";
  out << "# variant " << variant << "\n";
  out << "# m_con " << m_con << "\n";
  out << "# n_samples " << n_samples << "\n";
  out << "# seed " << seed << "\n";
  out << "instance,cost,k,distance,duration,early_pen,late_pen,seconds\n";
  for (const EvalRow& r : rows) {
    out << r.instance << ',' << fmt(r.cost) << ',' << r.k << ',' << fmt(r.distance) << ','
        << fmt(r.duration) << ',' << fmt(r.early_pen) << ',' << fmt(r.late_pen) << ','
        << fmt(r.seconds) << "\n";
  }
}

EvalReport EvalReport::read_csv(std::istream& in) {
  EvalReport rep;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream iss(line.substr(1));
      std::string key, value;
      iss >> key;
      std::getline(iss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      if (key == "policy") rep.policy = value;
      else if (key == "mode") rep.mode = value;
      else if (key == "variant") rep.variant = value;
      else if (key == "m_con") rep.m_con = std::stoi(value);
      else if (key == "n_samples") rep.n_samples = std::stoi(value);
      else if (key == "seed") rep.seed = std::stoull(value);
      continue;
    }
    if (!header_seen) {
      if (line.rfind("instance,", 0) != 0)
        throw std::runtime_error("report: missing CSV header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> cells;
    std::istringstream iss(line);
    std::string cell;
    while (std::getline(iss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw std::runtime_error("report: expected 8 cells per row");
    EvalRow r;
    r.instance = cells[0];
    r.cost = to_real(cells[1]);
    r.k = static_cast<int>(to_real(cells[2]));
    r.distance = to_real(cells[3]);
    r.duration = to_real(cells[4]);
    r.early_pen = to_real(cells[5]);
    r.late_pen = to_real(cells[6]);
    r.seconds = to_real(cells[7]);
    rep.rows.push_back(r);
  }
  return rep;
}

std::string format_eval_table(const EvalReport& rep) {
  EvalAggregates agg = rep.aggregates();
  std::ostringstream out;
  out << std::fixed << std::setprecision(2);
  out << "policy=" << rep.policy << " mode=" << rep.mode << " variant=" << rep.variant
      << " instances=" << agg.count << "\n";
  out << "  cost " << agg.mean_cost << " (+/- " << agg.std_cost << ")"
      << "  k " << agg.mean_k << "  dist " << agg.mean_distance << "  dur "
      << agg.mean_duration << std::setprecision(3) << "  t_inf " << agg.mean_seconds << "s\n";
  return out.str();
}

}  // namespace jampr
