#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>

namespace jampr {

inline const char* to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::JAMPR: return "JAMPR";
    case PolicyKind::AM: return "AM";
    case PolicyKind::AMTW: return "AMTW";
  }
  return "?";
}

inline PolicyKind policy_kind_from(const std::string& s) {
  if (s == "JAMPR" || s == "jampr") return PolicyKind::JAMPR;
  if (s == "AM" || s == "am") return PolicyKind::AM;
  if (s == "AMTW" || s == "amtw" || s == "am+tw") return PolicyKind::AMTW;
  throw std::invalid_argument("unknown policy '" + s + "'");
}

inline void ModelConfig::check() const {
  if (d_emb < 2 || d_emb % 2) throw std::invalid_argument("model: d_emb must be even");
  if (d_emb % heads) throw std::invalid_argument("model: heads must divide d_emb");
  if (d_dec % heads) throw std::invalid_argument("model: heads must divide d_dec");
  if (n_blocks < 1 || tour_layers < 1) throw std::invalid_argument("model: bad layer counts");
  if (m_con < 1) throw std::invalid_argument("model: m_con must be >= 1");
  if (!joint() && m_con != 1)
    throw std::invalid_argument("model: sequential policies use m_con = 1");
}

inline ModelConfig ModelConfig::tiny(PolicyKind p, VariantKind v, int m_con) {
  ModelConfig cfg;
  cfg.policy = p;
  cfg.variant = v;
  cfg.d_emb = 32;
  cfg.heads = 4;
  cfg.enc_hidden = 32;
  cfg.d_dec = 64;
  cfg.m_con = m_con;
  return cfg;
}

inline Normalizer Normalizer::from(const Instance& inst) {
  Normalizer nz;
  nz.coord = inst.variant_hint == VariantHint::CVRPTW ? 100.0 : 1.0;
  nz.time = inst.horizon() > 0 ? inst.horizon() : 1.0;
  nz.demand = inst.capacity;
  return nz;
}

template <class T>
Policy<T>::Policy(ModelConfig config, uint64_t init_seed) : cfg(config) {
  cfg.check();
  Rng rng(init_seed);

  w_in = params.add("enc.in.w", cfg.d_emb, cfg.node_features());
  b_in = params.add("enc.in.b", 1, cfg.d_emb);
  nn::init_uniform(*w_in, rng);
  nn::init_uniform(*b_in, rng);
  for (int b = 0; b < cfg.n_blocks; ++b)
    blocks.push_back(
        nn::SaBlock<T>::create(params, "enc.sa" + std::to_string(b), cfg.d_emb, cfg.heads, rng));

  if (cfg.joint()) {
    g_v = nn::Mlp<T>::create(params, "veh", 5, cfg.enc_hidden, cfg.veh_half(),
                             cfg.resolved_veh_layers(), rng);
    g_s = nn::Mlp<T>::create(params, "tour", cfg.d_emb, cfg.enc_hidden, cfg.veh_half(),
                             cfg.tour_layers, rng);
    ga_w1 = params.add("act.w1", cfg.d_emb, cfg.d_emb);
    ga_w2 = params.add("act.w2", cfg.d_emb, cfg.d_emb);
    ga_w3 = params.add("act.w3", cfg.d_emb, cfg.d_emb + 1);
    nn::init_uniform(*ga_w1, rng);
    nn::init_uniform(*ga_w2, rng);
    nn::init_uniform(*ga_w3, rng);
  }

  decoder = nn::CrossMha<T>::create(params, "dec", cfg.d_context(), cfg.d_emb, cfg.d_dec,
                                    cfg.d_emb, cfg.heads, rng);
}

template <class T>
std::vector<const nn::BnLayer<T>*> Policy<T>::bn_layers() const {
  std::vector<const nn::BnLayer<T>*> out;
  for (const auto& blk : blocks) {
    out.push_back(&blk.bn1);
    out.push_back(&blk.bn2);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

template <class T>
struct PolicyRunner<T>::LaneCache {
  nn::VarId nodes = nn::kNoVar;     // this lane's node embeddings [N+1, d]
  nn::VarId w1_nodes = nn::kNoVar;  // static W1 projection of the nodes
  nn::VarId zero_half = nn::kNoVar;
  nn::VarId zero_rows = nn::kNoVar;
  std::vector<nn::VarId> veh;       // per-vehicle embedding, kNoVar when stale
  std::vector<nn::VarId> tour_sum;  // per-vehicle sum of g_s(node embeddings)
  std::vector<nn::VarId> m_rows;    // per-vehicle action rows
};

template <class T>
PolicyRunner<T>::PolicyRunner(nn::Graph<T>& graph, const Policy<T>& policy,
                              const std::vector<const Instance*>& batch, bool bn_train)
    : g_(graph), policy_(policy), train_(bn_train) {
  if (batch.empty()) throw std::invalid_argument("runner: empty batch");
  n_nodes_ = batch[0]->n() + 1;
  for (const Instance* inst : batch)
    if (inst->n() + 1 != n_nodes_)
      throw std::invalid_argument("runner: mixed instance sizes in one batch");

  int F = policy_.cfg.node_features();
  nn::Tensor<T> X(static_cast<int>(batch.size()) * n_nodes_, F);
  for (size_t b = 0; b < batch.size(); ++b) {
    const Instance& inst = *batch[b];
    Normalizer nz = Normalizer::from(inst);
    for (int i = 0; i < n_nodes_; ++i) {
      const Node& nd = inst.nodes[i];
      int r = static_cast<int>(b) * n_nodes_ + i;
      X.at(r, 0) = static_cast<T>(nd.x / nz.coord);
      X.at(r, 1) = static_cast<T>(nd.y / nz.coord);
      X.at(r, 2) = static_cast<T>(nd.demand / nz.demand);
      if (F == 5) {
        X.at(r, 3) = static_cast<T>(nd.tw_start / nz.time);
        X.at(r, 4) = static_cast<T>(nd.tw_end / nz.time);
      }
    }
  }

  nn::VarId z = g_.add_rowvec(g_.linear(g_.input(std::move(X)), g_.param(policy_.w_in)),
                              g_.param(policy_.b_in));
  for (const auto& blk : policy_.blocks) z = blk.apply(g_, z, n_nodes_, train_);

  for (size_t b = 0; b < batch.size(); ++b) {
    std::vector<int> rows(n_nodes_);
    for (int i = 0; i < n_nodes_; ++i) rows[i] = static_cast<int>(b) * n_nodes_ + i;
    inst_nodes_.push_back(g_.gather_rows(z, rows));
    inst_graph_.push_back(g_.mean_rows(inst_nodes_.back()));
  }
}

template <class T>
nn::VarId PolicyRunner<T>::vehicle_embedding(LaneCache& lc, const Env& env, const State& s,
                                             int k, bool recompute) {
  if (!recompute && lc.veh[k] != nn::kNoVar) return lc.veh[k];

  const VehicleState& v = s.vehicles[k];
  std::array<double, 5> raw = vehicle_features(env, s, k);
  nn::Tensor<T> feats(1, 5);
  for (int c = 0; c < 5; ++c) feats.at(0, c) = static_cast<T>(raw[c]);
  nn::VarId gv = policy_.g_v.apply(g_, g_.input(std::move(feats)));

  nn::VarId ts;
  if (recompute) {
    ts = lc.zero_half;
    for (int node : v.tour)
      ts = g_.add(ts, policy_.g_s.apply(g_, g_.gather_rows(lc.nodes, {node})));
  } else {
    ts = lc.tour_sum[k];
  }
  nn::VarId tour_part = g_.scale(ts, static_cast<T>(1.0 / env.max_tour_len()));
  nn::VarId emb = g_.concat_cols({gv, tour_part});
  if (!recompute) lc.veh[k] = emb;
  return emb;
}

template <class T>
nn::VarId PolicyRunner<T>::action_rows(LaneCache& lc, const Env& env, const State& s, int slot,
                                       bool recompute) {
  int k = s.active_set[slot];
  if (k == kNoVehicle) return lc.zero_rows;
  if (!recompute && lc.m_rows[k] != nn::kNoVar) return lc.m_rows[k];

  nn::VarId veh = vehicle_embedding(lc, env, s, k, recompute);
  nn::VarId proj_v = g_.linear(veh, g_.param(policy_.ga_w2));
  nn::VarId had = g_.mul_rowvec(lc.nodes, veh);
  nn::VarId dots = g_.matmul_nt(lc.nodes, veh);
  nn::VarId inter = g_.linear(g_.concat_cols({had, dots}), g_.param(policy_.ga_w3));
  nn::VarId rows = g_.add(g_.add_rowvec(lc.w1_nodes, proj_v), inter);
  if (!recompute) lc.m_rows[k] = rows;
  return rows;
}

template <class T>
RolloutResult PolicyRunner<T>::run(int lane, const Env& env, DecodeMode mode, Rng* rng,
                                   const std::vector<int>* replay, bool audit_cache,
                                   double* max_cache_dev) {
  if (env.instance().n() + 1 != n_nodes_)
    throw std::invalid_argument("runner: env does not match the encoded batch");
  if (mode == DecodeMode::Sample && !rng && !replay)
    throw std::invalid_argument("runner: sampling needs an rng");
  bool joint = policy_.cfg.joint();
  if (!joint && env.config().m_con != 1)
    throw std::invalid_argument("runner: sequential policy needs m_con = 1");

  nn::VarId nodes = inst_nodes_[lane];
  nn::VarId graph_emb = inst_graph_[lane];
  int K = env.fleet_size();
  int m_con = env.config().m_con;

  LaneCache lc;
  lc.nodes = nodes;
  if (joint) {
    lc.veh.assign(K, nn::kNoVar);
    lc.m_rows.assign(K, nn::kNoVar);
    lc.zero_half = g_.input(nn::Tensor<T>(1, policy_.cfg.veh_half()));
    lc.zero_rows = g_.input(nn::Tensor<T>(n_nodes_, policy_.cfg.d_emb));
    lc.tour_sum.assign(K, lc.zero_half);
    lc.w1_nodes = g_.linear(nodes, g_.param(policy_.ga_w1));
  }

  State s = env.reset();
  std::vector<nn::VarId> lps;
  RolloutResult out;
  double dev_max = 0;
  T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(policy_.cfg.d_emb)));
  int t = 0;

  while (!s.done) {
    std::vector<uint8_t> mask = env.feasible_mask(s);

    // context
    nn::VarId ctx;
    nn::VarId M;
    if (joint) {
      std::vector<nn::VarId> all_veh(K);
      for (int k = 0; k < K; ++k) all_veh[k] = vehicle_embedding(lc, env, s, k, false);
      nn::VarId fleet = g_.mean_rows(g_.concat_rows(all_veh));
      std::vector<nn::VarId> act_rows;
      for (int k : s.active_set)
        if (k != kNoVehicle) act_rows.push_back(all_veh[k]);
      nn::VarId act = g_.mean_rows(g_.concat_rows(act_rows));
      std::vector<int> last_ids(K);
      for (int k = 0; k < K; ++k)
        last_ids[k] = s.vehicles[k].tour.empty() ? 0 : s.vehicles[k].tour.back();
      nn::VarId last = g_.mean_rows(g_.gather_rows(nodes, last_ids));
      nn::VarId depot_emb = g_.gather_rows(nodes, {0});
      ctx = g_.concat_cols({graph_emb, fleet, act, depot_emb, last});

      std::vector<nn::VarId> slot_rows;
      for (int slot = 0; slot < m_con; ++slot)
        slot_rows.push_back(action_rows(lc, env, s, slot, false));
      M = m_con == 1 ? slot_rows[0] : g_.concat_rows(slot_rows);

      if (audit_cache) {
        // full recomputation path: fresh vehicle embeddings and action rows
        std::vector<nn::VarId> rveh(K);
        for (int k = 0; k < K; ++k) rveh[k] = vehicle_embedding(lc, env, s, k, true);
        nn::VarId rfleet = g_.mean_rows(g_.concat_rows(rveh));
        std::vector<nn::VarId> ract;
        for (int k : s.active_set)
          if (k != kNoVehicle) ract.push_back(rveh[k]);
        nn::VarId ractm = g_.mean_rows(g_.concat_rows(ract));
        std::vector<nn::VarId> rrows;
        for (int slot = 0; slot < m_con; ++slot)
          rrows.push_back(action_rows(lc, env, s, slot, true));
        nn::VarId rM = m_con == 1 ? rrows[0] : g_.concat_rows(rrows);
        auto dev = [&](nn::VarId a, nn::VarId b) {
          const auto&va = g_.val(a), &vb = g_.val(b);
          for (size_t i = 0; i < va.size(); ++i) {
            double x = va.v[i], y = vb.v[i];
            double d = std::abs(x - y) / std::max({std::abs(x), std::abs(y), 1e-6});
            dev_max = std::max(dev_max, d);
          }
        };
        dev(fleet, rfleet);
        dev(act, ractm);
        dev(M, rM);
      }
    } else {
      int k = s.active_set[0];
      const VehicleState& v = s.vehicles[k];
      nn::VarId qf = g_.scalar_input(static_cast<T>(1.0 - v.load));
      nn::VarId last = g_.gather_rows(nodes, {v.position});
      if (policy_.cfg.policy == PolicyKind::AMTW) {
        nn::VarId tnow =
            g_.scalar_input(static_cast<T>(v.time / Normalizer::from(env.instance()).time));
        ctx = g_.concat_cols({graph_emb, qf, tnow, last});
      } else {
        ctx = g_.concat_cols({graph_emb, qf, last});
      }
      M = nodes;
    }

    nn::VarId glimpse = policy_.decoder.apply(g_, ctx, M, &mask);
    nn::VarId scores = g_.scale(g_.matmul_nt(glimpse, M), inv_sqrt_d);
    nn::VarId logits = g_.tanh_scaled(scores, static_cast<T>(policy_.cfg.logit_clip));
    nn::VarId probs = g_.softmax(logits, &mask);

    // action selection
    int pick = -1;
    const nn::Tensor<T>& p = g_.val(probs);
    if (replay) {
      if (t >= static_cast<int>(replay->size()))
        throw std::invalid_argument("runner: replay sequence too short");
      pick = (*replay)[t];
      if (pick < 0 || pick >= static_cast<int>(mask.size()) || !mask[pick])
        throw std::invalid_argument("runner: replay action infeasible");
    } else if (mode == DecodeMode::Greedy) {
      T best = -1;
      for (int i = 0; i < static_cast<int>(mask.size()); ++i)
        if (mask[i] && p.at(0, i) > best) {
          best = p.at(0, i);
          pick = i;
        }
    } else {
      double u = rng->uniform();
      double acc = 0;
      int last_open = -1;
      for (int i = 0; i < static_cast<int>(mask.size()); ++i) {
        if (!mask[i]) continue;
        last_open = i;
        acc += static_cast<double>(p.at(0, i));
        if (u < acc) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = last_open;
    }

    lps.push_back(g_.log_element(probs, 0, pick));
    out.logprob += static_cast<double>(g_.val(lps.back()).v[0]);
    out.actions.push_back(pick);

    Action act = phi_action(s, pick);
    env.step(s, act);
    ++t;

    if (joint) {
      lc.veh[act.vehicle] = nn::kNoVar;
      lc.m_rows[act.vehicle] = nn::kNoVar;
      if (act.node > 0)
        lc.tour_sum[act.vehicle] = g_.add(
            lc.tour_sum[act.vehicle],
            policy_.g_s.apply(g_, g_.gather_rows(nodes, {act.node})));
    }
  }

  out.sol = env.solution(s);
  out.cost = cost(env.instance(), out.sol, env.variant());
  if (!lps.empty()) out.logprob_var = g_.add_scalars(lps);
  if (max_cache_dev) *max_cache_dev = dev_max;
  return out;
}

template <class T>
RolloutResult rollout(const Policy<T>& policy, const Env& env, DecodeMode mode, Rng* rng) {
  nn::Graph<T> g(false);
  PolicyRunner<T> runner(g, policy, {&env.instance()}, false);
  return runner.run(0, env, mode, rng);
}

inline std::array<double, 5> vehicle_features(const Env& env, const State& s, int k) {
  const VehicleState& v = s.vehicles[k];
  const Instance& inst = env.instance();
  Normalizer nz = Normalizer::from(inst);
  return {static_cast<double>(k) / env.fleet_size(), env.d(v.position, 0) / nz.coord,
          inst.nodes[v.position].x / nz.coord, inst.nodes[v.position].y / nz.coord,
          v.time / nz.time};
}

template <class T>
nn::VarId action_embedding(nn::Graph<T>& g, const Policy<T>& policy, nn::VarId veh_row,
                           nn::VarId node_rows) {
  nn::VarId base = g.linear(node_rows, g.param(policy.ga_w1));
  nn::VarId proj_v = g.linear(veh_row, g.param(policy.ga_w2));
  nn::VarId had = g.mul_rowvec(node_rows, veh_row);
  nn::VarId dots = g.matmul_nt(node_rows, veh_row);
  nn::VarId inter = g.linear(g.concat_cols({had, dots}), g.param(policy.ga_w3));
  return g.add(g.add_rowvec(base, proj_v), inter);
}

template <class T>
SolveResult greedy_solve(const Policy<T>& policy, const Env& env) {
  RolloutResult r = rollout(policy, env, DecodeMode::Greedy, nullptr);
  return {std::move(r.sol), std::move(r.cost), r.logprob, 1};
}

template <class T>
SolveResult sample_solve(const Policy<T>& policy, const Env& env, int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_solve: need at least one sample");
  SolveResult best;
  best.samples = n;
  bool have = false;
  for (int j = 0; j < n; ++j) {
    Rng rng(Rng::derive(seed, static_cast<uint64_t>(j)));
    RolloutResult r = rollout(policy, env, DecodeMode::Sample, &rng);
    if (!have || r.cost.total < best.cost.total) {
      best.best = std::move(r.sol);
      best.cost = std::move(r.cost);
      best.logprob = r.logprob;
      have = true;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_real_ckpt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, p);
}

inline double parse_real_ckpt(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw checkpoint_error("checkpoint: bad real '" + s + "'");
  return v;
}

template <class T>
void write_record(std::ostream& out, const std::string& tag, const std::string& name,
                  const std::vector<T>& values, int rows, int cols) {
  out << tag << ' ' << name << ' ' << rows << ' ' << cols << '\n';
  std::string blob;
  blob.reserve(values.size() * 4);
  for (T v : values) nn::put_f32_le(blob, static_cast<float>(v));
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  out << '\n';
}

inline std::vector<float> read_blob(std::istream& in, size_t count) {
  std::string blob(count * 4, '\0');
  in.read(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (static_cast<size_t>(in.gcount()) != blob.size())
    throw checkpoint_error("checkpoint: truncated record");
  if (in.get() != '\n') throw checkpoint_error("checkpoint: missing record terminator");
  std::vector<float> out(count);
  for (size_t i = 0; i < count; ++i) out[i] = nn::get_f32_le(blob.data() + i * 4);
  return out;
}

}  // namespace detail

template <class T>
void save_checkpoint(std::ostream& out, const Policy<T>& policy, const Variant& variant,
                     int m_pre, const CheckpointExtras* extras) {
  const ModelConfig& cfg = policy.cfg;
  out << "CKPT v1\n";
  out << "POLICY " << to_string(cfg.policy) << '\n';
  out << "VARIANT " << to_string(variant.kind) << ' ' << detail::fmt_real_ckpt(variant.alpha)
      << ' ' << detail::fmt_real_ckpt(variant.beta) << ' '
      << (variant.penalty == PenaltyFn::Linear ? "LIN" : "QUAD") << ' '
      << (variant.cost_includes_wait ? 1 : 0) << '\n';
  out << "DIMS " << cfg.d_emb << ' ' << cfg.heads << ' ' << cfg.n_blocks << ' '
      << cfg.enc_hidden << ' ' << cfg.tour_layers << ' ' << cfg.resolved_veh_layers() << ' '
      << cfg.d_dec << '\n';
  out << "MCON " << cfg.m_con << '\n';
  out << "MPRE " << m_pre << '\n';
  out << "CLIP " << detail::fmt_real_ckpt(cfg.logit_clip) << '\n';

  out << "PARAMS " << policy.params.count() << '\n';
  for (size_t i = 0; i < policy.params.count(); ++i) {
    const auto& p = policy.params[i];
    detail::write_record(out, "PARAM", p.name, p.v, p.rows, p.cols);
  }
  auto bns = policy.bn_layers();
  out << "STATS " << bns.size() * 2 << '\n';
  for (const auto* bn : bns) {
    detail::write_record(out, "STAT", bn->name + ".mean", bn->stats.mean, 1,
                         static_cast<int>(bn->stats.mean.size()));
    detail::write_record(out, "STAT", bn->name + ".var", bn->stats.var, 1,
                         static_cast<int>(bn->stats.var.size()));
  }
  if (extras && extras->has_moments()) {
    out << "MOMENTS " << extras->adam_t << ' ' << extras->epoch << '\n';
    detail::write_record(out, "MOMENT", "adam.m", extras->adam_m, 1,
                         static_cast<int>(extras->adam_m.size()));
    detail::write_record(out, "MOMENT", "adam.v", extras->adam_v, 1,
                         static_cast<int>(extras->adam_v.size()));
  }
  out << "END\n";
}

namespace detail {

struct CkptHeaderLines {
  CheckpointHeader header;
  size_t n_params = 0;
};

inline CkptHeaderLines read_header(std::istream& in) {
  auto next = [&](const char* what) {
    std::string line;
    if (!std::getline(in, line)) throw checkpoint_error(std::string("checkpoint: truncated at ") + what);
    return line;
  };
  if (next("magic") != "CKPT v1") throw checkpoint_error("checkpoint: unsupported version");

  CkptHeaderLines out;
  ModelConfig& cfg = out.header.model;
  std::string line;
  while (true) {
    line = next("header");
    std::istringstream iss(line);
    std::string key;
    iss >> key;
    if (key == "POLICY") {
      std::string v;
      iss >> v;
      cfg.policy = policy_kind_from(v);
    } else if (key == "VARIANT") {
      std::string kind, a, b, pen;
      int cw;
      iss >> kind >> a >> b >> pen >> cw;
      out.header.variant.kind = variant_kind_from(kind);
      out.header.variant.alpha = parse_real_ckpt(a);
      out.header.variant.beta = parse_real_ckpt(b);
      out.header.variant.penalty = pen == "QUAD" ? PenaltyFn::Quadratic : PenaltyFn::Linear;
      out.header.variant.cost_includes_wait = cw != 0;
      cfg.variant = out.header.variant.kind;
    } else if (key == "DIMS") {
      iss >> cfg.d_emb >> cfg.heads >> cfg.n_blocks >> cfg.enc_hidden >> cfg.tour_layers >>
          cfg.veh_layers >> cfg.d_dec;
    } else if (key == "MCON") {
      iss >> cfg.m_con;
    } else if (key == "MPRE") {
      iss >> out.header.m_pre;
    } else if (key == "CLIP") {
      std::string c;
      iss >> c;
      cfg.logit_clip = parse_real_ckpt(c);
    } else if (key == "PARAMS") {
      iss >> out.n_params;
      break;
    } else {
      throw checkpoint_error("checkpoint: unexpected header line '" + line + "'");
    }
    if (!iss) throw checkpoint_error("checkpoint: malformed header line '" + line + "'");
  }
  return out;
}

}  // namespace detail

inline CheckpointHeader peek_checkpoint(std::istream& in) {
  return detail::read_header(in).header;
}

template <class T>
std::pair<std::unique_ptr<Policy<T>>, CheckpointHeader> load_checkpoint(
    std::istream& in, CheckpointExtras* extras) {
  detail::CkptHeaderLines hdr = detail::read_header(in);
  auto policy = std::make_unique<Policy<T>>(hdr.header.model, 0);

  auto next = [&](const char* what) {
    std::string line;
    if (!std::getline(in, line))
      throw checkpoint_error(std::string("checkpoint: truncated at ") + what);
    return line;
  };
  size_t filled = 0;
  for (size_t i = 0; i < hdr.n_params; ++i) {
    std::istringstream iss(next("param record"));
    std::string tag, name;
    int rows, cols;
    iss >> tag >> name >> rows >> cols;
    if (!iss || tag != "PARAM") throw checkpoint_error("checkpoint: expected PARAM record");
    auto* p = policy->params.find(name);
    if (!p) throw checkpoint_error("checkpoint: unknown parameter '" + name + "'");
    if (p->rows != rows || p->cols != cols)
      throw checkpoint_error("checkpoint: shape mismatch for '" + name + "'");
    auto blob = detail::read_blob(in, p->size());
    for (size_t j = 0; j < blob.size(); ++j) p->v[j] = static_cast<T>(blob[j]);
    ++filled;
  }
  if (filled != policy->params.count())
    throw checkpoint_error("checkpoint: parameter set incomplete");

  std::istringstream stats_line(next("stats"));
  std::string tag;
  size_t n_stats;
  stats_line >> tag >> n_stats;
  if (tag != "STATS") throw checkpoint_error("checkpoint: expected STATS");
  auto bns = policy->bn_layers();
  for (size_t i = 0; i < n_stats; ++i) {
    std::istringstream iss(next("stat record"));
    std::string stag, name;
    int rows, cols;
    iss >> stag >> name >> rows >> cols;
    if (!iss || stag != "STAT") throw checkpoint_error("checkpoint: expected STAT record");
    auto blob = detail::read_blob(in, static_cast<size_t>(rows) * cols);
    bool matched = false;
    for (const auto* bn : bns) {
      bool mean = name == bn->name + ".mean";
      bool var = name == bn->name + ".var";
      if (!mean && !var) continue;
      auto& dst = mean ? bn->stats.mean : bn->stats.var;
      if (dst.size() != blob.size())
        throw checkpoint_error("checkpoint: stat size mismatch for '" + name + "'");
      for (size_t j = 0; j < blob.size(); ++j) dst[j] = static_cast<T>(blob[j]);
      matched = true;
      break;
    }
    if (!matched) throw checkpoint_error("checkpoint: unknown stat '" + name + "'");
  }

  std::string line = next("trailer");
  if (line.rfind("MOMENTS", 0) == 0) {
    std::istringstream iss(line);
    std::string mtag;
    int64_t adam_t;
    int epoch = 0;
    iss >> mtag >> adam_t >> epoch;
    for (int rec = 0; rec < 2; ++rec) {
      std::istringstream riss(next("moment record"));
      std::string rtag, name;
      int rows, cols;
      riss >> rtag >> name >> rows >> cols;
      if (!riss || rtag != "MOMENT") throw checkpoint_error("checkpoint: expected MOMENT record");
      auto blob = detail::read_blob(in, static_cast<size_t>(rows) * cols);
      if (extras) {
        if (name == "adam.m") extras->adam_m = blob;
        else if (name == "adam.v") extras->adam_v = blob;
      }
    }
    if (extras) {
      extras->adam_t = adam_t;
      extras->epoch = epoch;
    }
    line = next("end");
  }
  if (line != "END") throw checkpoint_error("checkpoint: missing END");
  return {std::move(policy), hdr.header};
}

template <class T>
void save_checkpoint_file(const std::string& path, const Policy<T>& policy,
                          const Variant& variant, int m_pre, const CheckpointExtras* extras) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw checkpoint_error("cannot open " + path + " for writing");
  save_checkpoint(out, policy, variant, m_pre, extras);
}

template <class T>
std::pair<std::unique_ptr<Policy<T>>, CheckpointHeader> load_checkpoint_file(
    const std::string& path, CheckpointExtras* extras) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw checkpoint_error("cannot open " + path);
  return load_checkpoint<T>(in, extras);
}

}  // namespace jampr
