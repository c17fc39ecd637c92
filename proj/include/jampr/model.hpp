#pragma once

// Policy models over the routing environment.
//
// JAMPR builds several tours concurrently: a three-block self-attention node
// encoder, feed-forward vehicle and tour encoders, a comprehensive context
// [graph; fleet; active; depot; last] and a joint (vehicle, node) action
// space scored by a multi-head decoder. AM and AM+TW are the sequential
// single-tour baselines sharing the node encoder and decoder shape.
//
// Static parts (node embeddings, their W1 projection) are computed once per
// instance; vehicle embeddings and the affected action rows are refreshed
// only for vehicles whose state changed since the previous step.

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "jampr/env.hpp"
#include "jampr/instance.hpp"
#include "jampr/nn.hpp"
#include "jampr/rng.hpp"

namespace jampr {

enum class PolicyKind { JAMPR, AM, AMTW };

const char* to_string(PolicyKind k);
PolicyKind policy_kind_from(const std::string& s);

struct ModelConfig {
  PolicyKind policy = PolicyKind::JAMPR;
  VariantKind variant = VariantKind::TW1;
  int d_emb = 128;      // node, vehicle and action embedding width
  int heads = 8;
  int n_blocks = 3;
  int enc_hidden = 64;  // vehicle/tour encoder hidden width
  int tour_layers = 2;
  int veh_layers = 0;   // 0 resolves to 3 for TW variants, 1 for CVRP
  int d_dec = 256;      // decoder hidden width
  int m_con = 1;
  double logit_clip = 10.0;

  int resolved_veh_layers() const {
    if (veh_layers > 0) return veh_layers;
    return variant == VariantKind::CVRP ? 1 : 3;
  }
  int node_features() const { return variant == VariantKind::CVRP ? 3 : 5; }
  int veh_half() const { return d_emb / 2; }
  int d_context() const {
    switch (policy) {
      case PolicyKind::JAMPR: return 5 * d_emb;  // 3 d_node + 2 d_vehicle
      case PolicyKind::AM: return 2 * d_emb + 1;
      case PolicyKind::AMTW: return 2 * d_emb + 2;
    }
    return 0;
  }
  bool joint() const { return policy == PolicyKind::JAMPR; }
  void check() const;

  // Small preset used by the fast experiments: d_emb 32, 4 heads, slim
  // encoders and decoder.
  static ModelConfig tiny(PolicyKind p, VariantKind v, int m_con);
};

template <class T>
struct Policy {
  ModelConfig cfg;
  nn::ParamStore<T> params;

  nn::ParamArray<T>*w_in = nullptr, *b_in = nullptr;
  std::vector<nn::SaBlock<T>> blocks;

  // JAMPR extensions
  nn::Mlp<T> g_v, g_s;
  nn::ParamArray<T>*ga_w1 = nullptr, *ga_w2 = nullptr, *ga_w3 = nullptr;

  nn::CrossMha<T> decoder;

  Policy(ModelConfig config, uint64_t init_seed);

  int action_dim() const { return cfg.d_emb; }
  std::vector<const nn::BnLayer<T>*> bn_layers() const;
};

// Per-instance normalization constants for the encoder inputs.
struct Normalizer {
  double coord = 1.0;
  double time = 1.0;
  double demand = 1.0;
  static Normalizer from(const Instance& inst);
};

enum class DecodeMode { Greedy, Sample };

struct RolloutResult {
  Solution sol;
  CostBreakdown cost;
  double logprob = 0;
  std::vector<int> actions;  // flat indices, aligned with phi
  nn::VarId logprob_var = nn::kNoVar;
};

// Binds a policy, a graph and a batch of same-size instances. The node
// encoder runs once for the whole batch (batch normalization sees
// batch x nodes rows in train mode); rollouts then share the embeddings.
template <class T>
class PolicyRunner {
 public:
  PolicyRunner(nn::Graph<T>& graph, const Policy<T>& policy,
               const std::vector<const Instance*>& batch, bool bn_train);

  // Rolls one lane to completion. `replay` forces the given action sequence
  // (teacher forcing); rng is required for Sample mode.
  RolloutResult run(int lane, const Env& env, DecodeMode mode, Rng* rng,
                    const std::vector<int>* replay = nullptr, bool audit_cache = false,
                    double* max_cache_dev = nullptr);

 private:
  struct LaneCache;
  nn::VarId vehicle_embedding(LaneCache& lc, const Env& env, const State& s, int k,
                              bool recompute);
  nn::VarId action_rows(LaneCache& lc, const Env& env, const State& s, int slot,
                        bool recompute);

  nn::Graph<T>& g_;
  const Policy<T>& policy_;
  bool train_;
  int n_nodes_ = 0;
  std::vector<nn::VarId> inst_nodes_;   // per lane [N+1, d]
  std::vector<nn::VarId> inst_graph_;   // per lane [1, d]
};

// Convenience single-instance rollout (inference path).
template <class T>
RolloutResult rollout(const Policy<T>& policy, const Env& env, DecodeMode mode, Rng* rng);

// Raw vehicle features fed to the vehicle encoder: index fraction, return
// distance, position coordinates and clock, all normalized.
std::array<double, 5> vehicle_features(const Env& env, const State& s, int k);

// Joint action embedding g_a for one vehicle row against a block of node
// rows: W1 n + W2 v + W3 [v (.) n ; v . n].
template <class T>
nn::VarId action_embedding(nn::Graph<T>& g, const Policy<T>& policy, nn::VarId veh_row,
                           nn::VarId node_rows);

struct SolveResult {
  Solution best;
  CostBreakdown cost;
  double logprob = 0;
  int samples = 1;
};

template <class T>
SolveResult greedy_solve(const Policy<T>& policy, const Env& env);

// Best of n sampled rollouts; sample j draws from sub-stream derive(seed, j),
// so sample sets are nested across increasing n.
template <class T>
SolveResult sample_solve(const Policy<T>& policy, const Env& env, int n, uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints: CKPT v1, text header plus raw little-endian float32 records
// for parameters, batch-norm running statistics and optimizer moments.
// ---------------------------------------------------------------------------

struct CheckpointExtras {
  // Optimizer state, present when saved from training.
  std::vector<float> adam_m, adam_v;
  int64_t adam_t = 0;
  int epoch = 0;
  bool has_moments() const { return !adam_m.empty(); }
};

struct CheckpointHeader {
  ModelConfig model;
  Variant variant;
  int m_pre = 6;
};

struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class T>
void save_checkpoint(std::ostream& out, const Policy<T>& policy, const Variant& variant,
                     int m_pre, const CheckpointExtras* extras = nullptr);

CheckpointHeader peek_checkpoint(std::istream& in);

template <class T>
std::pair<std::unique_ptr<Policy<T>>, CheckpointHeader> load_checkpoint(
    std::istream& in, CheckpointExtras* extras = nullptr);

template <class T>
void save_checkpoint_file(const std::string& path, const Policy<T>& policy,
                          const Variant& variant, int m_pre,
                          const CheckpointExtras* extras = nullptr);

template <class T>
std::pair<std::unique_ptr<Policy<T>>, CheckpointHeader> load_checkpoint_file(
    const std::string& path, CheckpointExtras* extras = nullptr);

}  // namespace jampr

#include "jampr/model_impl.hpp"
