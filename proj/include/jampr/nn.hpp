#pragma once

// Network building blocks used by the policies: single-/multi-head attention
// with per-head input slicing, the element-wise feed-forward layer, batch
// normalization and the self-attention block composed from them.

#include <cstring>
#include <string>
#include <vector>

#include "jampr/rng.hpp"
#include "jampr/tensor.hpp"

namespace jampr::nn {

struct AttnConfig {
  int d_in = 128;
  int d_out = 128;
  int d_key = 16;   // defaults to d_in / H
  int d_value = 16;
  int heads = 8;

  static AttnConfig square(int d, int h) { return {d, d, d / h, d / h, h}; }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization, fan_in = cols.
template <class T>
void init_uniform(ParamArray<T>& p, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(p.cols));
  for (auto& v : p.v) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
void init_const(ParamArray<T>& p, T value) {
  for (auto& v : p.v) v = value;
}

// Multi-head self attention where head h sees a contiguous slice of width
// d_in/H of every input element.
template <class T>
struct SelfMha {
  AttnConfig cfg;
  std::vector<ParamArray<T>*> wq, wk, wv, wh;  // per head

  static SelfMha create(ParamStore<T>& store, const std::string& prefix, AttnConfig cfg,
                        Rng& rng) {
    if (cfg.d_in % cfg.heads != 0)
      throw std::invalid_argument("mha: head count must divide d_in");
    SelfMha layer;
    layer.cfg = cfg;
    int slice = cfg.d_in / cfg.heads;
    for (int h = 0; h < cfg.heads; ++h) {
      std::string hp = prefix + ".h" + std::to_string(h);
      layer.wq.push_back(store.add(hp + ".wq", cfg.d_key, slice));
      layer.wk.push_back(store.add(hp + ".wk", cfg.d_key, slice));
      layer.wv.push_back(store.add(hp + ".wv", cfg.d_value, slice));
      layer.wh.push_back(store.add(hp + ".wh", cfg.d_out, cfg.d_value));
      init_uniform(*layer.wq.back(), rng);
      init_uniform(*layer.wk.back(), rng);
      init_uniform(*layer.wv.back(), rng);
      init_uniform(*layer.wh.back(), rng);
    }
    return layer;
  }

  // Z: stacked groups of group_len rows each; attention runs within groups.
  VarId apply(Graph<T>& g, VarId Z, int group_len) const {
    int slice = cfg.d_in / cfg.heads;
    T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cfg.d_key)));
    VarId out = kNoVar;
    for (int h = 0; h < cfg.heads; ++h) {
      VarId zs = g.slice_cols(Z, h * slice, slice);
      VarId q = g.linear(zs, g.param(wq[h]));
      VarId k = g.linear(zs, g.param(wk[h]));
      VarId v = g.linear(zs, g.param(wv[h]));
      VarId att = g.attention(q, k, v, group_len, group_len, inv_sqrt);
      VarId head = g.linear(att, g.param(wh[h]));
      out = out == kNoVar ? head : g.add(out, head);
    }
    return out;
  }
};

// Decoder-style cross attention: the query side is projected from the full
// context, keys/values from the full action rows; heads slice the projected
// hidden vectors. The mask spans the key rows.
template <class T>
struct CrossMha {
  int d_q = 0, d_kv = 0, d_hidden = 0, d_out = 0, heads = 0;
  ParamArray<T>*wq = nullptr, *wk = nullptr, *wv = nullptr, *wo = nullptr;

  static CrossMha create(ParamStore<T>& store, const std::string& prefix, int d_q, int d_kv,
                         int d_hidden, int d_out, int heads, Rng& rng) {
    if (d_hidden % heads != 0)
      throw std::invalid_argument("cross mha: head count must divide hidden dim");
    CrossMha layer;
    layer.d_q = d_q;
    layer.d_kv = d_kv;
    layer.d_hidden = d_hidden;
    layer.d_out = d_out;
    layer.heads = heads;
    layer.wq = store.add(prefix + ".wq", d_hidden, d_q);
    layer.wk = store.add(prefix + ".wk", d_hidden, d_kv);
    layer.wv = store.add(prefix + ".wv", d_hidden, d_kv);
    layer.wo = store.add(prefix + ".wo", d_out, d_hidden);
    init_uniform(*layer.wq, rng);
    init_uniform(*layer.wk, rng);
    init_uniform(*layer.wv, rng);
    init_uniform(*layer.wo, rng);
    return layer;
  }

  VarId apply(Graph<T>& g, VarId query_row, VarId kv_rows,
              const std::vector<uint8_t>* mask) const {
    int slice = d_hidden / heads;
    T inv_sqrt = static_cast<T>(1.0 / std::sqrt(static_cast<double>(slice)));
    VarId q = g.linear(query_row, g.param(wq));
    VarId k = g.linear(kv_rows, g.param(wk));
    VarId v = g.linear(kv_rows, g.param(wv));
    int kv_n = g.val(kv_rows).rows;
    std::vector<VarId> heads_out;
    for (int h = 0; h < heads; ++h) {
      VarId qh = g.slice_cols(q, h * slice, slice);
      VarId kh = g.slice_cols(k, h * slice, slice);
      VarId vh = g.slice_cols(v, h * slice, slice);
      heads_out.push_back(g.attention(qh, kh, vh, 1, kv_n, inv_sqrt, mask));
    }
    return g.linear(g.concat_cols(heads_out), g.param(wo));
  }
};

// Element-wise feed-forward: max(0, W z + b), square.
template <class T>
struct FfLayer {
  ParamArray<T>*w = nullptr, *b = nullptr;

  static FfLayer create(ParamStore<T>& store, const std::string& prefix, int d, Rng& rng) {
    FfLayer layer;
    layer.w = store.add(prefix + ".w", d, d);
    layer.b = store.add(prefix + ".b", 1, d);
    init_uniform(*layer.w, rng);
    init_uniform(*layer.b, rng);
    return layer;
  }

  VarId apply(Graph<T>& g, VarId x) const {
    return g.relu(g.add_rowvec(g.linear(x, g.param(w)), g.param(b)));
  }
};

template <class T>
struct BnLayer {
  std::string name;
  ParamArray<T>*gamma = nullptr, *beta = nullptr;
  // Running statistics live with the parameters but are updated outside the
  // optimizer, only in train mode.
  mutable BnStats<T> stats;

  static BnLayer create(ParamStore<T>& store, const std::string& prefix, int d) {
    BnLayer layer;
    layer.name = prefix;
    layer.gamma = store.add(prefix + ".gamma", 1, d);
    layer.beta = store.add(prefix + ".beta", 1, d);
    init_const(*layer.gamma, T(1));
    init_const(*layer.beta, T(0));
    layer.stats.init(d);
    return layer;
  }

  VarId apply(Graph<T>& g, VarId x, bool train) const {
    return g.batch_norm(x, g.param(gamma), g.param(beta), &stats, train);
  }
};

// BN( FF_res( BN( MHA_res(z, Z) ) ) )
template <class T>
struct SaBlock {
  SelfMha<T> mha;
  FfLayer<T> ff;
  BnLayer<T> bn1, bn2;

  static SaBlock create(ParamStore<T>& store, const std::string& prefix, int d, int heads,
                        Rng& rng) {
    SaBlock blk;
    blk.mha = SelfMha<T>::create(store, prefix + ".mha", AttnConfig::square(d, heads), rng);
    blk.ff = FfLayer<T>::create(store, prefix + ".ff", d, rng);
    blk.bn1 = BnLayer<T>::create(store, prefix + ".bn1", d);
    blk.bn2 = BnLayer<T>::create(store, prefix + ".bn2", d);
    return blk;
  }

  VarId apply(Graph<T>& g, VarId Z, int group_len, bool train) const {
    VarId h = bn1.apply(g, g.add(Z, mha.apply(g, Z, group_len)), train);
    return bn2.apply(g, g.add(h, ff.apply(g, h)), train);
  }
};

// Plain MLP with relu between layers and a linear head; used for the vehicle
// and tour encoders.
template <class T>
struct Mlp {
  std::vector<ParamArray<T>*> w, b;

  static Mlp create(ParamStore<T>& store, const std::string& prefix, int d_in, int d_hidden,
                    int d_out, int layers, Rng& rng) {
    if (layers < 1) throw std::invalid_argument("mlp: need at least one layer");
    Mlp mlp;
    for (int l = 0; l < layers; ++l) {
      int in = l == 0 ? d_in : d_hidden;
      int out = l == layers - 1 ? d_out : d_hidden;
      mlp.w.push_back(store.add(prefix + ".w" + std::to_string(l), out, in));
      mlp.b.push_back(store.add(prefix + ".b" + std::to_string(l), 1, out));
      init_uniform(*mlp.w.back(), rng);
      init_uniform(*mlp.b.back(), rng);
    }
    return mlp;
  }

  VarId apply(Graph<T>& g, VarId x) const {
    VarId h = x;
    for (size_t l = 0; l < w.size(); ++l) {
      h = g.add_rowvec(g.linear(h, g.param(w[l])), g.param(b[l]));
      if (l + 1 < w.size()) h = g.relu(h);
    }
    return h;
  }
};

// ---------------------------------------------------------------------------
// Little-endian float32 serialization helpers for checkpoints.
// ---------------------------------------------------------------------------

inline void put_f32_le(std::string& out, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  out.push_back(static_cast<char>(u & 0xff));
  out.push_back(static_cast<char>((u >> 8) & 0xff));
  out.push_back(static_cast<char>((u >> 16) & 0xff));
  out.push_back(static_cast<char>((u >> 24) & 0xff));
}

inline float get_f32_le(const char* p) {
  uint32_t u = (static_cast<uint32_t>(static_cast<unsigned char>(p[0]))) |
               (static_cast<uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
               (static_cast<uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
               (static_cast<uint32_t>(static_cast<unsigned char>(p[3])) << 24);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

}  // namespace jampr::nn
