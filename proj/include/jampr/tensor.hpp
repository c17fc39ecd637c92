#pragma once

// Reverse-mode automatic differentiation over small dense matrices, scoped
// to exactly the operators the policy models need. A Graph is a tape of
// nodes built during the forward pass; backward() walks it in reverse and
// accumulates parameter gradients into a flat buffer supplied by the
// caller. Templated on the scalar type: float for training, double for the
// finite-difference oracle checks.

#include <Eigen/Core>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace jampr::nn {

template <class T>
struct Tensor {
  int rows = 0, cols = 0;
  std::vector<T> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, T(0)) {}
  T& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  T at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  size_t size() const { return v.size(); }
};

template <class T>
using EigenMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstEigenMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <class T>
EigenMap<T> emap(Tensor<T>& t) {
  return EigenMap<T>(t.v.data(), t.rows, t.cols);
}
template <class T>
ConstEigenMap<T> emap(const Tensor<T>& t) {
  return ConstEigenMap<T>(t.v.data(), t.rows, t.cols);
}

// One learnable array. `offset` indexes its block inside the flat parameter
// and gradient vectors owned by the store.
template <class T>
struct ParamArray {
  std::string name;
  int rows = 0, cols = 0;
  size_t offset = 0;
  std::vector<T> v;

  size_t size() const { return static_cast<size_t>(rows) * cols; }
};

template <class T>
class ParamStore {
 public:
  ParamArray<T>* add(const std::string& name, int rows, int cols) {
    auto p = std::make_unique<ParamArray<T>>();
    p->name = name;
    p->rows = rows;
    p->cols = cols;
    p->offset = total_;
    p->v.assign(p->size(), T(0));
    total_ += p->size();
    params_.push_back(std::move(p));
    return params_.back().get();
  }

  size_t flat_size() const { return total_; }
  size_t count() const { return params_.size(); }
  ParamArray<T>& operator[](size_t i) { return *params_[i]; }
  const ParamArray<T>& operator[](size_t i) const { return *params_[i]; }

  ParamArray<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return p.get();
    return nullptr;
  }

  std::vector<T> flatten() const {
    std::vector<T> out(total_);
    for (auto& p : params_) std::copy(p->v.begin(), p->v.end(), out.begin() + p->offset);
    return out;
  }

  void unflatten(const std::vector<T>& flat) {
    if (flat.size() != total_) throw std::invalid_argument("param store: flat size mismatch");
    for (auto& p : params_) std::copy_n(flat.begin() + p->offset, p->size(), p->v.begin());
  }

 private:
  std::vector<std::unique_ptr<ParamArray<T>>> params_;
  size_t total_ = 0;
};

using VarId = int32_t;
inline constexpr VarId kNoVar = -1;

enum class Op : uint8_t {
  Input,
  Param,
  Linear,       // a [n,din] * W[dout,din]^T -> [n,dout]
  MatmulNT,     // a [n,k] * b [m,k]^T -> [n,m]
  Add,          // same shape
  AddRowvec,    // a [n,d] + broadcast b [1,d]
  MulRowvec,    // a [n,d] .* broadcast b [1,d]
  Scale,        // a * c
  Relu,
  TanhScaled,   // c * tanh(a)
  Softmax,      // row-wise, optional column mask shared by all rows
  Attention,    // grouped softmax(q k^T / s) v
  BatchNorm,
  ConcatCols,
  ConcatRows,
  SliceCols,
  GatherRows,
  MeanRows,     // [n,d] -> [1,d]
  SumRows,      // [n,d] -> [1,d]
  LogElement,   // log of one entry -> [1,1]
  AddScalars,   // sum of [1,1] vars
};

template <class T>
struct BnStats {
  std::vector<T> mean, var;  // running estimates, one per feature
  void init(int d) {
    mean.assign(d, T(0));
    var.assign(d, T(1));
  }
};

template <class T>
class Graph {
 public:
  explicit Graph(bool record_grads = true) : record_(record_grads) {}

  bool recording() const { return record_; }

  VarId input(Tensor<T> t) {
    Node nd;
    nd.op = Op::Input;
    nd.val = std::move(t);
    return push(std::move(nd));
  }

  VarId scalar_input(T v) {
    Tensor<T> t(1, 1);
    t.v[0] = v;
    return input(std::move(t));
  }

  // Parameter leaf; memoized so repeated uses share one node (and one copy
  // of the values) per graph.
  VarId param(const ParamArray<T>* p) {
    auto it = param_ids_.find(p);
    if (it != param_ids_.end()) return it->second;
    Node nd;
    nd.op = Op::Param;
    nd.param = p;
    nd.needs_grad = record_;
    nd.val.rows = p->rows;
    nd.val.cols = p->cols;
    nd.val.v = p->v;
    VarId id = push(std::move(nd));
    param_ids_.emplace(p, id);
    return id;
  }

  // ---- ops -----------------------------------------------------------

  VarId linear(VarId x, VarId w) {
    const Tensor<T>&a = val(x), &b = val(w);
    if (a.cols != b.cols) throw std::invalid_argument("linear: inner dim mismatch");
    Node nd = make(Op::Linear, x, w, a.rows, b.rows);
    emap(nd.val) = emap(a) * emap(b).transpose();
    return push(std::move(nd));
  }

  VarId matmul_nt(VarId x, VarId y) {
    const Tensor<T>&a = val(x), &b = val(y);
    if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dim mismatch");
    Node nd = make(Op::MatmulNT, x, y, a.rows, b.rows);
    emap(nd.val) = emap(a) * emap(b).transpose();
    return push(std::move(nd));
  }

  VarId add(VarId x, VarId y) {
    const Tensor<T>&a = val(x), &b = val(y);
    if (a.rows != b.rows || a.cols != b.cols) throw std::invalid_argument("add: shape mismatch");
    Node nd = make(Op::Add, x, y, a.rows, a.cols);
    emap(nd.val) = emap(a) + emap(b);
    return push(std::move(nd));
  }

  VarId add_rowvec(VarId x, VarId row) {
    const Tensor<T>&a = val(x), &b = val(row);
    if (b.rows != 1 || a.cols != b.cols) throw std::invalid_argument("add_rowvec: shape mismatch");
    Node nd = make(Op::AddRowvec, x, row, a.rows, a.cols);
    emap(nd.val) = emap(a).rowwise() + emap(b).row(0);
    return push(std::move(nd));
  }

  VarId mul_rowvec(VarId x, VarId row) {
    const Tensor<T>&a = val(x), &b = val(row);
    if (b.rows != 1 || a.cols != b.cols) throw std::invalid_argument("mul_rowvec: shape mismatch");
    Node nd = make(Op::MulRowvec, x, row, a.rows, a.cols);
    emap(nd.val) = emap(a).array().rowwise() * emap(b).row(0).array();
    return push(std::move(nd));
  }

  VarId scale(VarId x, T c) {
    const Tensor<T>& a = val(x);
    Node nd = make(Op::Scale, x, kNoVar, a.rows, a.cols);
    nd.c0 = c;
    emap(nd.val) = emap(a) * c;
    return push(std::move(nd));
  }

  VarId relu(VarId x) {
    const Tensor<T>& a = val(x);
    Node nd = make(Op::Relu, x, kNoVar, a.rows, a.cols);
    emap(nd.val) = emap(a).cwiseMax(T(0));
    return push(std::move(nd));
  }

  VarId tanh_scaled(VarId x, T c) {
    const Tensor<T>& a = val(x);
    Node nd = make(Op::TanhScaled, x, kNoVar, a.rows, a.cols);
    nd.c0 = c;
    for (size_t i = 0; i < a.size(); ++i) nd.val.v[i] = c * std::tanh(a.v[i]);
    return push(std::move(nd));
  }

  // Row-wise masked softmax. Masked columns get an additive -1e9 bias, which
  // underflows to exact zeros after normalization. Throws when a row has no
  // unmasked entry.
  VarId softmax(VarId x, const std::vector<uint8_t>* mask = nullptr) {
    const Tensor<T>& a = val(x);
    if (mask && static_cast<int>(mask->size()) != a.cols)
      throw std::invalid_argument("softmax: mask length mismatch");
    Node nd = make(Op::Softmax, x, kNoVar, a.rows, a.cols);
    if (mask) nd.mask = *mask;
    for (int r = 0; r < a.rows; ++r) {
      T mx = -std::numeric_limits<T>::infinity();
      for (int c = 0; c < a.cols; ++c) {
        T s = a.at(r, c) + ((mask && !(*mask)[c]) ? T(-1e9) : T(0));
        mx = std::max(mx, s);
      }
      if (mx <= T(-1e8)) throw std::invalid_argument("softmax: all entries masked");
      T sum = 0;
      for (int c = 0; c < a.cols; ++c) {
        T s = a.at(r, c) + ((mask && !(*mask)[c]) ? T(-1e9) : T(0));
        T e = std::exp(s - mx);
        nd.val.at(r, c) = e;
        sum += e;
      }
      for (int c = 0; c < a.cols; ++c) nd.val.at(r, c) /= sum;
    }
    return push(std::move(nd));
  }

  // Grouped scaled dot-product attention: queries, keys and values are
  // stacked groups (q_group rows of q attend over k_group rows of k/v within
  // each group). The optional mask spans one key group and applies to all.
  VarId attention(VarId q, VarId k, VarId v, int q_group, int k_group, T inv_sqrt_d,
                  const std::vector<uint8_t>* mask = nullptr) {
    const Tensor<T>&qa = val(q), &ka = val(k), &va = val(v);
    if (qa.cols != ka.cols) throw std::invalid_argument("attention: q/k width mismatch");
    if (ka.rows != va.rows) throw std::invalid_argument("attention: k/v rows mismatch");
    if (qa.rows % q_group || ka.rows % k_group)
      throw std::invalid_argument("attention: group size mismatch");
    int groups = qa.rows / q_group;
    if (groups != ka.rows / k_group) throw std::invalid_argument("attention: group count mismatch");
    if (mask && static_cast<int>(mask->size()) != k_group)
      throw std::invalid_argument("attention: mask length mismatch");

    Node nd = make(Op::Attention, q, k, qa.rows, va.cols);
    nd.c = v;
    nd.c0 = inv_sqrt_d;
    nd.g0 = q_group;
    nd.g1 = k_group;
    if (mask) nd.mask = *mask;
    nd.aux = Tensor<T>(qa.rows, k_group);  // attention weights per query row

    for (int g = 0; g < groups; ++g) {
      auto qb = emap(qa).middleRows(g * q_group, q_group);
      auto kb = emap(ka).middleRows(g * k_group, k_group);
      auto vb = emap(va).middleRows(g * k_group, k_group);
      Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> scores =
          qb * kb.transpose() * inv_sqrt_d;
      for (int r = 0; r < q_group; ++r) {
        T mx = -std::numeric_limits<T>::infinity();
        for (int c = 0; c < k_group; ++c) {
          if (mask && !(*mask)[c]) scores(r, c) = T(-1e9);
          mx = std::max(mx, scores(r, c));
        }
        if (mx <= T(-1e8)) throw std::invalid_argument("attention: all keys masked");
        T sum = 0;
        for (int c = 0; c < k_group; ++c) {
          T e = std::exp(scores(r, c) - mx);
          scores(r, c) = e;
          sum += e;
        }
        for (int c = 0; c < k_group; ++c) {
          scores(r, c) /= sum;
          nd.aux.at(g * q_group + r, c) = scores(r, c);
        }
      }
      emap(nd.val).middleRows(g * q_group, q_group) = scores * vb;
    }
    return push(std::move(nd));
  }

  // Batch normalization over rows, per feature. Train mode uses batch
  // statistics (needs >= 2 rows) and updates the running stats; eval mode is
  // a fixed affine map from the running stats.
  VarId batch_norm(VarId x, VarId gamma, VarId beta, BnStats<T>* stats, bool train,
                   T eps = T(1e-5), T momentum = T(0.1)) {
    const Tensor<T>& a = val(x);
    int n = a.rows, d = a.cols;
    if (val(gamma).cols != d || val(beta).cols != d)
      throw std::invalid_argument("batch_norm: affine shape mismatch");
    if (static_cast<int>(stats->mean.size()) != d)
      throw std::invalid_argument("batch_norm: stats dimension mismatch");
    if (train && n < 2) throw std::invalid_argument("batch_norm: train mode needs >= 2 rows");

    Node nd = make(Op::BatchNorm, x, gamma, n, d);
    nd.c = beta;
    nd.flag = train;
    nd.aux = Tensor<T>(2, d);      // row 0: mean used, row 1: inv std used
    nd.aux2 = Tensor<T>(n, d);     // normalized values x_hat
    for (int c = 0; c < d; ++c) {
      T mu, iv;
      if (train) {
        T sum = 0;
        for (int r = 0; r < n; ++r) sum += a.at(r, c);
        mu = sum / n;
        T ss = 0;
        for (int r = 0; r < n; ++r) {
          T dlt = a.at(r, c) - mu;
          ss += dlt * dlt;
        }
        T var = ss / n;
        stats->mean[c] = (T(1) - momentum) * stats->mean[c] + momentum * mu;
        stats->var[c] = (T(1) - momentum) * stats->var[c] + momentum * var;
        iv = T(1) / std::sqrt(var + eps);
      } else {
        mu = stats->mean[c];
        iv = T(1) / std::sqrt(stats->var[c] + eps);
      }
      nd.aux.at(0, c) = mu;
      nd.aux.at(1, c) = iv;
      T g = val(gamma).at(0, c), b = val(beta).at(0, c);
      for (int r = 0; r < n; ++r) {
        T xh = (a.at(r, c) - mu) * iv;
        nd.aux2.at(r, c) = xh;
        nd.val.at(r, c) = g * xh + b;
      }
    }
    return push(std::move(nd));
  }

  VarId concat_cols(const std::vector<VarId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int rows = val(parts[0]).rows, cols = 0;
    for (VarId p : parts) {
      if (val(p).rows != rows) throw std::invalid_argument("concat_cols: row mismatch");
      cols += val(p).cols;
    }
    Node nd = make(Op::ConcatCols, kNoVar, kNoVar, rows, cols);
    nd.list = parts;
    int at = 0;
    for (VarId p : parts) {
      emap(nd.val).middleCols(at, val(p).cols) = emap(val(p));
      at += val(p).cols;
    }
    for (VarId p : parts) nd.needs_grad = nd.needs_grad || node(p).needs_grad;
    return push(std::move(nd));
  }

  VarId concat_rows(const std::vector<VarId>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int cols = val(parts[0]).cols, rows = 0;
    for (VarId p : parts) {
      if (val(p).cols != cols) throw std::invalid_argument("concat_rows: col mismatch");
      rows += val(p).rows;
    }
    Node nd = make(Op::ConcatRows, kNoVar, kNoVar, rows, cols);
    nd.list = parts;
    int at = 0;
    for (VarId p : parts) {
      emap(nd.val).middleRows(at, val(p).rows) = emap(val(p));
      at += val(p).rows;
    }
    for (VarId p : parts) nd.needs_grad = nd.needs_grad || node(p).needs_grad;
    return push(std::move(nd));
  }

  VarId slice_cols(VarId x, int c0, int width) {
    const Tensor<T>& a = val(x);
    if (c0 < 0 || c0 + width > a.cols) throw std::invalid_argument("slice_cols: out of range");
    Node nd = make(Op::SliceCols, x, kNoVar, a.rows, width);
    nd.g0 = c0;
    emap(nd.val) = emap(a).middleCols(c0, width);
    return push(std::move(nd));
  }

  VarId gather_rows(VarId x, std::vector<int> idx) {
    const Tensor<T>& a = val(x);
    Node nd = make(Op::GatherRows, x, kNoVar, static_cast<int>(idx.size()), a.cols);
    for (size_t r = 0; r < idx.size(); ++r) {
      if (idx[r] < 0 || idx[r] >= a.rows) throw std::invalid_argument("gather_rows: bad index");
      emap(nd.val).row(static_cast<int>(r)) = emap(a).row(idx[r]);
    }
    nd.idx = std::move(idx);
    return push(std::move(nd));
  }

  VarId mean_rows(VarId x) {
    const Tensor<T>& a = val(x);
    if (a.rows == 0) throw std::invalid_argument("mean_rows: empty");
    Node nd = make(Op::MeanRows, x, kNoVar, 1, a.cols);
    emap(nd.val).row(0) = emap(a).colwise().mean();
    return push(std::move(nd));
  }

  VarId sum_rows(VarId x) {
    const Tensor<T>& a = val(x);
    Node nd = make(Op::SumRows, x, kNoVar, 1, a.cols);
    emap(nd.val).row(0) = emap(a).colwise().sum();
    return push(std::move(nd));
  }

  VarId log_element(VarId x, int r, int c) {
    const Tensor<T>& a = val(x);
    if (r < 0 || r >= a.rows || c < 0 || c >= a.cols)
      throw std::invalid_argument("log_element: out of range");
    Node nd = make(Op::LogElement, x, kNoVar, 1, 1);
    nd.g0 = r;
    nd.g1 = c;
    nd.val.v[0] = std::log(a.at(r, c));
    return push(std::move(nd));
  }

  VarId add_scalars(const std::vector<VarId>& parts) {
    Node nd = make(Op::AddScalars, kNoVar, kNoVar, 1, 1);
    nd.list = parts;
    T sum = 0;
    for (VarId p : parts) {
      if (val(p).size() != 1) throw std::invalid_argument("add_scalars: not a scalar");
      sum += val(p).v[0];
      nd.needs_grad = nd.needs_grad || node(p).needs_grad;
    }
    nd.val.v[0] = sum;
    return push(std::move(nd));
  }

  // ---- access & backward ----------------------------------------------

  const Tensor<T>& val(VarId id) const { return nodes_[id].val; }
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = seed and accumulates all parameter gradients
  // into grad_out (indexed by ParamArray offsets).
  void backward(VarId loss, std::vector<T>& grad_out, T seed = T(1)) {
    if (!record_) throw std::logic_error("backward: graph built without gradient recording");
    if (val(loss).size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    for (auto& nd : nodes_) nd.grad.v.clear();
    ensure_grad(loss).v[0] = seed;

    for (VarId id = loss; id >= 0; --id) {
      Node& nd = nodes_[id];
      if (!nd.needs_grad || nd.grad.v.empty()) continue;
      step_backward(nd, grad_out);
    }
  }

 private:
  struct Node {
    Op op = Op::Input;
    VarId a = kNoVar, b = kNoVar, c = kNoVar;
    Tensor<T> val;
    Tensor<T> grad;
    Tensor<T> aux, aux2;
    std::vector<int> idx;
    std::vector<uint8_t> mask;
    std::vector<VarId> list;
    const ParamArray<T>* param = nullptr;
    T c0 = 0;
    int g0 = 0, g1 = 0;
    bool flag = false;
    bool needs_grad = false;
  };

  Node make(Op op, VarId a, VarId b, int rows, int cols) {
    Node nd;
    nd.op = op;
    nd.a = a;
    nd.b = b;
    nd.val = Tensor<T>(rows, cols);
    if (record_) {
      if (a != kNoVar) nd.needs_grad = nd.needs_grad || nodes_[a].needs_grad;
      if (b != kNoVar) nd.needs_grad = nd.needs_grad || nodes_[b].needs_grad;
    }
    return nd;
  }

  VarId push(Node nd) {
    if (nd.c != kNoVar && record_) nd.needs_grad = nd.needs_grad || nodes_[nd.c].needs_grad;
    if (!record_) nd.needs_grad = false;
    nodes_.push_back(std::move(nd));
    return static_cast<VarId>(nodes_.size() - 1);
  }

  Node& node(VarId id) { return nodes_[id]; }

  Tensor<T>& ensure_grad(VarId id) {
    Node& nd = nodes_[id];
    if (nd.grad.v.empty()) nd.grad = Tensor<T>(nd.val.rows, nd.val.cols);
    return nd.grad;
  }

  void bump(VarId id, int r, int c, T g) {
    if (id == kNoVar || !nodes_[id].needs_grad) return;
    ensure_grad(id).at(r, c) += g;
  }

  void step_backward(Node& nd, std::vector<T>& grad_out) {
    const Tensor<T>& g = nd.grad;
    auto want = [&](VarId x) { return x != kNoVar && nodes_[x].needs_grad; };

    switch (nd.op) {
      case Op::Input:
        break;
      case Op::Param:
        for (size_t i = 0; i < g.size(); ++i) grad_out[nd.param->offset + i] += g.v[i];
        break;
      case Op::Linear: {
        // y = a W^T ; da = g W ; dW = g^T a
        if (want(nd.a)) emap(ensure_grad(nd.a)) += emap(g) * emap(nodes_[nd.b].val);
        if (want(nd.b))
          emap(ensure_grad(nd.b)) += emap(g).transpose() * emap(nodes_[nd.a].val);
        break;
      }
      case Op::MatmulNT: {
        // y = a b^T ; da = g b ; db = g^T a
        if (want(nd.a)) emap(ensure_grad(nd.a)) += emap(g) * emap(nodes_[nd.b].val);
        if (want(nd.b))
          emap(ensure_grad(nd.b)) += emap(g).transpose() * emap(nodes_[nd.a].val);
        break;
      }
      case Op::Add:
        if (want(nd.a)) emap(ensure_grad(nd.a)) += emap(g);
        if (want(nd.b)) emap(ensure_grad(nd.b)) += emap(g);
        break;
      case Op::AddRowvec:
        if (want(nd.a)) emap(ensure_grad(nd.a)) += emap(g);
        if (want(nd.b)) emap(ensure_grad(nd.b)).row(0) += emap(g).colwise().sum();
        break;
      case Op::MulRowvec: {
        if (want(nd.a))
          emap(ensure_grad(nd.a)).array() +=
              emap(g).array().rowwise() * emap(nodes_[nd.b].val).row(0).array();
        if (want(nd.b))
          emap(ensure_grad(nd.b)).row(0) +=
              (emap(g).array() * emap(nodes_[nd.a].val).array()).colwise().sum().matrix();
        break;
      }
      case Op::Scale:
        if (want(nd.a)) emap(ensure_grad(nd.a)) += emap(g) * nd.c0;
        break;
      case Op::Relu: {
        if (want(nd.a)) {
          Tensor<T>& ga = ensure_grad(nd.a);
          const Tensor<T>& x = nodes_[nd.a].val;
          for (size_t i = 0; i < g.size(); ++i) ga.v[i] += x.v[i] > T(0) ? g.v[i] : T(0);
        }
        break;
      }
      case Op::TanhScaled: {
        if (want(nd.a)) {
          Tensor<T>& ga = ensure_grad(nd.a);
          for (size_t i = 0; i < g.size(); ++i) {
            T y = nd.val.v[i] / nd.c0;  // tanh(x)
            ga.v[i] += g.v[i] * nd.c0 * (T(1) - y * y);
          }
        }
        break;
      }
      case Op::Softmax: {
        if (want(nd.a)) {
          Tensor<T>& ga = ensure_grad(nd.a);
          for (int r = 0; r < nd.val.rows; ++r) {
            T dot = 0;
            for (int c = 0; c < nd.val.cols; ++c) dot += g.at(r, c) * nd.val.at(r, c);
            for (int c = 0; c < nd.val.cols; ++c)
              ga.at(r, c) += nd.val.at(r, c) * (g.at(r, c) - dot);
          }
        }
        break;
      }
      case Op::Attention: {
        const Tensor<T>&qa = nodes_[nd.a].val, &ka = nodes_[nd.b].val, &va = nodes_[nd.c].val;
        int q_group = nd.g0, k_group = nd.g1;
        int groups = qa.rows / q_group;
        bool wq = want(nd.a), wk = want(nd.b), wv = want(nd.c);
        if (wq) ensure_grad(nd.a);
        if (wk) ensure_grad(nd.b);
        if (wv) ensure_grad(nd.c);
        for (int gi = 0; gi < groups; ++gi) {
          auto kb = emap(ka).middleRows(gi * k_group, k_group);
          auto vb = emap(va).middleRows(gi * k_group, k_group);
          auto gb = emap(g).middleRows(gi * q_group, q_group);
          auto wts = emap(nd.aux).middleRows(gi * q_group, q_group);
          // dV = A^T g
          if (wv)
            emap(nodes_[nd.c].grad).middleRows(gi * k_group, k_group) += wts.transpose() * gb;
          // dA = g V^T, then softmax backward to scores, then to q/k
          Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dA =
              gb * vb.transpose();
          for (int r = 0; r < q_group; ++r) {
            T dot = 0;
            for (int c = 0; c < k_group; ++c) dot += dA(r, c) * wts(r, c);
            for (int c = 0; c < k_group; ++c)
              dA(r, c) = wts(r, c) * (dA(r, c) - dot) * nd.c0;
          }
          if (wq) emap(nodes_[nd.a].grad).middleRows(gi * q_group, q_group) += dA * kb;
          if (wk)
            emap(nodes_[nd.b].grad).middleRows(gi * k_group, k_group) +=
                dA.transpose() * emap(qa).middleRows(gi * q_group, q_group);
        }
        break;
      }
      case Op::BatchNorm: {
        const Tensor<T>& x = nodes_[nd.a].val;
        int n = x.rows, d = x.cols;
        bool wx = want(nd.a), wg = want(nd.b), wb = want(nd.c);
        if (wx) ensure_grad(nd.a);
        if (wg) ensure_grad(nd.b);
        if (wb) ensure_grad(nd.c);
        for (int c = 0; c < d; ++c) {
          T gamma = nodes_[nd.b].val.at(0, c);
          T iv = nd.aux.at(1, c);
          T sum_g = 0, sum_gx = 0;
          for (int r = 0; r < n; ++r) {
            sum_g += g.at(r, c);
            sum_gx += g.at(r, c) * nd.aux2.at(r, c);
          }
          if (wg) nodes_[nd.b].grad.at(0, c) += sum_gx;
          if (wb) nodes_[nd.c].grad.at(0, c) += sum_g;
          if (wx) {
            if (nd.flag) {
              // train mode: statistics depend on x
              for (int r = 0; r < n; ++r) {
                T xh = nd.aux2.at(r, c);
                nodes_[nd.a].grad.at(r, c) +=
                    gamma * iv * (g.at(r, c) - sum_g / n - xh * sum_gx / n);
              }
            } else {
              for (int r = 0; r < n; ++r) nodes_[nd.a].grad.at(r, c) += gamma * iv * g.at(r, c);
            }
          }
        }
        break;
      }
      case Op::ConcatCols: {
        int at = 0;
        for (VarId p : nd.list) {
          int w = nodes_[p].val.cols;
          if (want(p)) emap(ensure_grad(p)) += emap(g).middleCols(at, w);
          at += w;
        }
        break;
      }
      case Op::ConcatRows: {
        int at = 0;
        for (VarId p : nd.list) {
          int h = nodes_[p].val.rows;
          if (want(p)) emap(ensure_grad(p)) += emap(g).middleRows(at, h);
          at += h;
        }
        break;
      }
      case Op::SliceCols:
        if (want(nd.a))
          emap(ensure_grad(nd.a)).middleCols(nd.g0, nd.val.cols) += emap(g);
        break;
      case Op::GatherRows:
        if (want(nd.a)) {
          Tensor<T>& ga = ensure_grad(nd.a);
          for (size_t r = 0; r < nd.idx.size(); ++r)
            emap(ga).row(nd.idx[r]) += emap(g).row(static_cast<int>(r));
        }
        break;
      case Op::MeanRows:
        if (want(nd.a)) {
          int n = nodes_[nd.a].val.rows;
          emap(ensure_grad(nd.a)).rowwise() += emap(g).row(0) / T(n);
        }
        break;
      case Op::SumRows:
        if (want(nd.a)) emap(ensure_grad(nd.a)).rowwise() += emap(g).row(0);
        break;
      case Op::LogElement:
        if (want(nd.a))
          ensure_grad(nd.a).at(nd.g0, nd.g1) += g.v[0] / nodes_[nd.a].val.at(nd.g0, nd.g1);
        break;
      case Op::AddScalars:
        for (VarId p : nd.list) bump(p, 0, 0, g.v[0]);
        break;
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<const ParamArray<T>*, VarId> param_ids_;
  bool record_ = true;
};

}  // namespace jampr::nn
