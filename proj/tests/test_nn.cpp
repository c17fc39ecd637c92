#include "jampr/nn.hpp"

#include <cmath>
#include <functional>

#include "doctest.h"
#include "jampr/rng.hpp"
#include "support/naive_attention.hpp"

using namespace jampr;
using namespace jampr::nn;

namespace {

Tensor<double> random_tensor(int r, int c, Rng& rng, double scale = 1.0) {
  Tensor<double> t(r, c);
  for (auto& v : t.v) v = rng.uniform(-scale, scale);
  return t;
}

naive::Mat to_mat(const ParamArray<double>& p) {
  naive::Mat m(p.rows, naive::Vec(p.cols));
  for (int r = 0; r < p.rows; ++r)
    for (int c = 0; c < p.cols; ++c) m[r][c] = p.v[static_cast<size_t>(r) * p.cols + c];
  return m;
}

std::vector<naive::Vec> to_rows(const Tensor<double>& t) {
  std::vector<naive::Vec> rows(t.rows, naive::Vec(t.cols));
  for (int r = 0; r < t.rows; ++r)
    for (int c = 0; c < t.cols; ++c) rows[r][c] = t.at(r, c);
  return rows;
}

// Graph-built SHA for one query row over Z, matching the layer composition.
VarId graph_sha(Graph<double>& g, VarId z, VarId Z, const ParamArray<double>* wq,
                const ParamArray<double>* wk, const ParamArray<double>* wv) {
  VarId q = g.linear(z, g.param(wq));
  VarId k = g.linear(Z, g.param(wk));
  VarId v = g.linear(Z, g.param(wv));
  double inv = 1.0 / std::sqrt(static_cast<double>(wq->rows));
  int n = g.val(Z).rows;
  return g.attention(q, k, v, 1, n, inv);
}

// Central finite differences through an arbitrary param-dependent scalar.
double fd_grad(ParamStore<double>& store, ParamArray<double>& p, size_t i,
               const std::function<double()>& eval, double h = 1e-5) {
  double keep = p.v[i];
  p.v[i] = keep + h;
  double up = eval();
  p.v[i] = keep - h;
  double dn = eval();
  p.v[i] = keep;
  (void)store;
  return (up - dn) / (2 * h);
}

void check_grads_close(double analytic, double numeric) {
  double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  CHECK(std::abs(analytic - numeric) / denom < 1e-4);
}

}  // namespace

TEST_CASE("sha on a singleton sequence returns the projected value") {
  Rng rng(1);
  ParamStore<double> store;
  auto* wq = store.add("wq", 3, 4);
  auto* wk = store.add("wk", 3, 4);
  auto* wv = store.add("wv", 4, 4);
  init_uniform(*wq, rng);
  init_uniform(*wk, rng);
  init_uniform(*wv, rng);

  Graph<double> g(false);
  Tensor<double> zt = random_tensor(1, 4, rng);
  VarId z = g.input(zt);
  VarId Z = g.input(zt);
  VarId out = graph_sha(g, z, Z, wq, wk, wv);

  naive::Vec expect = naive::matvec(to_mat(*wv), to_rows(zt)[0]);
  for (int c = 0; c < 4; ++c) CHECK(g.val(out).at(0, c) == doctest::Approx(expect[c]).epsilon(1e-12));
}

TEST_CASE("sha with equal scores averages the projected values") {
  Rng rng(2);
  ParamStore<double> store;
  auto* wq = store.add("wq", 3, 4);  // zero query -> uniform weights
  auto* wk = store.add("wk", 3, 4);
  auto* wv = store.add("wv", 4, 4);
  init_uniform(*wk, rng);
  init_uniform(*wv, rng);

  Graph<double> g(false);
  Tensor<double> Zt = random_tensor(3, 4, rng);
  VarId z = g.input(random_tensor(1, 4, rng));
  VarId Z = g.input(Zt);
  VarId out = graph_sha(g, z, Z, wq, wk, wv);

  naive::Mat wvm = to_mat(*wv);
  naive::Vec mean(4, 0.0);
  for (auto& row : to_rows(Zt)) {
    naive::Vec v = naive::matvec(wvm, row);
    for (int i = 0; i < 4; ++i) mean[i] += v[i] / 3.0;
  }
  for (int c = 0; c < 4; ++c) CHECK(g.val(out).at(0, c) == doctest::Approx(mean[c]).epsilon(1e-12));
}

TEST_CASE("sha matches the dense reference") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    ParamStore<double> store;
    auto* wq = store.add("wq", 4, 4);
    auto* wk = store.add("wk", 4, 4);
    auto* wv = store.add("wv", 4, 4);
    init_uniform(*wq, rng);
    init_uniform(*wk, rng);
    init_uniform(*wv, rng);

    Tensor<double> Zt = random_tensor(3, 4, rng);
    Graph<double> g(false);
    VarId z = g.gather_rows(g.input(Zt), {0});
    VarId out = graph_sha(g, z, g.input(Zt), wq, wk, wv);

    naive::Vec expect = naive::sha(to_rows(Zt)[0], to_rows(Zt), to_mat(*wq), to_mat(*wk),
                                   to_mat(*wv));
    for (int c = 0; c < 4; ++c)
      CHECK(g.val(out).at(0, c) == doctest::Approx(expect[c]).epsilon(1e-12));
  }
}

TEST_CASE("attention weights form a probability vector with exact masked zeros") {
  Rng rng(4);
  Graph<double> g(false);
  Tensor<double> scores = random_tensor(1, 6, rng, 3.0);
  std::vector<uint8_t> mask = {1, 0, 1, 1, 0, 1};
  VarId w = g.softmax(g.input(scores), &mask);
  double sum = 0;
  for (int c = 0; c < 6; ++c) {
    double v = g.val(w).at(0, c);
    CHECK(v >= 0.0);
    if (!mask[c]) CHECK(v == 0.0);
    sum += v;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));

  SUBCASE("single unmasked entry takes all the weight") {
    std::vector<uint8_t> one = {0, 0, 0, 1, 0, 0};
    Graph<double> g2(false);
    VarId w2 = g2.softmax(g2.input(scores), &one);
    CHECK(g2.val(w2).at(0, 3) == 1.0);
  }

  SUBCASE("score shift invariance") {
    Graph<double> g2(false);
    Tensor<double> shifted = scores;
    for (auto& v : shifted.v) v += 17.5;
    VarId w2 = g2.softmax(g2.input(shifted), &mask);
    for (int c = 0; c < 6; ++c)
      CHECK(g2.val(w2).at(0, c) == doctest::Approx(g.val(w).at(0, c)).epsilon(1e-12));
  }

  SUBCASE("all masked is an error") {
    std::vector<uint8_t> none(6, 0);
    Graph<double> g2(false);
    CHECK_THROWS_AS(g2.softmax(g2.input(scores), &none), std::invalid_argument);
  }
}

TEST_CASE("mha with one head and identity head projection reduces to sha") {
  Rng rng(5);
  ParamStore<double> store;
  AttnConfig cfg{4, 4, 4, 4, 1};
  SelfMha<double> mha = SelfMha<double>::create(store, "mha", cfg, rng);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) mha.wh[0]->v[static_cast<size_t>(r) * 4 + c] = r == c ? 1.0 : 0.0;

  Tensor<double> Zt = random_tensor(5, 4, rng);
  Graph<double> g(false);
  VarId out = mha.apply(g, g.input(Zt), 5);

  for (int r = 0; r < 5; ++r) {
    Graph<double> gs(false);
    VarId z = gs.gather_rows(gs.input(Zt), {r});
    VarId sha_out = graph_sha(gs, z, gs.input(Zt), mha.wq[0], mha.wk[0], mha.wv[0]);
    for (int c = 0; c < 4; ++c)
      CHECK(g.val(out).at(r, c) == doctest::Approx(gs.val(sha_out).at(0, c)).epsilon(1e-12));
  }
}

TEST_CASE("mha matches the two-slice dense reference and is permutation invariant") {
  Rng rng(6);
  ParamStore<double> store;
  SelfMha<double> mha = SelfMha<double>::create(store, "mha", AttnConfig::square(8, 2), rng);

  Tensor<double> Zt = random_tensor(4, 8, rng);
  Graph<double> g(false);
  VarId out = mha.apply(g, g.input(Zt), 4);

  std::vector<naive::Mat> wq, wk, wv, wh;
  for (int h = 0; h < 2; ++h) {
    wq.push_back(to_mat(*mha.wq[h]));
    wk.push_back(to_mat(*mha.wk[h]));
    wv.push_back(to_mat(*mha.wv[h]));
    wh.push_back(to_mat(*mha.wh[h]));
  }
  auto rows = to_rows(Zt);
  for (int r = 0; r < 4; ++r) {
    naive::Vec expect = naive::mha(rows[r], rows, wq, wk, wv, wh);
    for (int c = 0; c < 8; ++c)
      CHECK(g.val(out).at(r, c) == doctest::Approx(expect[c]).epsilon(1e-10));
  }

  // permuting the sequence permutes the outputs identically
  std::vector<int> perm = {2, 0, 3, 1};
  Graph<double> gp(false);
  VarId Zp = gp.gather_rows(gp.input(Zt), perm);
  VarId outp = mha.apply(gp, Zp, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(gp.val(outp).at(r, c) == doctest::Approx(g.val(out).at(perm[r], c)).epsilon(1e-10));
}

TEST_CASE("batch norm normalizes in train mode and is affine in eval mode") {
  Rng rng(7);
  ParamStore<double> store;
  BnLayer<double> bn = BnLayer<double>::create(store, "bn", 3);

  SUBCASE("constant batch maps to zeros") {
    Tensor<double> x(4, 3);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 3; ++c) x.at(r, c) = 2.5;
    Graph<double> g(false);
    VarId y = bn.apply(g, g.input(x), true);
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 3; ++c) CHECK(std::abs(g.val(y).at(r, c)) < 1e-9);
  }

  SUBCASE("train output has mean beta and std |gamma|") {
    for (int c = 0; c < 3; ++c) {
      bn.gamma->v[c] = 1.5;
      bn.beta->v[c] = -0.5;
    }
    Tensor<double> x = random_tensor(64, 3, rng, 4.0);
    Graph<double> g(false);
    VarId y = bn.apply(g, g.input(x), true);
    for (int c = 0; c < 3; ++c) {
      double mu = 0, ss = 0;
      for (int r = 0; r < 64; ++r) mu += g.val(y).at(r, c);
      mu /= 64;
      for (int r = 0; r < 64; ++r) ss += (g.val(y).at(r, c) - mu) * (g.val(y).at(r, c) - mu);
      CHECK(mu == doctest::Approx(-0.5).epsilon(1e-9));
      CHECK(std::sqrt(ss / 64) == doctest::Approx(1.5).epsilon(1e-3));  // eps floor
    }

    // matches the dense reference
    auto expect = naive::batch_norm(to_rows(x), {1.5, 1.5, 1.5}, {-0.5, -0.5, -0.5}, 1e-5);
    for (int r = 0; r < 64; ++r)
      for (int c = 0; c < 3; ++c)
        CHECK(g.val(y).at(r, c) == doctest::Approx(expect[r][c]).epsilon(1e-10));
  }

  SUBCASE("eval mode is deterministic and per-row") {
    Tensor<double> x = random_tensor(8, 3, rng);
    {
      Graph<double> g(false);
      bn.apply(g, g.input(x), true);  // populate running stats
    }
    Graph<double> g1(false), g2(false);
    VarId y1 = bn.apply(g1, g1.input(x), false);
    VarId y2 = bn.apply(g2, g2.input(x), false);
    for (size_t i = 0; i < g1.val(y1).size(); ++i)
      CHECK(g1.val(y1).v[i] == g2.val(y2).v[i]);
  }

  SUBCASE("train mode rejects a single row") {
    Graph<double> g(false);
    Tensor<double> x = random_tensor(1, 3, rng);
    CHECK_THROWS_AS(bn.apply(g, g.input(x), true), std::invalid_argument);
  }
}

TEST_CASE("sa block keeps shape and is permutation equivariant") {
  Rng rng(8);
  ParamStore<double> store;
  SaBlock<double> blk = SaBlock<double>::create(store, "sa", 8, 2, rng);

  Tensor<double> Zt = random_tensor(5, 8, rng);
  Graph<double> g(false);
  VarId out = blk.apply(g, g.input(Zt), 5, true);
  CHECK(g.val(out).rows == 5);
  CHECK(g.val(out).cols == 8);

  std::vector<int> perm = {4, 2, 0, 1, 3};
  Graph<double> gp(false);
  VarId outp = blk.apply(gp, gp.gather_rows(gp.input(Zt), perm), 5, true);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 8; ++c)
      CHECK(gp.val(outp).at(r, c) == doctest::Approx(g.val(out).at(perm[r], c)).epsilon(1e-9));
}

TEST_CASE("gradients match central finite differences") {
  Rng rng(9);
  ParamStore<double> store;
  SelfMha<double> mha = SelfMha<double>::create(store, "mha", AttnConfig::square(8, 2), rng);
  FfLayer<double> ff = FfLayer<double>::create(store, "ff", 8, rng);
  BnLayer<double> bn = BnLayer<double>::create(store, "bn", 8);
  Tensor<double> Zt = random_tensor(5, 8, rng);

  auto eval = [&]() {
    Graph<double> g2(false);
    VarId Z = g2.input(Zt);
    VarId h = g2.add(Z, mha.apply(g2, Z, 5));
    BnStats<double> local;
    local.init(8);
    h = g2.batch_norm(h, g2.param(bn.gamma), g2.param(bn.beta), &local, true);
    h = g2.add(h, ff.apply(g2, h));
    VarId sq = g2.mul_rowvec(h, g2.param(bn.gamma));
    VarId m = g2.mean_rows(g2.relu(sq));
    VarId sums = g2.sum_rows(m);
    VarId probs = g2.softmax(g2.tanh_scaled(sums, 10.0));
    return g2.val(g2.log_element(probs, 0, 0)).v[0];
  };

  Graph<double> g;
  VarId Z = g.input(Zt);
  VarId h = g.add(Z, mha.apply(g, Z, 5));
  BnStats<double> local;
  local.init(8);
  h = g.batch_norm(h, g.param(bn.gamma), g.param(bn.beta), &local, true);
  h = g.add(h, ff.apply(g, h));
  VarId sq = g.mul_rowvec(h, g.param(bn.gamma));
  VarId m = g.mean_rows(g.relu(sq));
  VarId sums = g.sum_rows(m);
  VarId probs = g.softmax(g.tanh_scaled(sums, 10.0));
  VarId lp = g.log_element(probs, 0, 0);
  std::vector<double> grads(store.flat_size(), 0.0);
  g.backward(lp, grads);

  int checked = 0;
  for (size_t pi = 0; pi < store.count(); ++pi) {
    ParamArray<double>& p = store[pi];
    for (size_t i = 0; i < p.size(); i += std::max<size_t>(1, p.size() / 5)) {
      double numeric = fd_grad(store, p, i, eval);
      check_grads_close(grads[p.offset + i], numeric);
      ++checked;
    }
  }
  CHECK(checked > 50);
}

TEST_CASE("masked logits receive zero gradient") {
  Rng rng(10);
  ParamStore<double> store;
  auto* w = store.add("w", 5, 3);
  init_uniform(*w, rng);

  Graph<double> g;
  VarId x = g.input(random_tensor(1, 3, rng));
  VarId logits = g.linear(x, g.param(w));  // [1,5]
  std::vector<uint8_t> mask = {1, 0, 1, 0, 1};
  VarId probs = g.softmax(logits, &mask);
  VarId lp = g.log_element(probs, 0, 2);
  std::vector<double> grads(store.flat_size(), 0.0);
  g.backward(lp, grads);

  // rows 1 and 3 of w only touch masked logits
  for (int c = 0; c < 3; ++c) {
    CHECK(grads[w->offset + 1 * 3 + c] == 0.0);
    CHECK(grads[w->offset + 3 * 3 + c] == 0.0);
  }
  double live = 0;
  for (int c = 0; c < 3; ++c) live += std::abs(grads[w->offset + 2 * 3 + c]);
  CHECK(live > 0.0);
}

TEST_CASE("gradient accumulation is additive over examples") {
  Rng rng(11);
  ParamStore<double> store;
  auto* w = store.add("w", 2, 3);
  init_uniform(*w, rng);
  Tensor<double> x1 = random_tensor(1, 3, rng), x2 = random_tensor(1, 3, rng);

  auto one = [&](const Tensor<double>& x, std::vector<double>& grads) {
    Graph<double> g;
    VarId probs = g.softmax(g.linear(g.input(x), g.param(w)));
    g.backward(g.log_element(probs, 0, 0), grads);
  };

  std::vector<double> ga(store.flat_size(), 0.0), gb(store.flat_size(), 0.0),
      gboth(store.flat_size(), 0.0);
  one(x1, ga);
  one(x2, gb);
  one(x1, gboth);
  one(x2, gboth);
  for (size_t i = 0; i < ga.size(); ++i)
    CHECK(gboth[i] == doctest::Approx(ga[i] + gb[i]).epsilon(1e-12));
}

TEST_CASE("param store flatten round trip") {
  Rng rng(12);
  ParamStore<float> store;
  auto* a = store.add("a", 3, 4);
  auto* b = store.add("b", 2, 2);
  init_uniform(*a, rng);
  init_uniform(*b, rng);
  auto flat = store.flatten();
  CHECK(flat.size() == 16);
  flat[0] += 1.0f;
  store.unflatten(flat);
  CHECK(store[0].v[0] == flat[0]);
  CHECK(store.find("b") == b);
}
