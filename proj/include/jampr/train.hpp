#pragma once

// REINFORCE with the greedy rollout baseline: sampled rollouts against a
// frozen best-so-far policy, advantage-weighted log-probability loss, global
// gradient clipping, Adam with a smooth per-epoch learning-rate decay, and a
// paired t-test deciding when the frozen baseline is replaced.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>

#include "jampr/env.hpp"
#include "jampr/model.hpp"
#include "jampr/stats.hpp"

namespace jampr {

struct TrainConfig {
  int epochs = 50;
  int64_t instances_per_epoch = 1024000;
  int batch_size = 512;  // 128 at problem size 50
  double lr0 = 1e-4;
  double gamma = 0.001;
  double grad_clip = 1.0;
  int warmup_epochs = 1;      // exponential-average baseline during warm-up
  double warmup_beta = 0.8;
  double ttest_alpha = 0.05;
  int val_set_size = 10000;
  int n = 20;
  uint64_t seed = 1;

  void check() const {
    if (epochs < 1 || instances_per_epoch < 1 || batch_size < 1)
      throw std::invalid_argument("train: counts must be positive");
    if (lr0 <= 0 || gamma < 0 || grad_clip <= 0)
      throw std::invalid_argument("train: bad optimizer settings");
    if (val_set_size < 2) throw std::invalid_argument("train: validation set too small");
  }
};

// eta_t = eta_{t-1} / (1 + gamma t), starting from eta_0 = lr0; epoch t >= 1.
inline double lr_schedule(double lr0, double gamma, int epoch) {
  if (epoch < 1) throw std::invalid_argument("lr_schedule: epochs are 1-based");
  double lr = lr0;
  for (int t = 1; t <= epoch; ++t) lr /= 1.0 + gamma * t;
  return lr;
}

// Scales gradients so the global L2 norm is at most max_norm; returns the
// pre-clip norm.
template <class T>
double clip_grad_norm(std::vector<T>& grads, double max_norm) {
  double ss = 0;
  for (T g : grads) ss += static_cast<double>(g) * static_cast<double>(g);
  double norm = std::sqrt(ss);
  if (norm > max_norm && norm > 0) {
    T scale = static_cast<T>(max_norm / norm);
    for (T& g : grads) g *= scale;
  }
  return norm;
}

template <class T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<T> m, v;
  int64_t t = 0;

  void init(size_t size) {
    m.assign(size, T(0));
    v.assign(size, T(0));
    t = 0;
  }

  void step(nn::ParamStore<T>& params, const std::vector<T>& grads, double lr) {
    if (m.size() != params.flat_size() || grads.size() != m.size())
      throw std::invalid_argument("adam: size mismatch");
    ++t;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t pi = 0; pi < params.count(); ++pi) {
      auto& p = params[pi];
      for (size_t i = 0; i < p.size(); ++i) {
        size_t f = p.offset + i;
        double g = grads[f];
        double mn = beta1 * m[f] + (1.0 - beta1) * g;
        double vn = beta2 * v[f] + (1.0 - beta2) * g * g;
        m[f] = static_cast<T>(mn);
        v[f] = static_cast<T>(vn);
        p.v[i] -= static_cast<T>(lr * (mn / bc1) / (std::sqrt(vn / bc2) + eps));
      }
    }
  }
};

// Deep copy: fresh parameter registration plus value and BN-stat transfer.
template <class T>
std::unique_ptr<Policy<T>> clone_policy(const Policy<T>& src) {
  auto dst = std::make_unique<Policy<T>>(src.cfg, 0);
  dst->params.unflatten(src.params.flatten());
  auto sbn = src.bn_layers();
  auto dbn = dst->bn_layers();
  for (size_t i = 0; i < sbn.size(); ++i) {
    const_cast<nn::BnLayer<T>*>(dbn[i])->stats.mean = sbn[i]->stats.mean;
    const_cast<nn::BnLayer<T>*>(dbn[i])->stats.var = sbn[i]->stats.var;
  }
  return dst;
}

struct StepMetrics {
  double mean_cost = 0;
  double mean_baseline = 0;
  double loss = 0;
  double grad_norm = 0;  // pre-clip
};

// Maps the sampled batch costs to per-lane baseline values.
using BaselineFn = std::function<std::vector<double>(const std::vector<double>&)>;

// One REINFORCE step over a batch: sampled rollouts (batch-normalized node
// encoding in train mode), advantages against the supplied baseline values,
// one clipped Adam update.
template <class T>
StepMetrics reinforce_step(Policy<T>& policy, Adam<T>& adam,
                           const std::vector<Instance>& batch, const Variant& variant,
                           const EnvConfig& env_cfg, double lr, double grad_clip_norm,
                           uint64_t rollout_seed, const BaselineFn& baseline_fn) {
  nn::Graph<T> graph(true);
  std::vector<const Instance*> ptrs;
  ptrs.reserve(batch.size());
  for (const Instance& inst : batch) ptrs.push_back(&inst);
  PolicyRunner<T> runner(graph, policy, ptrs, true);

  StepMetrics metrics;
  std::vector<nn::VarId> lp(batch.size());
  std::vector<double> costs(batch.size());
  for (size_t lane = 0; lane < batch.size(); ++lane) {
    Env env(batch[lane], variant, env_cfg);
    Rng rng(Rng::derive(rollout_seed, lane));
    RolloutResult r = runner.run(static_cast<int>(lane), env, DecodeMode::Sample, &rng);
    costs[lane] = r.cost.total;
    lp[lane] = r.logprob_var;
    metrics.mean_cost += r.cost.total;
  }
  metrics.mean_cost /= static_cast<double>(batch.size());

  std::vector<double> base = baseline_fn(costs);
  if (base.size() != batch.size()) throw std::invalid_argument("reinforce: baseline size mismatch");
  std::vector<nn::VarId> weighted;
  weighted.reserve(batch.size());
  for (size_t lane = 0; lane < batch.size(); ++lane) {
    metrics.mean_baseline += base[lane];
    double w = (costs[lane] - base[lane]) / static_cast<double>(batch.size());
    weighted.push_back(graph.scale(lp[lane], static_cast<T>(w)));
  }
  metrics.mean_baseline /= static_cast<double>(batch.size());

  nn::VarId loss = graph.add_scalars(weighted);
  metrics.loss = static_cast<double>(graph.val(loss).v[0]);
  if (!std::isfinite(metrics.loss))
    throw std::runtime_error("reinforce: non-finite loss (mean cost " +
                             std::to_string(metrics.mean_cost) + ")");

  std::vector<T> grads(policy.params.flat_size(), T(0));
  graph.backward(loss, grads);
  metrics.grad_norm = clip_grad_norm(grads, grad_clip_norm);
  adam.step(policy.params, grads, lr);
  for (size_t pi = 0; pi < policy.params.count(); ++pi)
    for (T v : policy.params[pi].v)
      if (!std::isfinite(v))
        throw std::runtime_error("reinforce: non-finite parameter in " +
                                 policy.params[pi].name + " after the update");
  return metrics;
}

// Greedy costs of a policy over an instance set (inference-mode batch norm).
template <class T>
std::vector<double> greedy_costs(const Policy<T>& policy, const std::vector<Instance>& set,
                                 const Variant& variant, const EnvConfig& env_cfg) {
  std::vector<double> out;
  out.reserve(set.size());
  for (const Instance& inst : set) {
    Env env(inst, variant, env_cfg);
    out.push_back(greedy_solve(policy, env).cost.total);
  }
  return out;
}

template <class T>
struct Baseline {
  std::unique_ptr<Policy<T>> frozen;  // best checkpoint so far
  double ema = 0;
  bool ema_ready = false;
  bool warmed = false;

  double ema_update(double batch_mean, double beta) {
    ema = ema_ready ? beta * ema + (1.0 - beta) * batch_mean : batch_mean;
    ema_ready = true;
    return ema;
  }
};

struct BaselineDecision {
  double candidate_mean = 0;
  double incumbent_mean = 0;
  double p_value = 1;
  bool replaced = false;
};

// Greedy-evaluates candidate and frozen baseline on a fresh validation set;
// replaces the frozen policy when the one-sided paired t-test is significant.
template <class T>
BaselineDecision update_baseline(const Policy<T>& candidate, Baseline<T>& baseline,
                                 const std::vector<Instance>& val_set, const Variant& variant,
                                 const EnvConfig& env_cfg, double alpha) {
  BaselineDecision out;
  std::vector<double> cand = greedy_costs(candidate, val_set, variant, env_cfg);
  std::vector<double> inc = greedy_costs(*baseline.frozen, val_set, variant, env_cfg);
  for (size_t i = 0; i < cand.size(); ++i) {
    out.candidate_mean += cand[i];
    out.incumbent_mean += inc[i];
  }
  out.candidate_mean /= static_cast<double>(cand.size());
  out.incumbent_mean /= static_cast<double>(inc.size());
  PairedTTest test = paired_t_test(cand, inc);
  out.p_value = test.p_less;
  if (test.p_less < alpha) {
    baseline.frozen = clone_policy(candidate);
    out.replaced = true;
  }
  return out;
}

struct EpochRow {
  int epoch = 0;
  double train_cost = 0;
  double val_cost = 0;
  double lr = 0;
  double seconds = 0;
};

struct TrainHooks {
  std::function<void(const EpochRow&)> on_epoch;  // optional
};

using InstanceSampler = std::function<Instance(int n, uint64_t seed)>;

template <class T>
struct Trainer {
  TrainConfig cfg;
  Variant variant;
  EnvConfig env_cfg;
  InstanceSampler sample;
  std::string out_dir;  // empty: no checkpoint files

  std::vector<EpochRow> run(Policy<T>& policy, Adam<T>& adam, int start_epoch = 1,
                            const TrainHooks& hooks = {}) {
    cfg.check();
    if (adam.m.size() != policy.params.flat_size()) adam.init(policy.params.flat_size());

    Baseline<T> baseline;
    baseline.frozen = clone_policy(policy);
    baseline.warmed = start_epoch > cfg.warmup_epochs;
    if (baseline.warmed && !out_dir.empty()) {
      // resuming: prefer the recorded best checkpoint as the frozen baseline
      std::string best = out_dir + "/best.ckpt";
      if (std::filesystem::exists(best))
        baseline.frozen = std::move(load_checkpoint_file<T>(best).first);
    }

    std::vector<EpochRow> log;
    // at least instances_per_epoch instances, rounded up to whole batches
    int64_t batches = (cfg.instances_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      double lr = lr_schedule(cfg.lr0, cfg.gamma, epoch);
      double cost_sum = 0;

      for (int64_t b = 0; b < batches; ++b) {
        uint64_t batch_seed = Rng::derive(Rng::derive(cfg.seed, 0xE000 + epoch), b);
        std::vector<Instance> batch;
        batch.reserve(cfg.batch_size);
        for (int lane = 0; lane < cfg.batch_size; ++lane)
          batch.push_back(sample(cfg.n, Rng::derive(batch_seed, 2 * lane)));

        BaselineFn baseline_fn;
        if (!baseline.warmed) {
          // exponential average over batch means, updated with the current
          // batch before use
          Baseline<T>* bl = &baseline;
          double beta = cfg.warmup_beta;
          baseline_fn = [bl, beta](const std::vector<double>& costs) {
            double mean = 0;
            for (double c : costs) mean += c;
            mean /= static_cast<double>(costs.size());
            double v = bl->ema_update(mean, beta);
            return std::vector<double>(costs.size(), v);
          };
        } else {
          // greedy rollout of the frozen best policy, per lane
          auto greedy = std::make_shared<std::vector<double>>(
              greedy_costs(*baseline.frozen, batch, variant, env_cfg));
          baseline_fn = [greedy](const std::vector<double>&) { return *greedy; };
        }

        StepMetrics sm = reinforce_step(policy, adam, batch, variant, env_cfg, lr,
                                        cfg.grad_clip, Rng::derive(batch_seed, 0xABCD),
                                        baseline_fn);
        cost_sum += sm.mean_cost;
      }

      // fresh validation set each epoch
      uint64_t val_seed = Rng::derive(Rng::derive(cfg.seed, 0xF000), epoch);
      std::vector<Instance> val_set;
      val_set.reserve(cfg.val_set_size);
      for (int i = 0; i < cfg.val_set_size; ++i)
        val_set.push_back(sample(cfg.n, Rng::derive(val_seed, i)));

      EpochRow row;
      row.epoch = epoch;
      row.train_cost = cost_sum / static_cast<double>(batches);
      row.lr = lr;

      if (epoch <= cfg.warmup_epochs) {
        auto costs = greedy_costs(policy, val_set, variant, env_cfg);
        for (double c : costs) row.val_cost += c;
        row.val_cost /= static_cast<double>(costs.size());
        if (epoch == cfg.warmup_epochs) {
          baseline.frozen = clone_policy(policy);
          baseline.warmed = true;
          write_best(policy);
        }
      } else {
        BaselineDecision dec = update_baseline(policy, baseline, val_set, variant, env_cfg,
                                               cfg.ttest_alpha);
        row.val_cost = dec.candidate_mean;
        if (dec.replaced) write_best(policy);
      }

      row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log.push_back(row);
      if (hooks.on_epoch) hooks.on_epoch(row);
      if (!out_dir.empty()) write_epoch(policy, adam, epoch);
    }
    return log;
  }

 private:
  void write_best(const Policy<T>& policy) {
    if (out_dir.empty()) return;
    save_checkpoint_file(out_dir + "/best.ckpt", policy, variant, env_cfg.m_pre);
  }

  void write_epoch(const Policy<T>& policy, const Adam<T>& adam, int epoch) {
    CheckpointExtras extras;
    extras.adam_m.assign(adam.m.begin(), adam.m.end());
    extras.adam_v.assign(adam.v.begin(), adam.v.end());
    extras.adam_t = adam.t;
    extras.epoch = epoch;
    char name[32];
    std::snprintf(name, sizeof(name), "/epoch_%03d.ckpt", epoch);
    save_checkpoint_file(out_dir + name, policy, variant, env_cfg.m_pre, &extras);
  }
};

inline void write_metrics_csv(std::ostream& out, const std::vector<EpochRow>& rows) {
  out << "epoch,train_cost,val_cost,lr,seconds\n";
  out << std::setprecision(17);
  for (const EpochRow& r : rows)
    out << r.epoch << ',' << r.train_cost << ',' << r.val_cost << ',' << r.lr << ','
        << std::setprecision(3) << std::fixed << r.seconds << std::defaultfloat
        << std::setprecision(17) << "\n";
}

}  // namespace jampr
