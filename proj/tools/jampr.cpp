// Command-line surface: instance generation, training, solving, evaluation,
// Solomon benchmark runs, SVG plots and solution validation.
//
// Exit codes: 0 ok, 1 usage, 2 infeasible / validation failure, 3 IO or
// parse error. JAMPR_DATA_DIR provides the default data directory.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <thread>

#include "CLI11.hpp"
#include "jampr/env.hpp"
#include "jampr/instance.hpp"
#include "jampr/model.hpp"
#include "jampr/plot.hpp"
#include "jampr/report.hpp"
#include "jampr/train.hpp"

using namespace jampr;
namespace fs = std::filesystem;
using Scalar = float;

namespace {

struct VariantOpts {
  std::string kind = "tw1";
  double alpha = -1, beta = -1;  // negative: variant default
  std::string penalty = "linear";
  int includes_wait = -1;

  Variant build() const {
    Variant v = Variant::make(variant_kind_from(kind));
    if (alpha >= 0) v.alpha = alpha;
    if (beta >= 0) v.beta = beta;
    v.penalty = penalty == "quadratic" ? PenaltyFn::Quadratic : PenaltyFn::Linear;
    if (includes_wait >= 0) v.cost_includes_wait = includes_wait != 0;
    v.check();
    return v;
  }
};

void add_variant_opts(CLI::App* cmd, VariantOpts& vo) {
  cmd->add_option("--variant", vo.kind, "Problem variant: cvrp, tw1, tw2 or tw3")
      ->check(CLI::IsMember({"cvrp", "tw1", "tw2", "tw3"}));
  cmd->add_option("--alpha", vo.alpha, "Early-deviation weight (variant default when unset)");
  cmd->add_option("--beta", vo.beta, "Late-deviation weight (variant default when unset)");
  cmd->add_option("--penalty", vo.penalty, "Penalty shape")
      ->check(CLI::IsMember({"linear", "quadratic"}));
  cmd->add_option("--cost-includes-wait", vo.includes_wait,
                  "1: waiting priced at weight alpha (default), 0: arc costs only");
}

int default_m_con(VariantKind kind, int n) {
  if (kind == VariantKind::CVRP) return n >= 50 ? 2 : 1;
  return kind == VariantKind::TW1 ? 4 : 1;
}

// Key-value config file in the instance-header style; command-line flags win.
void apply_config_file(CLI::App* cmd, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config file " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream iss(line);
    std::string key, value;
    iss >> key;
    std::getline(iss, value);
    value.erase(0, value.find_first_not_of(" \t"));
    CLI::Option* opt = cmd->get_option_no_throw("--" + key);
    if (!opt) throw parse_error("config file: unknown key '" + key + "'");
    if (opt->count() == 0) opt->add_result(value);
  }
}

std::string data_dir() {
  const char* env = std::getenv("JAMPR_DATA_DIR");
  return env ? env : ".";
}

struct Solver {
  std::string checkpoint;  // path or "random"
  std::string mode = "greedy";
  int samples = 0;  // 0: mode default
  uint64_t seed = 1;
  int m_con_override = 0;
  int m_pre_override = -1;

  std::unique_ptr<Policy<Scalar>> policy;
  CheckpointHeader header;
  bool random() const { return checkpoint == "random"; }

  void load(const VariantOpts& vo, bool variant_given) {
    if (random()) {
      header.variant = vo.build();
      header.m_pre = header.variant.kind == VariantKind::CVRP ? 3 : 6;
      return;
    }
    auto [p, h] = load_checkpoint_file<Scalar>(checkpoint);
    policy = std::move(p);
    header = h;
    if (variant_given && variant_kind_from(vo.kind) != header.variant.kind)
      throw checkpoint_error("checkpoint was trained for variant " +
                             std::string(to_string(header.variant.kind)) +
                             ", conflicting --variant given");
  }

  EnvConfig env_config(int n) const {
    EnvConfig cfg = EnvConfig::defaults(header.variant.kind, n);
    cfg.m_pre = m_pre_override >= 0 ? m_pre_override : header.m_pre;
    if (random())
      cfg.m_con = 1;
    else
      cfg.m_con = m_con_override > 0 ? m_con_override : header.model.m_con;
    return cfg;
  }

  int sample_count() const {
    if (samples > 0) return samples;
    if (random()) return 1000;
    return mode == "sample" ? 1280 : 1;
  }

  // Solves one instance; wall time of the whole per-instance computation.
  SolveResult solve(const Instance& inst, uint64_t inst_seed, double* seconds) const {
    auto t0 = std::chrono::steady_clock::now();
    SolveResult res;
    if (random()) {
      RandomSolveResult r = random_solve(inst, header.variant, sample_count(), inst_seed);
      res.best = std::move(r.best);
      res.cost = std::move(r.cost);
      res.samples = r.samples;
    } else {
      Env env(inst, header.variant, env_config(inst.n()));
      res = mode == "sample" ? sample_solve(*policy, env, sample_count(), inst_seed)
                             : greedy_solve(*policy, env);
    }
    if (seconds)
      *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
  }
};

void add_solver_opts(CLI::App* cmd, Solver& sv, VariantOpts& vo) {
  cmd->add_option("--checkpoint", sv.checkpoint, "Checkpoint path, or 'random'")->required();
  cmd->add_option("--mode", sv.mode, "greedy or sample (ignored for random)")
      ->check(CLI::IsMember({"greedy", "sample"}));
  cmd->add_option("-n,--samples", sv.samples,
                  "Samples for sample/random modes (defaults 1280 / 1000)");
  cmd->add_option("--seed", sv.seed, "Sampling seed");
  cmd->add_option("--m-con", sv.m_con_override, "Override the checkpoint's m_con");
  cmd->add_option("--m-pre", sv.m_pre_override, "Override the premature-return budget");
  add_variant_opts(cmd, vo);
}

EvalRow eval_one(const Solver& sv, const Instance& inst, const std::string& name,
                 uint64_t inst_seed) {
  double seconds = 0;
  SolveResult res = sv.solve(inst, inst_seed, &seconds);
  EvalRow row;
  row.instance = name;
  row.cost = res.cost.total;
  row.k = res.cost.k;
  row.distance = res.cost.distance;
  row.duration = res.cost.duration;
  row.early_pen = res.cost.early_pen;
  row.late_pen = res.cost.late_pen;
  row.seconds = seconds;
  return row;
}

template <class Work>
void parallel_over(int count, int jobs, Work work) {
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) work(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int j = 0; j < jobs; ++j)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < count; i = next.fetch_add(1)) work(i);
    });
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------

int cmd_generate(int n, int count, const std::string& variant, uint64_t seed,
                 const std::string& out, double capacity, double horizon, double service) {
  fs::create_directories(out);
  std::ofstream manifest(out + "/manifest.txt");
  if (!manifest) throw parse_error("cannot write manifest in " + out);
  manifest << "# n " << n << " variant " << variant << " seed " << seed << "\n";
  for (int i = 0; i < count; ++i) {
    uint64_t s = Rng::derive(seed, i);
    Instance inst;
    if (variant == "cvrp") {
      inst = generate_cvrp(n, s, capacity > 0 ? std::optional<double>(capacity) : std::nullopt);
    } else {
      GenParams gp;
      if (horizon > 0) gp.horizon = horizon;
      if (service >= 0) gp.service = service;
      if (capacity > 0) gp.capacity = capacity;
      inst = generate_cvrptw(n, s, gp);
    }
    char name[64];
    std::snprintf(name, sizeof(name), "instance_%05d.vrp", i);
    save_instance_file(inst, out + "/" + name);
    manifest << name << ' ' << s << "\n";
  }
  std::cout << "wrote " << count << " instances to " << out << "\n";
  return 0;
}

int cmd_solve(const std::string& instance_path, Solver& sv, const std::string& out_path) {
  Instance inst = load_instance_file(instance_path);
  double seconds = 0;
  SolveResult res = sv.solve(inst, sv.seed, &seconds);
  ValidationReport rep = validate(inst, res.best, sv.header.variant);
  std::string out = out_path.empty() ? instance_path + ".sol" : out_path;
  save_solution_file(out, res.best, res.cost.total);
  std::cout << "cost " << res.cost.total << "  k " << res.cost.k << "  dist "
            << res.cost.distance << "  dur " << res.cost.duration << "  t " << seconds
            << "s  -> " << out << "\n";
  if (!rep.ok()) {
    for (const auto& viol : rep.violations)
      std::cerr << "violation [" << viol.kind << "] tour " << viol.tour << ": " << viol.detail
                << "\n";
    return 2;
  }
  return 0;
}

int cmd_eval(const std::string& dir, Solver& sv, const std::string& out_csv, int jobs,
             bool allow_mixed) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".vrp") files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw parse_error("no .vrp instances in " + dir);

  std::vector<Instance> instances;
  instances.reserve(files.size());
  for (const auto& f : files) instances.push_back(load_instance_file(f));
  for (const Instance& inst : instances)
    if (!allow_mixed && inst.n() != instances[0].n())
      throw std::invalid_argument("mixed instance sizes; pass --allow-mixed to proceed");

  EvalReport report;
  report.policy = sv.checkpoint;
  report.mode = sv.random() ? "random" : sv.mode;
  report.variant = to_string(sv.header.variant.kind);
  report.m_con = sv.env_config(instances[0].n()).m_con;
  report.n_samples = sv.sample_count();
  report.seed = sv.seed;
  report.rows.resize(files.size());

  parallel_over(static_cast<int>(files.size()), jobs, [&](int i) {
    report.rows[i] = eval_one(sv, instances[i], fs::path(files[i]).filename().string(),
                              Rng::derive(sv.seed, i));
  });

  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw parse_error("cannot open " + out_csv + " for writing");
    report.write_csv(out);
  }
  std::cout << format_eval_table(report);
  return 0;
}

int cmd_benchmark(const std::vector<std::string>& files, Solver& sv, bool splits,
                  bool due_minus_service, const std::string& out_csv, int jobs) {
  struct Item {
    std::string name;
    Instance inst;
  };
  std::vector<Item> items;
  for (const auto& f : files) {
    try {
      Instance inst = parse_solomon_file(f, due_minus_service);
      std::string base = fs::path(f).stem().string();
      if (splits && inst.n() == 100) {
        items.push_back({base + "-50a", split_instance(inst, Half::First)});
        items.push_back({base + "-50b", split_instance(inst, Half::Second)});
      } else {
        items.push_back({base, std::move(inst)});
      }
    } catch (const std::exception& e) {
      std::cerr << "parse error in " << f << ": " << e.what() << "\n";
    }
  }
  if (items.empty()) throw parse_error("no benchmark instance parsed");

  EvalReport report;
  report.policy = sv.checkpoint;
  report.mode = sv.random() ? "random" : sv.mode;
  report.variant = to_string(sv.header.variant.kind);
  report.n_samples = sv.sample_count();
  report.seed = sv.seed;
  report.rows.resize(items.size());
  parallel_over(static_cast<int>(items.size()), jobs, [&](int i) {
    report.rows[i] = eval_one(sv, items[i].inst, items[i].name, Rng::derive(sv.seed, i));
  });

  if (!out_csv.empty()) {
    std::ofstream out(out_csv);
    if (!out) throw parse_error("cannot open " + out_csv + " for writing");
    report.write_csv(out);
  }

  // aggregate per benchmark family: leading letters plus the series digit
  std::map<std::string, EvalReport> groups;
  for (const EvalRow& row : report.rows) {
    std::string family;
    for (char c : row.instance) {
      if (std::isdigit(static_cast<unsigned char>(c))) break;
      family.push_back(c);
    }
    if (row.instance.size() > family.size()) family.push_back(row.instance[family.size()]);
    groups[family].rows.push_back(row);
  }
  for (auto& [family, grp] : groups) {
    grp.policy = report.policy;
    grp.mode = report.mode;
    grp.variant = report.variant;
    std::cout << family << " (" << grp.rows.size() << " instances)\n" << format_eval_table(grp);
  }
  for (const EvalRow& row : report.rows)
    std::cout << "  " << row.instance << ": cost " << row.cost << " k " << row.k << " dist "
              << row.distance << " t " << row.seconds << "s\n";
  return 0;
}

Instance load_any_instance(const std::string& path) {
  if (path.ends_with(".txt")) return parse_solomon_file(path);
  return load_instance_file(path);
}

int cmd_plot(const std::string& instance_path, const std::string& solution_path,
             const std::string& out_path, VariantOpts& vo, bool variant_given) {
  Instance inst = load_any_instance(instance_path);
  auto [sol, recorded_cost] = load_solution_file(solution_path);
  (void)recorded_cost;
  if (!variant_given && inst.variant_hint == VariantHint::CVRP) vo.kind = "cvrp";
  std::string svg = render_svg(inst, sol, vo.build());
  std::ofstream out(out_path);
  if (!out) throw parse_error("cannot open " + out_path + " for writing");
  out << svg;
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_validate(const std::string& instance_path, const std::string& solution_path,
                 VariantOpts& vo, bool variant_given) {
  Instance inst = load_any_instance(instance_path);
  if (!variant_given && inst.variant_hint == VariantHint::CVRP) vo.kind = "cvrp";
  Variant variant = vo.build();
  auto [sol, recorded_cost] = load_solution_file(solution_path);
  ValidationReport rep = validate(inst, sol, variant);
  if (rep.ok()) {
    try {
      CostBreakdown cb = cost(inst, sol, variant);
      std::cout << "valid: cost " << cb.total << " (recorded " << recorded_cost << ") k "
                << cb.k << "\n";
    } catch (const infeasible_solution_error& e) {
      std::cout << "structurally valid, but: " << e.what() << "\n";
      return 2;
    }
    return 0;
  }
  for (const auto& viol : rep.violations)
    std::cout << "violation [" << viol.kind << "] tour " << viol.tour << ": " << viol.detail
              << "\n";
  return 2;
}

int cmd_train(int n, const std::string& policy_name, VariantOpts& vo, TrainConfig tc,
              ModelConfig mc, int m_con, int m_pre, const std::string& out,
              const std::string& resume, bool tiny, double capacity, double horizon,
              double service, bool batch_size_given) {
  Variant variant = vo.build();
  PolicyKind pk = policy_kind_from(policy_name);
  if (tiny) {
    ModelConfig t = ModelConfig::tiny(pk, variant.kind, m_con > 0 ? m_con : 2);
    mc = t;
  } else {
    mc.policy = pk;
    mc.variant = variant.kind;
    mc.m_con = m_con > 0 ? m_con : default_m_con(variant.kind, n);
  }
  if (pk != PolicyKind::JAMPR) mc.m_con = 1;

  EnvConfig env_cfg = EnvConfig::defaults(variant.kind, n);
  env_cfg.m_con = mc.m_con;
  if (m_pre >= 0) env_cfg.m_pre = m_pre;

  tc.n = n;
  if (!batch_size_given && n >= 50) tc.batch_size = 128;
  tc.check();

  std::unique_ptr<Policy<Scalar>> policy;
  Adam<Scalar> adam;
  int start_epoch = 1;
  if (!resume.empty()) {
    CheckpointExtras extras;
    auto [p, header] = load_checkpoint_file<Scalar>(resume, &extras);
    policy = std::move(p);
    if (header.variant.kind != variant.kind)
      throw checkpoint_error("resume checkpoint has a different variant");
    if (extras.has_moments()) {
      adam.m.assign(extras.adam_m.begin(), extras.adam_m.end());
      adam.v.assign(extras.adam_v.begin(), extras.adam_v.end());
      adam.t = extras.adam_t;
      start_epoch = extras.epoch + 1;
    }
  } else {
    policy = std::make_unique<Policy<Scalar>>(mc, tc.seed);
  }

  if (!out.empty()) fs::create_directories(out);
  Trainer<Scalar> trainer;
  trainer.cfg = tc;
  trainer.variant = variant;
  trainer.env_cfg = env_cfg;
  trainer.out_dir = out;
  if (variant.kind == VariantKind::CVRP) {
    std::optional<double> cap = capacity > 0 ? std::optional<double>(capacity) : std::nullopt;
    trainer.sample = [cap](int size, uint64_t s) { return generate_cvrp(size, s, cap); };
  } else {
    GenParams gp;
    if (horizon > 0) gp.horizon = horizon;
    if (service >= 0) gp.service = service;
    if (capacity > 0) gp.capacity = capacity;
    trainer.sample = [gp](int size, uint64_t s) { return generate_cvrptw(size, s, gp); };
  }

  std::ofstream metrics;
  if (!out.empty()) {
    metrics.open(out + "/metrics.csv", start_epoch > 1 ? std::ios::app : std::ios::out);
    if (start_epoch == 1) metrics << "epoch,train_cost,val_cost,lr,seconds\n";
  }
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochRow& row) {
    std::cout << "epoch " << row.epoch << ": train " << row.train_cost << " val "
              << row.val_cost << " lr " << row.lr << " (" << row.seconds << "s)\n";
    if (metrics.is_open()) {
      metrics << row.epoch << ',' << std::setprecision(17) << row.train_cost << ','
              << row.val_cost << ',' << row.lr << ',' << std::fixed << std::setprecision(3)
              << row.seconds << std::defaultfloat << "\n";
      metrics.flush();
    }
  };
  trainer.run(*policy, adam, start_epoch, hooks);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint attention model for parallel route construction"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "Sample instances to a directory");
  int gen_n = 20, gen_count = 10;
  std::string gen_variant = "cvrptw", gen_out = data_dir() + "/instances";
  uint64_t gen_seed = 1;
  double gen_capacity = 0, gen_horizon = 0, gen_service = -1;
  gen->add_option("--n", gen_n, "Customers per instance")->required();
  gen->add_option("--count", gen_count, "Number of instances")->required();
  gen->add_option("--variant", gen_variant, "cvrp or cvrptw")
      ->check(CLI::IsMember({"cvrp", "cvrptw"}));
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_option("--out", gen_out, "Output directory");
  gen->add_option("--capacity", gen_capacity, "Explicit vehicle capacity");
  gen->add_option("--horizon", gen_horizon, "Planning horizon (cvrptw)");
  gen->add_option("--service", gen_service, "Service duration (cvrptw)");

  // solve
  auto* solve = app.add_subcommand("solve", "Solve one instance file");
  std::string solve_instance, solve_out, solve_config;
  Solver solve_sv;
  VariantOpts solve_vo;
  solve->add_option("--instance", solve_instance, "Instance file (.vrp)")->required();
  solve->add_option("--out", solve_out, "Solution output path (default <instance>.sol)");
  solve->add_option("--config", solve_config, "Key-value config file");
  add_solver_opts(solve, solve_sv, solve_vo);

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a directory of instances");
  std::string eval_dir, eval_out, eval_config;
  int eval_jobs = 1;
  bool eval_mixed = false;
  Solver eval_sv;
  VariantOpts eval_vo;
  eval->add_option("--dir", eval_dir, "Directory with .vrp files")->required();
  eval->add_option("--out", eval_out, "Report CSV path");
  eval->add_option("--jobs", eval_jobs, "Parallel instances (timings overlap when > 1)");
  eval->add_flag("--allow-mixed", eval_mixed, "Allow mixed instance sizes");
  eval->add_option("--config", eval_config, "Key-value config file");
  add_solver_opts(eval, eval_sv, eval_vo);

  // benchmark
  auto* bench = app.add_subcommand("benchmark", "Run Solomon-format benchmark files");
  std::vector<std::string> bench_files;
  std::string bench_out;
  bool bench_splits = false, bench_dms = false;
  int bench_jobs = 1;
  Solver bench_sv;
  VariantOpts bench_vo;
  bench->add_option("--files", bench_files, "Solomon benchmark files")->required();
  bench->add_flag("--splits", bench_splits, "Split 100-customer instances into two halves");
  bench->add_flag("--due-minus-service", bench_dms, "Interpret DUE DATE as due - service");
  bench->add_option("--out", bench_out, "Report CSV path");
  bench->add_option("--jobs", bench_jobs, "Parallel instances");
  add_solver_opts(bench, bench_sv, bench_vo);

  // plot
  auto* plot = app.add_subcommand("plot", "Render an SVG of a solution");
  std::string plot_instance, plot_solution, plot_out = "solution.svg";
  VariantOpts plot_vo;
  plot->add_option("--instance", plot_instance, "Instance file (.vrp or Solomon .txt)")
      ->required();
  plot->add_option("--solution", plot_solution, "Solution file (.sol)")->required();
  plot->add_option("--out", plot_out, "SVG output path");
  add_variant_opts(plot, plot_vo);

  // validate
  auto* val = app.add_subcommand("validate", "Check a solution against an instance");
  std::string val_instance, val_solution;
  VariantOpts val_vo;
  val->add_option("--instance", val_instance, "Instance file (.vrp or Solomon .txt)")
      ->required();
  val->add_option("--solution", val_solution, "Solution file (.sol)")->required();
  add_variant_opts(val, val_vo);

  // train
  auto* train = app.add_subcommand("train", "Train a policy");
  int tr_n = 20, tr_mcon = 0, tr_mpre = -1;
  std::string tr_policy = "jampr", tr_out = "runs/default", tr_resume;
  bool tr_tiny = false;
  VariantOpts tr_vo;
  TrainConfig tr_cfg;
  ModelConfig tr_mc;
  train->add_option("--n", tr_n, "Customers per training instance");
  train->add_option("--policy", tr_policy, "jampr, am or amtw")
      ->check(CLI::IsMember({"jampr", "am", "amtw"}));
  train->add_option("--m-con", tr_mcon, "Concurrently active vehicles");
  train->add_option("--m-pre", tr_mpre, "Premature-return budget");
  train->add_option("--epochs", tr_cfg.epochs, "Training epochs");
  train->add_option("--instances-per-epoch", tr_cfg.instances_per_epoch, "Instances per epoch");
  train->add_option("--batch-size", tr_cfg.batch_size, "Batch size");
  train->add_option("--lr", tr_cfg.lr0, "Initial learning rate");
  train->add_option("--gamma", tr_cfg.gamma, "Learning-rate decay factor");
  train->add_option("--clip", tr_cfg.grad_clip, "Gradient-norm clip");
  train->add_option("--val-size", tr_cfg.val_set_size, "Validation set size per epoch");
  train->add_option("--seed", tr_cfg.seed, "Training seed");
  train->add_option("--out", tr_out, "Run directory for checkpoints and metrics");
  train->add_option("--resume", tr_resume, "Checkpoint to resume from");
  train->add_flag("--tiny", tr_tiny, "Small preset (d_emb 32, 4 heads, slim decoder)");
  train->add_option("--d-emb", tr_mc.d_emb, "Embedding width");
  train->add_option("--heads", tr_mc.heads, "Attention heads");
  train->add_option("--blocks", tr_mc.n_blocks, "Encoder self-attention blocks");
  train->add_option("--enc-hidden", tr_mc.enc_hidden, "Vehicle/tour encoder hidden width");
  train->add_option("--d-dec", tr_mc.d_dec, "Decoder hidden width");
  double tr_capacity = 0, tr_horizon = 0, tr_service = -1;
  train->add_option("--capacity", tr_capacity, "Explicit vehicle capacity for the sampler");
  train->add_option("--horizon", tr_horizon, "Planning horizon for the sampler (cvrptw)");
  train->add_option("--service", tr_service, "Service duration for the sampler (cvrptw)");
  add_variant_opts(train, tr_vo);

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(gen_n, gen_count, gen_variant, gen_seed, gen_out, gen_capacity,
                          gen_horizon, gen_service);
    if (solve->parsed()) {
      if (!solve_config.empty()) apply_config_file(solve, solve_config);
      solve_sv.load(solve_vo, solve->count("--variant") > 0);
      return cmd_solve(solve_instance, solve_sv, solve_out);
    }
    if (eval->parsed()) {
      if (!eval_config.empty()) apply_config_file(eval, eval_config);
      eval_sv.load(eval_vo, eval->count("--variant") > 0);
      return cmd_eval(eval_dir, eval_sv, eval_out, eval_jobs, eval_mixed);
    }
    if (bench->parsed()) {
      bench_sv.load(bench_vo, bench->count("--variant") > 0);
      return cmd_benchmark(bench_files, bench_sv, bench_splits, bench_dms, bench_out,
                           bench_jobs);
    }
    if (plot->parsed())
      return cmd_plot(plot_instance, plot_solution, plot_out, plot_vo,
                      plot->count("--variant") > 0);
    if (val->parsed())
      return cmd_validate(val_instance, val_solution, val_vo, val->count("--variant") > 0);
    if (train->parsed())
      return cmd_train(tr_n, tr_policy, tr_vo, tr_cfg, tr_mc, tr_mcon, tr_mpre, tr_out,
                       tr_resume, tr_tiny, tr_capacity, tr_horizon, tr_service,
                       train->count("--batch-size") > 0);
  } catch (const infeasible_state_error& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const infeasible_solution_error& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 2;
  } catch (const parse_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const checkpoint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
