#pragma once

// Config-driven experiment grid: one cell per (alpha, tau, seed) runs
// policy -> simulate -> train -> evaluate -> diagnose and persists the results
// under <out>/<run_id>/.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "towerlab/clicks.hpp"
#include "towerlab/data.hpp"
#include "towerlab/diagnostics.hpp"
#include "towerlab/eval.hpp"
#include "towerlab/io.hpp"
#include "towerlab/log.hpp"
#include "towerlab/model.hpp"
#include "towerlab/policy.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/synth.hpp"
#include "towerlab/tables.hpp"
#include "towerlab/towers.hpp"

namespace towerlab {

namespace fs = std::filesystem;

enum class LabelSource { expert, linear, nonlinear };

inline std::string_view to_string(LabelSource s) {
  switch (s) {
    case LabelSource::expert: return "expert";
    case LabelSource::linear: return "linear";
    case LabelSource::nonlinear: return "nonlinear";
  }
  return "?";
}

inline LabelSource parse_label_source(std::string_view s) {
  if (s == "expert") return LabelSource::expert;
  if (s == "linear") return LabelSource::linear;
  if (s == "nonlinear") return LabelSource::nonlinear;
  throw std::invalid_argument("unknown label source '" + std::string(s) + "'");
}

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string name = "experiment";
  fs::path train, valid, test;
  std::size_t truncate = 25;
  bool drop_irrelevant = true;
  bool normalize = true;

  LabelSource labels = LabelSource::linear;
  std::uint64_t label_seed = 7;
  double label_noise = 0.2;

  PolicyKind policy = PolicyKind::trained;
  TowerKind policy_tower = TowerKind::linear;
  std::vector<std::size_t> policy_features;  // 0-based; empty = all
  std::vector<std::size_t> model_features;

  std::vector<double> alphas{1.0};
  std::vector<double> taus{0.0, 0.5, 1.0};
  TowerKind tower = TowerKind::linear;
  LossKind loss = LossKind::nll;
  std::uint64_t sessions_train = 200'000;
  std::uint64_t sessions_valid = 100'000;
  std::vector<std::uint64_t> seeds{1, 2, 3};

  double learning_rate = 0.003;
  double weight_decay = 0.01;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  std::size_t batch_size = 1024;
  double ips_max_weight = 100.0;
  bool weighted_early_stopping = true;

  bool overlap = true;
  std::optional<double> overlap_eps;

  fs::path out = "runs";
  std::size_t jobs = 1;

  void validate() const {
    if (train.empty()) throw ConfigError("config: 'train' dataset path is required");
    if (alphas.empty() || taus.empty() || seeds.empty()) throw ConfigError("config: alpha, tau and seeds must be non-empty");
    for (double a : alphas) {
      if (!(a >= -1.0 && a <= 1.0)) throw ConfigError("config: alpha " + format_double(a) + " outside [-1, 1]");
    }
    for (double t : taus) {
      if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("config: tau " + format_double(t) + " outside [0, 1]");
    }
    if (sessions_train == 0 || sessions_valid == 0) throw ConfigError("config: session counts must be positive");
    if (policy == PolicyKind::trained && policy_tower == TowerKind::embedding) {
      throw ConfigError("config: policy_tower must be linear or mlp");
    }
    if (!(label_noise >= 0.0)) throw ConfigError("config: label_noise must be >= 0");
    if (overlap_eps && !(*overlap_eps > 0.0)) throw ConfigError("config: overlap_eps must be positive");
    if (jobs == 0) throw ConfigError("config: jobs must be >= 1");
    training().validate();
  }

  TrainConfig training(std::uint64_t seed = 0) const {
    TrainConfig c;
    c.learning_rate = learning_rate;
    c.weight_decay = weight_decay;
    c.max_epochs = max_epochs;
    c.patience = patience;
    c.batch_size = batch_size;
    c.loss = loss;
    c.ips_max_weight = ips_max_weight;
    c.weighted_early_stopping = weighted_early_stopping;
    c.seed = seed;
    return c;
  }
};

namespace detail {

inline bool parse_bool(std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

inline double need_double(std::string_view v) {
  const auto d = parse_double(v);
  if (!d) throw ConfigError("expected a number, got '" + std::string(v) + "'");
  return *d;
}

template <class Int>
Int need_int(std::string_view v) {
  const auto i = parse_int<Int>(v);
  if (!i) throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return *i;
}

template <class F>
auto parse_list(std::string_view v, F&& item) {
  std::vector<decltype(item(std::string_view{}))> out;
  if (trim(v).empty()) return out;
  for (auto part : split(v, ',')) out.push_back(item(trim(part)));
  return out;
}

inline std::string join_doubles(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_double(v[i]);
  return s;
}

template <class Int>
std::string join_ints(const std::vector<Int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline fs::path resolve(std::string_view v, const fs::path& base) {
  fs::path p{std::string(v)};
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace detail

/// Applies one `key = value` setting. Relative paths resolve against `base`.
inline void set_config_value(ExperimentConfig& c, std::string_view key, std::string_view value,
                             const fs::path& base = {}) {
  using namespace detail;
  const auto v = trim(value);
  try {
    if (key == "name") c.name = std::string(v);
    else if (key == "train") c.train = resolve(v, base);
    else if (key == "valid") c.valid = v.empty() ? fs::path{} : resolve(v, base);
    else if (key == "test") c.test = v.empty() ? fs::path{} : resolve(v, base);
    else if (key == "truncate") c.truncate = need_int<std::size_t>(v);
    else if (key == "drop_irrelevant") c.drop_irrelevant = parse_bool(v);
    else if (key == "normalize") c.normalize = parse_bool(v);
    else if (key == "labels") c.labels = parse_label_source(v);
    else if (key == "label_seed") c.label_seed = need_int<std::uint64_t>(v);
    else if (key == "label_noise") c.label_noise = need_double(v);
    else if (key == "policy") c.policy = parse_policy_kind(v);
    else if (key == "policy_tower") c.policy_tower = parse_tower_kind(v);
    else if (key == "policy_features") c.policy_features = parse_list(v, need_int<std::size_t>);
    else if (key == "model_features") c.model_features = parse_list(v, need_int<std::size_t>);
    else if (key == "alpha") c.alphas = parse_list(v, need_double);
    else if (key == "tau") c.taus = parse_list(v, need_double);
    else if (key == "tower") c.tower = parse_tower_kind(v);
    else if (key == "loss") c.loss = parse_loss_kind(v);
    else if (key == "sessions_train") c.sessions_train = need_int<std::uint64_t>(v);
    else if (key == "sessions_valid") c.sessions_valid = need_int<std::uint64_t>(v);
    else if (key == "seeds") c.seeds = parse_list(v, need_int<std::uint64_t>);
    else if (key == "learning_rate") c.learning_rate = need_double(v);
    else if (key == "weight_decay") c.weight_decay = need_double(v);
    else if (key == "max_epochs") c.max_epochs = need_int<std::size_t>(v);
    else if (key == "patience") c.patience = need_int<std::size_t>(v);
    else if (key == "batch_size") c.batch_size = need_int<std::size_t>(v);
    else if (key == "ips_max_weight") c.ips_max_weight = need_double(v);
    else if (key == "weighted_early_stopping") c.weighted_early_stopping = parse_bool(v);
    else if (key == "overlap") c.overlap = parse_bool(v);
    else if (key == "overlap_eps") c.overlap_eps = v.empty() ? std::nullopt : std::optional<double>(need_double(v));
    else if (key == "out") c.out = resolve(v, base);
    else if (key == "jobs") c.jobs = need_int<std::size_t>(v);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config key '" + std::string(key) + "': " + e.what());
  }
}

/// Flat `key = value` text; `#` starts a comment.
inline ExperimentConfig parse_config_text(std::string_view text, const fs::path& base = {}) {
  ExperimentConfig c;
  std::size_t line_no = 0;
  for (auto raw : split(text, '\n')) {
    ++line_no;
    auto line = raw.substr(0, raw.find('#'));
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(c, trim(line.substr(0, eq)), line.substr(eq + 1), base);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + " (line " + std::to_string(line_no) + ")");
    }
  }
  return c;
}

inline ExperimentConfig load_config(const fs::path& path) {
  return parse_config_text(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------

/// Datasets and labels shared by every cell of a grid.
struct PreparedData {
  Dataset train, valid, test;  // valid/test may be empty
  LabelTable train_labels, valid_labels, test_labels;
  std::uint64_t train_hash = 0, valid_hash = 0, test_hash = 0;
};

inline bool has_queries(const Dataset& ds) { return !ds.queries.empty(); }

/// Labels for every split; synthetic labels share one generator and one
/// scaler fit on the training split.
inline void assign_labels(PreparedData& d, LabelSource source, std::uint64_t label_seed, double noise) {
  if (source == LabelSource::expert) {
    d.train_labels = expert_labels(d.train);
    if (has_queries(d.valid)) d.valid_labels = expert_labels(d.valid);
    if (has_queries(d.test)) d.test_labels = expert_labels(d.test);
    return;
  }
  const auto kind = source == LabelSource::linear ? LabelKind::linear : LabelKind::nonlinear;
  const auto gen = SyntheticLabeler::random(kind, d.train.feature_dim, label_seed, noise);
  const auto raw = generate_raw_labels(d.train, gen);
  const auto scaler = PercentileScaler::fit(raw);
  d.train_labels = scaler.apply(raw);
  if (has_queries(d.valid)) d.valid_labels = scaler.apply(generate_raw_labels(d.valid, gen));
  if (has_queries(d.test)) d.test_labels = scaler.apply(generate_raw_labels(d.test, gen));
}

inline PreparedData prepare_data(const ExperimentConfig& c) {
  PreprocessOptions opt{c.truncate, c.drop_irrelevant, c.normalize};
  PreparedData d;
  auto load = [&](const fs::path& p, Split s, std::uint64_t& hash) {
    const auto text = read_file(p);
    hash = fnv1a(text);
    auto ds = preprocess(parse_letor_text(text, s), opt).dataset;
    if (ds.queries.empty()) throw std::runtime_error(p.string() + ": no queries left after preprocessing");
    return ds;
  };
  d.train = load(c.train, Split::train, d.train_hash);
  if (!c.valid.empty()) d.valid = load(c.valid, Split::validation, d.valid_hash);
  if (!c.test.empty()) d.test = load(c.test, Split::test, d.test_hash);
  for (const auto* ds : {&d.valid, &d.test}) {
    if (has_queries(*ds) && ds->feature_dim != d.train.feature_dim) {
      throw std::runtime_error("feature dimension differs between splits");
    }
  }
  assign_labels(d, c.labels, c.label_seed, c.label_noise);
  return d;
}

inline Dataset select_features(const Dataset& ds, const std::vector<std::size_t>& keep) {
  return keep.empty() ? ds : restrict_features(ds, keep);
}

/// Resolved settings of one cell; its hash is the run id. Dataset files enter
/// by content hash so the id does not depend on where they live.
inline std::string cell_snapshot(const ExperimentConfig& c, const PreparedData& d, double alpha, double tau,
                                 std::uint64_t seed) {
  using namespace detail;
  auto hex = [](std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  };
  std::string s;
  auto kv = [&](std::string_view k, const std::string& v) { s += std::string(k) + " = " + v + "\n"; };
  kv("name", c.name);
  kv("train", hex(d.train_hash));
  kv("valid", c.valid.empty() ? "" : hex(d.valid_hash));
  kv("test", c.test.empty() ? "" : hex(d.test_hash));
  kv("truncate", std::to_string(c.truncate));
  kv("drop_irrelevant", c.drop_irrelevant ? "true" : "false");
  kv("normalize", c.normalize ? "true" : "false");
  kv("labels", std::string(to_string(c.labels)));
  kv("label_seed", std::to_string(c.label_seed));
  kv("label_noise", format_double(c.label_noise));
  kv("policy", std::string(to_string(c.policy)));
  kv("policy_tower", std::string(to_string(c.policy_tower)));
  kv("policy_features", join_ints(c.policy_features));
  kv("model_features", join_ints(c.model_features));
  kv("alpha", format_double(alpha));
  kv("tau", format_double(tau));
  kv("tower", std::string(to_string(c.tower)));
  kv("loss", std::string(to_string(c.loss)));
  kv("sessions_train", std::to_string(c.sessions_train));
  kv("sessions_valid", std::to_string(c.sessions_valid));
  kv("seed", std::to_string(seed));
  kv("learning_rate", format_double(c.learning_rate));
  kv("weight_decay", format_double(c.weight_decay));
  kv("max_epochs", std::to_string(c.max_epochs));
  kv("patience", std::to_string(c.patience));
  kv("batch_size", std::to_string(c.batch_size));
  kv("ips_max_weight", format_double(c.ips_max_weight));
  kv("weighted_early_stopping", c.weighted_early_stopping ? "true" : "false");
  kv("overlap", c.overlap ? "true" : "false");
  kv("overlap_eps", c.overlap_eps ? format_double(*c.overlap_eps) : "");
  return s;
}

inline std::string run_id_of(std::string_view snapshot) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(snapshot)));
  return buf;
}

inline constexpr std::string_view kMetricsHeader =
    "run_id,alpha,tau,tower,loss,seed,rank,theta_true,theta_hat,abs_err,ndcg10,swap_connected";

struct CellResult {
  std::string run_id;
  double alpha = 0.0, tau = 0.0;
  std::uint64_t seed = 0;
  BiasRecoveryReport bias;
  std::vector<double> theta;  // raw, unanchored
  double ndcg10 = 0.0;
  SwapGraph swap_graph;
  std::optional<ShiftProbeResult> shift_probe;
  ResidualReport residuals;
  std::optional<OverlapReport> overlap;
  TrainTrace trace;
  std::optional<TwoTowerModel> model;
};

/// Gamma-hat scores of the logging policy on the training split.
inline ScoreTable logging_scores(const ExperimentConfig& c, const PreparedData& d, std::uint64_t seed) {
  if (c.policy == PolicyKind::expert) return expert_policy(d.train_labels);
  PolicyTrainConfig pc;
  pc.tower = c.policy_tower;
  pc.seed = seed;
  const auto tr = select_features(d.train, c.policy_features);
  if (has_queries(d.valid)) {
    const auto va = select_features(d.valid, c.policy_features);
    return policy_scores(train_pointwise_policy(tr, d.train_labels, pc, &va, &d.valid_labels), tr);
  }
  return policy_scores(train_pointwise_policy(tr, d.train_labels, pc), tr);
}

/// Runs one grid cell in memory.
inline CellResult compute_cell(const ExperimentConfig& c, const PreparedData& d, double alpha, double tau,
                               std::uint64_t seed) {
  CellResult r;
  r.alpha = alpha;
  r.tau = tau;
  r.seed = seed;
  r.run_id = run_id_of(cell_snapshot(c, d, alpha, tau, seed));

  const auto policy = interpolate_scores(d.train, logging_scores(c, d, seed), alpha, tau, seed);
  const TrueUserModel user{d.train_labels};
  const auto train_log = simulate(d.train, user, policy, c.sessions_train, seed, 0);
  const auto valid_log = simulate(d.train, user, policy, c.sessions_valid, seed, c.sessions_train);

  const auto model_ds = select_features(d.train, c.model_features);
  const FeatureMatrix f(model_ds);
  const auto train_props = estimate_propensities(d.train, train_log);
  std::optional<PropensityTable> valid_props;
  if (c.loss == LossKind::ips) valid_props = estimate_propensities(d.train, valid_log);
  auto init = TwoTowerModel::make(c.tower, train_log.max_rank, f, seed);
  auto fit = train(std::move(init), f, train_log, valid_log, c.training(seed), &train_props,
                   valid_props ? &*valid_props : nullptr);
  const auto& model = fit.model;
  r.trace = fit.trace;
  r.theta = model.theta;
  r.bias = bias_recovery(model.theta, model.max_rank());

  // Feature towers are scored on held-out queries; an embedding only knows
  // the training documents.
  if (c.tower != TowerKind::embedding && has_queries(d.test)) {
    r.ndcg10 = evaluate_ranking(d.test, tower_scores(model.relevance, select_features(d.test, c.model_features)),
                                d.test_labels)
                   .mean_ndcg;
  } else {
    const auto flat = score_all(model.relevance, f);
    ScoreTable s{zeros_like(d.train)};
    std::size_t i = 0;
    for (auto& q : s.values) {
      for (auto& v : q) v = flat[i++];
    }
    r.ndcg10 = evaluate_ranking(d.train, s, d.train_labels).mean_ndcg;
  }

  r.swap_graph = build_swap_graph(train_log, model.max_rank());
  r.residuals = residual_report(model, f, train_log, train_props);
  if (c.tower == TowerKind::embedding) {
    auto rng = Stream::make(seed, StreamTag::tower_init, 0x5817);
    std::vector<double> deltas(model.max_rank());
    for (auto& v : deltas) v = rng.uniform(-1.0, 1.0);
    r.shift_probe = shift_invariance_probe(model, f, train_log, deltas);
  } else if (c.overlap) {
    const double eps = c.overlap_eps ? *c.overlap_eps : default_overlap_eps(train_log, f, model.max_rank());
    r.overlap = feature_overlap(train_log, f, eps, estimate_lipschitz(model.relevance, f, 20'000, seed),
                                model.max_rank());
  }
  r.model = model;
  return r;
}

inline std::string metrics_csv(const ExperimentConfig& c, const CellResult& r) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& row : r.bias.rows) {
    out += r.run_id + ',' + format_double(r.alpha) + ',' + format_double(r.tau) + ',' +
           std::string(to_string(c.tower)) + ',' + std::string(to_string(c.loss)) + ',' + std::to_string(r.seed) +
           ',' + std::to_string(row.rank) + ',' + format_double(row.theta_true) + ',' + format_double(row.theta_hat) +
           ',' + format_double(row.abs_error) + ',' + format_double(r.ndcg10) + ',' +
           (r.swap_graph.connected() ? "true" : "false") + '\n';
  }
  return out;
}

inline std::string theta_csv(const CellResult& r) {
  std::string out = "rank,theta_raw,theta_anchored\n";
  for (std::size_t k = 0; k < r.theta.size(); ++k) {
    out += std::to_string(k + 1) + ',' + format_double(r.theta[k]) + ',' + format_double(r.theta[k] - r.theta[0]) +
           '\n';
  }
  return out;
}

inline std::string training_csv(const TrainTrace& t) {
  std::string out = "epoch,train_loss,valid_loss,best\n";
  for (std::size_t e = 0; e < t.valid_loss.size(); ++e) {
    out += std::to_string(e + 1) + ',' + format_double(t.train_loss[e]) + ',' + format_double(t.valid_loss[e]) + ',' +
           (e + 1 == t.best_epoch ? "1" : "0") + '\n';
  }
  return out;
}

/// Writes a completed cell to `<out>/<run_id>/` through a temporary directory
/// renamed into place, so a run directory either is complete or absent.
inline fs::path persist_cell(const ExperimentConfig& c, const PreparedData& d, const CellResult& r) {
  const fs::path final_dir = c.out / r.run_id;
  const fs::path tmp = c.out / (".tmp-" + r.run_id);
  fs::remove_all(tmp);
  fs::create_directories(tmp / "diagnostics");
  write_file(tmp / "config.snapshot", cell_snapshot(c, d, r.alpha, r.tau, r.seed));
  write_file(tmp / "metrics.csv", metrics_csv(c, r));
  write_file(tmp / "theta.csv", theta_csv(r));
  if (r.model) write_file(tmp / "model.params", dump_params(*r.model));
  const auto diag = tmp / "diagnostics";
  write_file(diag / "training.csv", training_csv(r.trace));
  write_file(diag / "swap_graph.csv", swap_graph_csv(r.swap_graph));
  write_file(diag / "components.csv", components_csv(r.swap_graph));
  write_file(diag / "verdict.txt", r.swap_graph.verdict() + "\n");
  write_file(diag / "residual_ranks.csv", residual_ranks_csv(r.residuals));
  if (r.overlap) write_file(diag / "overlap.csv", overlap_csv(*r.overlap));
  if (r.shift_probe) {
    write_file(diag / "shift_probe.csv", "loss_difference,blockers\n" + format_double(r.shift_probe->loss_difference) +
                                             ',' + std::to_string(r.shift_probe->blockers.size()) + '\n');
  }
  fs::rename(tmp, final_dir);
  return final_dir;
}

struct GridCell {
  double alpha = 0.0, tau = 0.0;
  std::uint64_t seed = 0;
  std::string run_id;
};

inline std::vector<GridCell> grid_cells(const ExperimentConfig& c, const PreparedData& d) {
  std::vector<GridCell> cells;
  for (double a : c.alphas) {
    for (double t : c.taus) {
      for (auto s : c.seeds) cells.push_back({a, t, s, run_id_of(cell_snapshot(c, d, a, t, s))});
    }
  }
  return cells;
}

struct RunSummary {
  std::vector<GridCell> cells;
  std::vector<fs::path> run_dirs;
  std::size_t executed = 0;
  std::size_t resumed = 0;
};

/// Runs every cell of the grid that has no completed run directory yet.
/// Cells execute on up to `c.jobs` threads; the first failure is rethrown with
/// the cell identified after in-flight cells finish.
template <class OnDone = std::nullptr_t>
RunSummary run_experiment(const ExperimentConfig& c, OnDone on_done = nullptr) {
  c.validate();
  const auto data = prepare_data(c);
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec || !fs::is_directory(c.out)) throw std::runtime_error("cannot create output directory " + c.out.string());

  RunSummary sum;
  sum.cells = grid_cells(c, data);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < sum.cells.size(); ++i) {
    sum.run_dirs.push_back(c.out / sum.cells[i].run_id);
    if (fs::exists(sum.run_dirs.back() / "metrics.csv")) {
      ++sum.resumed;
    } else {
      todo.push_back(i);
    }
  }

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::string failure;
  auto worker = [&] {
    while (true) {
      const auto j = next.fetch_add(1);
      if (j >= todo.size()) return;
      {
        std::lock_guard lock(mu);
        if (!failure.empty()) return;
      }
      const auto& cell = sum.cells[todo[j]];
      try {
        const auto result = compute_cell(c, data, cell.alpha, cell.tau, cell.seed);
        persist_cell(c, data, result);
        std::lock_guard lock(mu);
        ++sum.executed;
        if constexpr (!std::is_same_v<OnDone, std::nullptr_t>) on_done(result);
      } catch (const std::exception& e) {
        std::lock_guard lock(mu);
        if (failure.empty()) {
          failure = "cell alpha=" + format_double(cell.alpha) + " tau=" + format_double(cell.tau) +
                    " seed=" + std::to_string(cell.seed) + ": " + e.what();
        }
      }
    }
  };
  const std::size_t n_threads = std::min(c.jobs, std::max<std::size_t>(todo.size(), 1));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!failure.empty()) throw std::runtime_error(failure);
  return sum;
}

}  // namespace towerlab
