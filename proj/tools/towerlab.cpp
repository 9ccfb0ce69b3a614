// towerlab: command-line front end for the simulation pipeline.
//
// Every stage runs standalone on persisted artifacts (LETOR datasets, CSV
// tables, click logs, parameter dumps); `run` executes a whole grid from a
// config file and `report` aggregates completed runs.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "towerlab/clicks.hpp"
#include "towerlab/corpus.hpp"
#include "towerlab/data.hpp"
#include "towerlab/diagnostics.hpp"
#include "towerlab/eval.hpp"
#include "towerlab/experiment.hpp"
#include "towerlab/io.hpp"
#include "towerlab/log.hpp"
#include "towerlab/model.hpp"
#include "towerlab/policy.hpp"
#include "towerlab/report.hpp"
#include "towerlab/synth.hpp"
#include "towerlab/tables.hpp"

namespace fs = std::filesystem;
using namespace towerlab;

namespace {

// Datasets given to the standalone stages are already preprocessed.
Dataset load_dataset(const std::string& path, Split split = Split::train) { return parse_letor(path, split); }

std::vector<std::size_t> feature_list(const std::string& s) {
  std::vector<std::size_t> out;
  if (trim(s).empty()) return out;
  for (auto part : split(s, ',')) {
    const auto v = parse_int<std::size_t>(trim(part));
    if (!v) throw std::invalid_argument("bad feature index '" + std::string(part) + "'");
    out.push_back(*v);
  }
  return out;
}

Dataset with_features(const Dataset& ds, const std::string& list) {
  const auto keep = feature_list(list);
  return keep.empty() ? ds : restrict_features(ds, keep);
}

void say(const std::string& line) { std::cout << line << '\n'; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-tower click model simulation and diagnostics"};
  app.require_subcommand(1);

  // make-corpus
  auto* corpus_cmd = app.add_subcommand("make-corpus", "Write the synthetic LETOR corpus (train/valid/test)");
  std::string corpus_dir = "data";
  CorpusSpec spec;
  std::size_t valid_queries = 30, test_queries = 30;
  corpus_cmd->add_option("--out-dir", corpus_dir);
  corpus_cmd->add_option("--queries", spec.queries, "training queries");
  corpus_cmd->add_option("--valid-queries", valid_queries);
  corpus_cmd->add_option("--test-queries", test_queries);
  corpus_cmd->add_option("--docs", spec.docs_per_query);
  corpus_cmd->add_option("--features", spec.features);
  corpus_cmd->add_option("--seed", spec.seed);

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Parse and preprocess a LETOR file");
  std::string ingest_in, ingest_out, ingest_split = "train";
  PreprocessOptions pre;
  bool no_drop = false, no_normalize = false;
  ingest_cmd->add_option("input", ingest_in)->required();
  ingest_cmd->add_option("--out", ingest_out)->required();
  ingest_cmd->add_option("--split", ingest_split)->check(CLI::IsMember({"train", "validation", "test"}));
  ingest_cmd->add_option("--truncate", pre.truncate, "keep the top-k documents by label (0 disables)");
  ingest_cmd->add_flag("--no-drop", no_drop, "keep queries without relevant documents");
  ingest_cmd->add_flag("--no-normalize", no_normalize, "skip the signed log1p transform");

  // synth-labels
  auto* labels_cmd = app.add_subcommand("synth-labels", "Generate synthetic relevance labels");
  std::vector<std::string> label_datasets;
  std::string label_kind = "linear", labels_out_dir = ".";
  std::uint64_t label_seed = 7;
  double label_noise = 0.2;
  labels_cmd->add_option("--dataset", label_datasets, "<train> [valid] [test]; the scaler is fit on the first")
      ->required()
      ->expected(1, 3);
  labels_cmd->add_option("--labels", label_kind)->check(CLI::IsMember({"linear", "nonlinear", "expert"}));
  labels_cmd->add_option("--label-seed", label_seed);
  labels_cmd->add_option("--label-noise", label_noise);
  labels_cmd->add_option("--out-dir", labels_out_dir);

  // train-policy
  auto* policy_cmd = app.add_subcommand("train-policy", "Fit a pointwise logging policy and write its scores");
  std::vector<std::string> policy_datasets, policy_labels;
  std::string policy_tower = "linear", policy_features, policy_out;
  std::uint64_t policy_seed = 0;
  policy_cmd->add_option("--dataset", policy_datasets, "<train> [valid]")->required()->expected(1, 2);
  policy_cmd->add_option("--labels", policy_labels, "<train.csv> [valid.csv]")->required()->expected(1, 2);
  policy_cmd->add_option("--policy-tower", policy_tower)->check(CLI::IsMember({"linear", "mlp"}));
  policy_cmd->add_option("--policy-features", policy_features, "comma-separated 0-based feature indices");
  policy_cmd->add_option("--seed", policy_seed);
  policy_cmd->add_option("--out", policy_out)->required();

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a click log");
  std::string sim_dataset, sim_labels, sim_scores, sim_out, sim_props_out;
  double sim_alpha = 1.0, sim_tau = 0.0;
  std::uint64_t sim_sessions = 200'000, sim_seed = 1, sim_first = 0;
  sim_cmd->add_option("--dataset", sim_dataset)->required();
  sim_cmd->add_option("--labels", sim_labels, "true relevance labels CSV")->required();
  sim_cmd->add_option("--scores", sim_scores, "logging policy scores CSV; defaults to the labels (expert policy)");
  sim_cmd->add_option("--alpha", sim_alpha);
  sim_cmd->add_option("--tau", sim_tau);
  sim_cmd->add_option("--sessions", sim_sessions);
  sim_cmd->add_option("--seed", sim_seed);
  sim_cmd->add_option("--first-session", sim_first);
  sim_cmd->add_option("--out", sim_out)->required();
  sim_cmd->add_option("--propensities-out", sim_props_out);

  // train
  auto* train_cmd = app.add_subcommand("train", "Fit a two-tower click model");
  std::string tr_dataset, tr_log, tr_valid_log, tr_tower = "linear", tr_loss = "nll", tr_features, tr_out;
  TrainConfig tc;
  train_cmd->add_option("--dataset", tr_dataset)->required();
  train_cmd->add_option("--train-log", tr_log)->required();
  train_cmd->add_option("--valid-log", tr_valid_log)->required();
  train_cmd->add_option("--tower", tr_tower)->check(CLI::IsMember({"embedding", "linear", "mlp"}));
  train_cmd->add_option("--loss", tr_loss)->check(CLI::IsMember({"nll", "ips"}));
  train_cmd->add_option("--model-features", tr_features);
  train_cmd->add_option("--learning-rate", tc.learning_rate);
  train_cmd->add_option("--weight-decay", tc.weight_decay);
  train_cmd->add_option("--max-epochs", tc.max_epochs);
  train_cmd->add_option("--patience", tc.patience);
  train_cmd->add_option("--batch-size", tc.batch_size);
  train_cmd->add_option("--ips-max-weight", tc.ips_max_weight);
  train_cmd->add_option("--seed", tc.seed);
  train_cmd->add_option("--out", tr_out)->required();

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "Bias recovery and nDCG@10 of a fitted model");
  std::string ev_model, ev_dataset, ev_labels, ev_features;
  eval_cmd->add_option("--model", ev_model)->required();
  eval_cmd->add_option("--dataset", ev_dataset, "dataset to rank for nDCG@10");
  eval_cmd->add_option("--labels", ev_labels, "labels CSV for --dataset; defaults to its graded labels");
  eval_cmd->add_option("--model-features", ev_features);

  // diagnose
  auto* diag_cmd = app.add_subcommand("diagnose", "Swap graph, feature overlap and residual diagnostics");
  std::string dg_dataset, dg_log, dg_model, dg_features, dg_out = "diagnostics";
  std::optional<double> dg_eps;
  diag_cmd->add_option("--dataset", dg_dataset)->required();
  diag_cmd->add_option("--log", dg_log)->required();
  diag_cmd->add_option("--model", dg_model, "fitted model for residual and overlap diagnostics");
  diag_cmd->add_option("--model-features", dg_features);
  diag_cmd->add_option("--overlap-eps", dg_eps);
  diag_cmd->add_option("--out-dir", dg_out);

  // run
  auto* run_cmd = app.add_subcommand("run", "Execute an experiment grid from a config file");
  std::string run_config;
  std::vector<std::string> run_datasets;
  std::map<std::string, std::string> overrides;
  run_cmd->add_option("config", run_config)->required();
  run_cmd->add_option("--dataset", run_datasets, "<train> [valid] [test]")->expected(1, 3);
  // Flags mirror config keys.
  const std::vector<std::pair<std::string, std::string>> mirrored = {
      {"--alpha", "alpha"},
      {"--tau", "tau"},
      {"--seeds", "seeds"},
      {"--labels", "labels"},
      {"--label-seed", "label_seed"},
      {"--policy", "policy"},
      {"--policy-tower", "policy_tower"},
      {"--policy-features", "policy_features"},
      {"--model-features", "model_features"},
      {"--tower", "tower"},
      {"--loss", "loss"},
      {"--sessions-train", "sessions_train"},
      {"--sessions-valid", "sessions_valid"},
      {"--max-epochs", "max_epochs"},
      {"--patience", "patience"},
      {"--out", "out"},
      {"--jobs", "jobs"},
      {"--name", "name"},
  };
  for (const auto& [flag, key] : mirrored) run_cmd->add_option(flag, overrides[key], "config key '" + key + "'");

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate completed runs into summary.csv and SVG panels");
  std::string rp_runs, rp_out;
  report_cmd->add_option("runs", rp_runs)->required();
  report_cmd->add_option("--out-dir", rp_out, "defaults to <runs>/report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    if (*corpus_cmd) {
      fs::create_directories(corpus_dir);
      const std::pair<Split, std::size_t> parts[] = {
          {Split::train, spec.queries}, {Split::validation, valid_queries}, {Split::test, test_queries}};
      const char* names[] = {"train.txt", "valid.txt", "test.txt"};
      for (std::size_t i = 0; i < 3; ++i) {
        CorpusSpec s = spec;
        s.queries = parts[i].second;
        const auto path = fs::path(corpus_dir) / names[i];
        write_file(path, serialize_letor(make_synthetic_corpus(s, parts[i].first)));
        say("wrote " + path.string());
      }
    } else if (*ingest_cmd) {
      pre.drop_irrelevant = !no_drop;
      pre.normalize = !no_normalize;
      const auto split_kind = ingest_split == "train" ? Split::train
                              : ingest_split == "test" ? Split::test
                                                       : Split::validation;
      const auto r = preprocess(parse_letor(ingest_in, split_kind), pre);
      write_file(ingest_out, serialize_letor(r.dataset));
      say("queries " + std::to_string(r.dataset.queries.size()) + " documents " +
          std::to_string(r.dataset.num_docs()) + " features " + std::to_string(r.dataset.feature_dim) +
          " dropped_fraction " + format_double(r.fraction_removed));
    } else if (*labels_cmd) {
      PreparedData d;
      d.train = load_dataset(label_datasets[0]);
      if (label_datasets.size() > 1) d.valid = load_dataset(label_datasets[1], Split::validation);
      if (label_datasets.size() > 2) d.test = load_dataset(label_datasets[2], Split::test);
      assign_labels(d, parse_label_source(label_kind), label_seed, label_noise);
      fs::create_directories(labels_out_dir);
      const std::pair<const Dataset*, const LabelTable*> outs[] = {
          {&d.train, &d.train_labels}, {&d.valid, &d.valid_labels}, {&d.test, &d.test_labels}};
      for (std::size_t i = 0; i < label_datasets.size(); ++i) {
        const auto path = fs::path(labels_out_dir) / ("labels_" + std::string(to_string(outs[i].first->split)) + ".csv");
        write_file(path, write_doc_values_csv(*outs[i].first, *outs[i].second, "label"));
        say("wrote " + path.string());
      }
    } else if (*policy_cmd) {
      const auto train_ds = load_dataset(policy_datasets[0]);
      const LabelTable train_labels{read_doc_values_csv(train_ds, read_file(policy_labels[0]), "label")};
      PolicyTrainConfig pc;
      pc.tower = parse_tower_kind(policy_tower);
      pc.seed = policy_seed;
      const auto tr = with_features(train_ds, policy_features);
      PointwisePolicy pol;
      if (policy_datasets.size() > 1) {
        if (policy_labels.size() < 2) throw std::invalid_argument("validation dataset needs validation labels");
        const auto valid_ds = load_dataset(policy_datasets[1], Split::validation);
        const LabelTable valid_labels{read_doc_values_csv(valid_ds, read_file(policy_labels[1]), "label")};
        const auto va = with_features(valid_ds, policy_features);
        pol = train_pointwise_policy(tr, train_labels, pc, &va, &valid_labels);
      } else {
        pol = train_pointwise_policy(tr, train_labels, pc);
      }
      write_file(policy_out, write_doc_values_csv(train_ds, policy_scores(pol, tr), "score"));
      say("epochs " + std::to_string(pol.epochs) + " train_mse " + format_double(pol.train_mse));
    } else if (*sim_cmd) {
      const auto ds = load_dataset(sim_dataset);
      const LabelTable labels{read_doc_values_csv(ds, read_file(sim_labels), "label")};
      const ScoreTable scores =
          sim_scores.empty() ? expert_policy(labels) : ScoreTable{read_doc_values_csv(ds, read_file(sim_scores), "score")};
      const auto policy = interpolate_scores(ds, scores, sim_alpha, sim_tau, sim_seed);
      const auto log = simulate(ds, TrueUserModel{labels}, policy, sim_sessions, sim_seed, sim_first);
      write_file(sim_out, write_log_csv(ds, log));
      if (!sim_props_out.empty()) write_file(sim_props_out, write_propensities_csv(ds, estimate_propensities(ds, log)));
      say("impressions " + std::to_string(log.size()) + " sessions " + std::to_string(log.n_sessions));
    } else if (*train_cmd) {
      const auto ds = load_dataset(tr_dataset);
      const auto train_log = read_log_csv(ds, read_file(tr_log));
      const auto valid_log = read_log_csv(ds, read_file(tr_valid_log));
      tc.loss = parse_loss_kind(tr_loss);
      const FeatureMatrix f(with_features(ds, tr_features));
      std::optional<PropensityTable> tp, vp;
      if (tc.loss == LossKind::ips) {
        tp = estimate_propensities(ds, train_log);
        vp = estimate_propensities(ds, valid_log);
      }
      const auto k = std::max(train_log.max_rank, valid_log.max_rank);
      auto res = train(TwoTowerModel::make(parse_tower_kind(tr_tower), k, f, tc.seed), f, train_log, valid_log, tc,
                       tp ? &*tp : nullptr, vp ? &*vp : nullptr);
      write_file(tr_out, dump_params(res.model));
      say("best_epoch " + std::to_string(res.trace.best_epoch) + " valid_loss " +
          format_double(res.trace.valid_loss[res.trace.best_epoch - 1]));
    } else if (*eval_cmd) {
      const auto model = load_params(read_file(ev_model));
      const auto rep = bias_recovery(model.theta, model.max_rank());
      say("rank,theta_true,theta_hat,abs_err");
      for (const auto& r : rep.rows) {
        say(std::to_string(r.rank) + ',' + format_double(r.theta_true) + ',' + format_double(r.theta_hat) + ',' +
            format_double(r.abs_error));
      }
      say("mae " + format_double(rep.mae) + " max_error " + format_double(rep.max_error));
      if (!ev_dataset.empty()) {
        const auto ds = load_dataset(ev_dataset, Split::test);
        const DocValues labels =
            ev_labels.empty() ? DocValues{expert_labels(ds)} : read_doc_values_csv(ds, read_file(ev_labels), "label");
        const auto scores = tower_scores(model.relevance, with_features(ds, ev_features));
        const auto r = evaluate_ranking(ds, scores, labels);
        say("ndcg10 " + format_double(r.mean_ndcg) + " evaluated " + std::to_string(r.evaluated) + " excluded " +
            std::to_string(r.excluded));
      }
    } else if (*diag_cmd) {
      const auto ds = load_dataset(dg_dataset);
      const auto log = read_log_csv(ds, read_file(dg_log));
      const auto graph = build_swap_graph(log);
      fs::create_directories(dg_out);
      const fs::path out(dg_out);
      write_file(out / "swap_graph.csv", swap_graph_csv(graph));
      write_file(out / "components.csv", components_csv(graph));
      const auto props = estimate_propensities(ds, log);
      write_file(out / "propensities.csv", write_propensities_csv(ds, props));
      say(graph.verdict());
      if (!dg_model.empty()) {
        const auto model = load_params(read_file(dg_model));
        const FeatureMatrix f(with_features(ds, dg_features));
        const auto res = residual_report(model, f, log, props);
        write_file(out / "residual_ranks.csv", residual_ranks_csv(res));
        say("residual_propensity_corr " + format_double(res.overall_correlation));
        if (model.relevance.kind() != TowerKind::embedding) {
          const double eps = dg_eps ? *dg_eps : default_overlap_eps(log, f, model.max_rank());
          const auto ov = feature_overlap(log, f, eps, estimate_lipschitz(model.relevance, f, 20'000, 0),
                                          model.max_rank());
          write_file(out / "overlap.csv", overlap_csv(ov));
          say("overlap " + ov.graph.verdict());
        }
      }
    } else if (*run_cmd) {
      auto cfg = load_config(run_config);
      const fs::path cwd = fs::current_path();
      for (const auto& [key, value] : overrides) {
        if (!value.empty()) set_config_value(cfg, key, value, cwd);
      }
      if (!run_datasets.empty()) {
        cfg.train = cwd / run_datasets[0];
        cfg.valid = run_datasets.size() > 1 ? cwd / run_datasets[1] : fs::path{};
        cfg.test = run_datasets.size() > 2 ? cwd / run_datasets[2] : fs::path{};
      }
      const auto sum = run_experiment(cfg, [](const CellResult& r) {
        std::cout << "done " << r.run_id << " alpha=" << format_double(r.alpha) << " tau=" << format_double(r.tau)
                  << " seed=" << r.seed << " mae=" << format_double(r.bias.mae) << std::endl;
      });
      say("cells " + std::to_string(sum.cells.size()) + " executed " + std::to_string(sum.executed) + " resumed " +
          std::to_string(sum.resumed));
    } else if (*report_cmd) {
      const fs::path out = rp_out.empty() ? fs::path(rp_runs) / "report" : fs::path(rp_out);
      const auto res = report(rp_runs, out);
      say("runs " + std::to_string(res.runs) + " rows " + std::to_string(res.rows.size()) + " panels " +
          std::to_string(res.panels.size()) + " summary " + (out / "summary.csv").string());
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
