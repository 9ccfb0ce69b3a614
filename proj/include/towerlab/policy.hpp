#pragma once

// Logging policies: pointwise rankers, expert-label sorting, alpha-interpolated
// scores and epsilon-greedy ranking draws.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "towerlab/adamw.hpp"
#include "towerlab/data.hpp"
#include "towerlab/model.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/tables.hpp"
#include "towerlab/towers.hpp"

namespace towerlab {

enum class PolicyKind { trained, expert };

inline std::string_view to_string(PolicyKind k) { return k == PolicyKind::trained ? "trained" : "expert"; }

inline PolicyKind parse_policy_kind(std::string_view s) {
  if (s == "trained") return PolicyKind::trained;
  if (s == "expert") return PolicyKind::expert;
  throw std::invalid_argument("unknown policy '" + std::string(s) + "'");
}

struct PolicyTrainConfig {
  TowerKind tower = TowerKind::linear;
  double learning_rate = 0.01;
  double weight_decay = 0.0;
  std::size_t batch_size = 64;
  std::size_t max_epochs = 300;
  std::size_t patience = 20;
  std::uint64_t seed = 0;
};

struct PointwisePolicy {
  RelevanceTower tower;
  double train_mse = 0.0;
  std::size_t epochs = 0;
};

namespace detail {

inline double mse(const RelevanceTower& tower, const FeatureMatrix& f, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = tower.forward(i, f.row(i)) - y[i];
    s += r * r;
  }
  return s / static_cast<double>(y.size());
}

inline std::vector<double> flatten(const DocValues& t) {
  std::vector<double> out;
  out.reserve(t.size());
  t.for_each([&](std::size_t, std::size_t, double v) { out.push_back(v); });
  return out;
}

}  // namespace detail

/// Fits a feature-based relevance tower to labels by squared-error regression
/// over the whole training split. Early stopping monitors the validation split
/// when one is given, else the training loss.
inline PointwisePolicy train_pointwise_policy(const Dataset& train, const LabelTable& labels,
                                              const PolicyTrainConfig& cfg, const Dataset* valid = nullptr,
                                              const LabelTable* valid_labels = nullptr) {
  if (!labels.matches(train)) throw std::invalid_argument("labels do not cover the training split");
  if (cfg.tower == TowerKind::embedding) throw std::invalid_argument("a logging policy needs a feature-based tower");
  if (cfg.batch_size == 0 || cfg.max_epochs == 0) throw std::invalid_argument("invalid policy training config");
  const FeatureMatrix f(train);
  const auto y = detail::flatten(labels);
  FeatureMatrix vf;
  std::vector<double> vy;
  if (valid && valid_labels) {
    if (!valid_labels->matches(*valid)) throw std::invalid_argument("validation labels do not match");
    vf = FeatureMatrix(*valid);
    vy = detail::flatten(*valid_labels);
  }

  PointwisePolicy best{RelevanceTower::make(cfg.tower, f, cfg.seed), 0.0, 0};
  RelevanceTower tower = best.tower;
  AdamW opt(tower.params().size(), {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  std::vector<double> grad(tower.params().size());
  std::vector<std::size_t> rows(y.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  EarlyStopping stopper(cfg.patience);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto rng = Stream::make(cfg.seed, StreamTag::minibatch, 0x9011c7, epoch);
    rng.shuffle(std::span<std::size_t>(rows));
    for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
      const auto end = std::min(rows.size(), start + cfg.batch_size);
      std::fill(grad.begin(), grad.end(), 0.0);
      const double scale = 2.0 / static_cast<double>(end - start);
      for (std::size_t j = start; j < end; ++j) {
        const auto i = rows[j];
        const double r = tower.forward(i, f.row(i)) - y[i];
        tower.backward(i, f.row(i), scale * r, grad);
      }
      opt.step(tower.params(), grad);
    }
    const double train_mse = detail::mse(tower, f, y);
    if (!std::isfinite(train_mse)) {
      throw TrainingError("policy regression diverged at epoch " + std::to_string(epoch) +
                          " (learning rate " + format_double(cfg.learning_rate) + ")");
    }
    const double monitored = vy.empty() ? train_mse : detail::mse(tower, vf, vy);
    if (stopper.update(monitored, epoch)) best = {tower, train_mse, epoch};
    if (stopper.should_stop()) break;
  }
  return best;
}

/// Relevance-tower scores of every document, shaped like the dataset.
inline ScoreTable tower_scores(const RelevanceTower& tower, const Dataset& ds) {
  const FeatureMatrix f(ds);
  const auto flat = score_all(tower, f);
  ScoreTable t{zeros_like(ds)};
  std::size_t i = 0;
  for (auto& q : t.values) {
    for (auto& v : q) v = flat[i++];
  }
  return t;
}

/// Predicted relevance of every document of `ds`.
inline ScoreTable policy_scores(const PointwisePolicy& policy, const Dataset& ds) {
  return tower_scores(policy.tower, ds);
}

/// Scores equal to the labels themselves.
inline ScoreTable expert_policy(const LabelTable& labels) { return ScoreTable{labels}; }

struct Ranking {
  std::vector<std::uint32_t> docs;  // positions within the query, rank k at index k-1
};

/// Frozen scores s_{q,d} plus an epsilon-greedy exploration rate tau.
struct LoggingPolicy {
  ScoreTable scores;
  double alpha = 1.0;
  double tau = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> query_keys;
  std::vector<Ranking> exploit;  // descending score, ascending doc_id on ties
};

inline void validate_policy_params(double alpha, double tau) {
  if (!(alpha >= -1.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must be in [-1, 1]");
  if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("tau must be in [0, 1]");
}

/// s = sign(alpha) (|alpha| gamma_hat + (1 - |alpha|) u), u ~ U(0,4) drawn once
/// per document. At alpha == 0 the score is the noise u alone.
inline LoggingPolicy interpolate_scores(const Dataset& ds, const ScoreTable& gamma_hat, double alpha, double tau,
                                        std::uint64_t seed) {
  validate_policy_params(alpha, tau);
  if (!gamma_hat.matches(ds)) throw std::invalid_argument("score table does not match dataset");
  LoggingPolicy pol;
  pol.alpha = alpha;
  pol.tau = tau;
  pol.seed = seed;
  pol.scores = gamma_hat;
  const double a = std::fabs(alpha);
  const double sign = alpha < 0.0 ? -1.0 : 1.0;
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
    const auto& q = ds.queries[qi];
    const auto qkey = fnv1a(q.id);
    pol.query_keys.push_back(qkey);
    for (std::size_t p = 0; p < q.docs.size(); ++p) {
      double& s = pol.scores.at(qi, p);
      if (a == 1.0) {
        s = sign * s;
        continue;
      }
      auto rng = Stream::make(seed, StreamTag::policy_noise, qkey, static_cast<std::uint64_t>(q.docs[p].doc_id));
      const double u = rng.uniform(0.0, 4.0);
      s = alpha == 0.0 ? u : sign * (a * s + (1.0 - a) * u);
    }
    Ranking r;
    r.docs.resize(q.docs.size());
    std::iota(r.docs.begin(), r.docs.end(), std::uint32_t{0});
    std::sort(r.docs.begin(), r.docs.end(), [&](std::uint32_t x, std::uint32_t y) {
      const double sx = pol.scores.at(qi, x);
      const double sy = pol.scores.at(qi, y);
      if (sx != sy) return sx > sy;
      return q.docs[x].doc_id < q.docs[y].doc_id;
    });
    pol.exploit.push_back(std::move(r));
  }
  return pol;
}

/// With probability tau a uniformly random permutation, else the exploit
/// ranking. A pure function of (policy seed, query, session).
inline Ranking draw_ranking(const LoggingPolicy& policy, std::size_t qi, std::uint64_t session_id) {
  if (qi >= policy.exploit.size()) throw std::out_of_range("unknown query index");
  Ranking r = policy.exploit[qi];
  if (policy.tau <= 0.0) return r;
  auto rng = Stream::make(policy.seed, StreamTag::exploration, policy.query_keys[qi], session_id);
  if (rng.uniform() < policy.tau) rng.shuffle(std::span<std::uint32_t>(r.docs));
  return r;
}

/// Keeps only the listed feature columns (0-based), in the given order.
inline Dataset restrict_features(Dataset ds, std::span<const std::size_t> keep) {
  if (keep.empty()) throw std::invalid_argument("restrict_features: empty keep list");
  for (auto k : keep) {
    if (k >= ds.feature_dim) throw std::out_of_range("feature index " + std::to_string(k) + " out of range");
  }
  for (auto& q : ds.queries) {
    for (auto& d : q.docs) {
      std::vector<double> x;
      x.reserve(keep.size());
      for (auto k : keep) x.push_back(d.features[k]);
      d.features = std::move(x);
    }
  }
  ds.feature_dim = keep.size();
  return ds;
}

inline Dataset first_features(Dataset ds, std::size_t n) {
  std::vector<std::size_t> keep(std::min(n, ds.feature_dim));
  std::iota(keep.begin(), keep.end(), std::size_t{0});
  return restrict_features(std::move(ds), keep);
}

}  // namespace towerlab
