#pragma once

// The additive two-tower click model: P(click | q, d, k) = sigmoid(theta_k + r(q, d)).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "towerlab/adamw.hpp"
#include "towerlab/io.hpp"
#include "towerlab/log.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/towers.hpp"

namespace towerlab {

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy of one observation with the probability clamped to
/// [1e-7, 1 - 1e-7].
inline double bce(double p, bool click) {
  p = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return click ? -std::log(p) : -std::log1p(-p);
}

struct TwoTowerModel {
  std::vector<double> theta;  // theta[k - 1] is the bias logit of rank k
  RelevanceTower relevance;

  static TwoTowerModel make(TowerKind kind, std::size_t max_rank, const FeatureMatrix& features,
                            std::uint64_t seed) {
    if (max_rank == 0) throw std::invalid_argument("two-tower model needs at least one rank");
    return {std::vector<double>(max_rank, 0.0), RelevanceTower::make(kind, features, seed)};
  }

  std::size_t max_rank() const { return theta.size(); }
  std::size_t num_params() const { return theta.size() + relevance.params().size(); }

  bool operator==(const TwoTowerModel&) const = default;
};

/// Click probability of the document at (query index, position) shown at `rank`.
inline double forward(const TwoTowerModel& model, const FeatureMatrix& features, std::size_t qi, std::size_t pos,
                      std::size_t rank) {
  if (rank == 0 || rank > model.max_rank()) {
    throw std::out_of_range("rank " + std::to_string(rank) + " outside 1.." + std::to_string(model.max_rank()));
  }
  if (const auto* emb = std::get_if<EmbeddingTower>(&model.relevance.variant())) {
    if (!emb->contains(qi, pos)) {
      throw std::out_of_range("embedding tower has no parameter for query index " + std::to_string(qi) +
                              ", position " + std::to_string(pos));
    }
    return sigmoid(model.theta[rank - 1] + emb->params[emb->offsets[qi] + pos]);
  }
  if (qi >= features.num_queries() || pos >= features.docs_in(qi)) throw std::out_of_range("unknown document");
  const auto flat = features.flat(qi, pos);
  return sigmoid(model.theta[rank - 1] + model.relevance.forward(flat, features.row(flat)));
}

enum class LossKind { nll, ips };

inline std::string_view to_string(LossKind k) { return k == LossKind::nll ? "nll" : "ips"; }

inline LossKind parse_loss_kind(std::string_view s) {
  if (s == "nll") return LossKind::nll;
  if (s == "ips") return LossKind::ips;
  throw std::invalid_argument("unknown loss '" + std::string(s) + "'");
}

inline std::vector<std::size_t> all_rows(const SessionLog& log) {
  std::vector<std::size_t> rows(log.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

/// Per-impression weights 1 / pi(d,k|q), clipped at `max_weight`.
inline std::vector<double> ips_weights(const SessionLog& log, const PropensityTable& props,
                                       double max_weight = 100.0) {
  std::vector<double> w(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double p = props.propensity(log.query[i], log.doc[i], log.rank[i]);
    if (!(p > 0.0)) {
      throw std::runtime_error("missing propensity entry for impression " + std::to_string(i));
    }
    w[i] = std::min(1.0 / p, max_weight);
  }
  return w;
}

namespace detail {

inline void check_rows(const SessionLog& log, std::span<const std::size_t> rows, std::span<const double> weights) {
  if (rows.empty()) throw std::invalid_argument("loss over an empty batch");
  if (!weights.empty() && weights.size() != log.size()) {
    throw std::invalid_argument("weights must be empty or one per log impression");
  }
}

}  // namespace detail

/// mean_i w_i * bce(p_i, c_i) over `rows`; empty `weights` means all ones.
inline double weighted_nll(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log,
                           std::span<const std::size_t> rows, std::span<const double> weights = {}) {
  detail::check_rows(log, rows, weights);
  model.relevance.check_compatible(features);
  double sum = 0.0;
  for (auto i : rows) {
    const auto flat = features.flat(log.query[i], log.doc[i]);
    const double z = model.theta.at(log.rank[i] - 1) + model.relevance.forward(flat, features.row(flat));
    const double w = weights.empty() ? 1.0 : weights[i];
    sum += w * bce(sigmoid(z), log.click[i] != 0);
  }
  return sum / static_cast<double>(rows.size());
}

inline double nll_loss(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log,
                       std::span<const std::size_t> rows) {
  return weighted_nll(model, features, log, rows);
}

inline double nll_loss(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log) {
  return nll_loss(model, features, log, all_rows(log));
}

inline double ips_nll_loss(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log,
                           std::span<const std::size_t> rows, const PropensityTable& props,
                           double max_weight = 100.0) {
  const auto w = ips_weights(log, props, max_weight);
  return weighted_nll(model, features, log, rows, w);
}

inline double ips_nll_loss(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log,
                           const PropensityTable& props, double max_weight = 100.0) {
  return ips_nll_loss(model, features, log, all_rows(log), props, max_weight);
}

/// Loss over a whole log, scoring each document once.
inline double evaluate_loss(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log,
                            std::span<const double> weights = {}) {
  if (log.empty()) throw std::invalid_argument("loss over an empty log");
  const auto rel = score_all(model.relevance, features);
  double sum = 0.0;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const double z = model.theta.at(log.rank[i] - 1) + rel[features.flat(log.query[i], log.doc[i])];
    sum += (weights.empty() ? 1.0 : weights[i]) * bce(sigmoid(z), log.click[i] != 0);
  }
  return sum / static_cast<double>(log.size());
}

struct Gradient {
  std::vector<double> theta;
  std::vector<double> relevance;
  double loss = 0.0;
};

/// Batch loss and analytic gradient. d loss / d logit_i = w_i (sigma(z_i) - c_i) / n,
/// back-propagated through the relevance tower once per distinct document.
class GradientEngine {
 public:
  explicit GradientEngine(const FeatureMatrix& features)
      : features_(&features), stamp_(features.num_docs(), 0), slot_(features.num_docs(), 0) {}

  const Gradient& compute(const TwoTowerModel& model, const SessionLog& log, std::span<const std::size_t> rows,
                          std::span<const double> weights = {}) {
    detail::check_rows(log, rows, weights);
    const auto& f = *features_;
    grad_.theta.assign(model.theta.size(), 0.0);
    grad_.relevance.assign(model.relevance.params().size(), 0.0);
    grad_.loss = 0.0;

    ++epoch_;
    if (epoch_ == 0) {
      std::fill(stamp_.begin(), stamp_.end(), 0);
      epoch_ = 1;
    }
    unique_.clear();
    for (auto i : rows) {
      const auto flat = f.flat(log.query[i], log.doc[i]);
      if (stamp_[flat] != epoch_) {
        stamp_[flat] = epoch_;
        slot_[flat] = unique_.size();
        unique_.push_back(flat);
      }
    }
    rel_.resize(unique_.size());
    dlogit_.assign(unique_.size(), 0.0);
    const std::size_t cs = model.relevance.cache_size();
    cache_.resize(unique_.size() * cs);
    for (std::size_t u = 0; u < unique_.size(); ++u) {
      rel_[u] = model.relevance.forward(unique_[u], f.row(unique_[u]), {cache_.data() + u * cs, cs});
    }

    const double inv_n = 1.0 / static_cast<double>(rows.size());
    double loss = 0.0;
    for (auto i : rows) {
      const auto u = slot_[f.flat(log.query[i], log.doc[i])];
      const std::size_t k = log.rank[i];
      if (k == 0 || k > model.theta.size()) throw std::out_of_range("impression rank outside the bias tower");
      const double p = sigmoid(model.theta[k - 1] + rel_[u]);
      const double w = weights.empty() ? 1.0 : weights[i];
      const bool c = log.click[i] != 0;
      loss += w * bce(p, c);
      const double g = w * (p - (c ? 1.0 : 0.0)) * inv_n;
      grad_.theta[k - 1] += g;
      dlogit_[u] += g;
    }
    grad_.loss = loss * inv_n;
    for (std::size_t u = 0; u < unique_.size(); ++u) {
      model.relevance.backward(unique_[u], f.row(unique_[u]), {cache_.data() + u * cs, cs}, dlogit_[u],
                               grad_.relevance);
    }
    return grad_;
  }

 private:
  const FeatureMatrix* features_;
  std::vector<std::uint32_t> stamp_;
  std::vector<std::size_t> slot_;
  std::uint32_t epoch_ = 0;
  std::vector<std::size_t> unique_;
  std::vector<double> rel_;
  std::vector<double> dlogit_;
  std::vector<double> cache_;
  Gradient grad_;
};

inline Gradient gradients(const TwoTowerModel& model, const FeatureMatrix& features, const SessionLog& log,
                          std::span<const std::size_t> rows, std::span<const double> weights = {}) {
  model.relevance.check_compatible(features);
  GradientEngine engine(features);
  return engine.compute(model, log, rows, weights);
}

/// Tracks the best validation loss; stops after `patience` epochs without
/// strict improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records the loss of `epoch` (1-based). Returns true if it is the new best.
  bool update(double loss, std::size_t epoch) {
    if (loss < best_) {
      best_ = loss;
      best_epoch_ = epoch;
      bad_epochs_ = 0;
      return true;
    }
    ++bad_epochs_;
    return false;
  }

  bool should_stop() const { return bad_epochs_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t bad_epochs_ = 0;
};

struct TrainConfig {
  double learning_rate = 0.003;
  double weight_decay = 0.01;
  std::size_t max_epochs = 50;
  std::size_t patience = 3;
  std::size_t batch_size = 1024;
  LossKind loss = LossKind::nll;
  double ips_max_weight = 100.0;
  // Early stopping on the IPS-weighted validation loss when training with IPS.
  bool weighted_early_stopping = true;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
      throw std::invalid_argument("learning rate must be finite and non-negative");
    }
    if (batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (max_epochs == 0) throw std::invalid_argument("max_epochs must be positive");
    if (patience == 0 || patience > max_epochs) throw std::invalid_argument("patience must be in [1, max_epochs]");
  }
};

struct TrainTrace {
  std::vector<double> train_loss;
  std::vector<double> valid_loss;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

struct TrainResult {
  TwoTowerModel model;
  TrainTrace trace;
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mini-batch AdamW over shuffled impressions with early stopping on the
/// validation loss; returns the parameters of the best validation epoch.
/// Propensity tables are required when cfg.loss == ips and are counted from
/// their own log.
inline TrainResult train(TwoTowerModel model, const FeatureMatrix& features, const SessionLog& train_log,
                         const SessionLog& valid_log, const TrainConfig& cfg,
                         const PropensityTable* train_props = nullptr,
                         const PropensityTable* valid_props = nullptr) {
  cfg.validate();
  if (train_log.empty() || valid_log.empty()) throw std::invalid_argument("train: logs must be non-empty");
  model.relevance.check_compatible(features);

  std::vector<double> train_w;
  std::vector<double> valid_w;
  if (cfg.loss == LossKind::ips) {
    if (!train_props || !valid_props) throw std::invalid_argument("ips training requires propensity tables");
    train_w = ips_weights(train_log, *train_props, cfg.ips_max_weight);
    if (cfg.weighted_early_stopping) valid_w = ips_weights(valid_log, *valid_props, cfg.ips_max_weight);
  }

  AdamW::Params opt{cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay};
  AdamW theta_opt(model.theta.size(), opt);
  AdamW rel_opt(model.relevance.params().size(), opt);
  GradientEngine engine(features);

  TrainResult result{model, {}};
  EarlyStopping stopper(cfg.patience);
  std::vector<std::size_t> rows = all_rows(train_log);

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto rng = Stream::make(cfg.seed, StreamTag::minibatch, epoch);
    rng.shuffle(std::span<std::size_t>(rows));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < rows.size(); start += cfg.batch_size) {
      const auto end = std::min(rows.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(rows.data() + start, end - start);
      const auto& g = engine.compute(model, train_log, batch, train_w);
      if (!std::isfinite(g.loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches));
      }
      theta_opt.step(model.theta, g.theta);
      rel_opt.step(model.relevance.params(), g.relevance);
      epoch_loss += g.loss;
      ++batches;
    }
    result.trace.train_loss.push_back(epoch_loss / static_cast<double>(batches));

    const double vloss = evaluate_loss(model, features, valid_log, valid_w);
    if (!std::isfinite(vloss)) throw TrainingError("non-finite validation loss at epoch " + std::to_string(epoch));
    result.trace.valid_loss.push_back(vloss);
    if (stopper.update(vloss, epoch)) result.model = model;
    if (stopper.should_stop()) {
      result.trace.stopped_early = epoch < cfg.max_epochs;
      break;
    }
  }
  result.trace.best_epoch = stopper.best_epoch();
  return result;
}

// ---------------------------------------------------------------------------
// Parameter dump: a format line, a tower line, then for every tensor a header
// `tensor <name> <d0>[x<d1>]` followed by one value per line (row-major).

namespace detail {

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

inline void emit(std::string& out, const std::string& name, std::vector<std::size_t> shape,
                 std::span<const double> values) {
  out += "tensor ";
  out += name;
  out += ' ';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(shape[i]);
  }
  out += '\n';
  for (double v : values) {
    out += format_double(v);
    out += '\n';
  }
}

}  // namespace detail

inline std::string dump_params(const TwoTowerModel& model) {
  std::string out = "towerlab-params 1\n";
  out += "tower ";
  out += to_string(model.relevance.kind());
  out += '\n';
  detail::emit(out, "theta", {model.theta.size()}, model.theta);
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        const std::span<const double> p(t.params);
        if constexpr (std::is_same_v<T, EmbeddingTower>) {
          std::vector<double> off(t.offsets.begin(), t.offsets.end());
          detail::emit(out, "offsets", {off.size()}, off);
          detail::emit(out, "gamma", {p.size()}, p);
        } else if constexpr (std::is_same_v<T, LinearTower>) {
          detail::emit(out, "weight", {t.dim}, p.subspan(0, t.dim));
          detail::emit(out, "intercept", {1}, p.subspan(t.dim, 1));
        } else {
          const auto h = t.hidden;
          detail::emit(out, "w1", {h, t.dim}, p.subspan(t.w1(), h * t.dim));
          detail::emit(out, "b1", {h}, p.subspan(t.b1(), h));
          detail::emit(out, "w2", {h, h}, p.subspan(t.w2(), h * h));
          detail::emit(out, "b2", {h}, p.subspan(t.b2(), h));
          detail::emit(out, "w3", {h}, p.subspan(t.w3(), h));
          detail::emit(out, "b3", {1}, p.subspan(t.b3(), 1));
        }
      },
      model.relevance.variant());
  return out;
}

inline TwoTowerModel load_params(std::string_view text) {
  std::vector<std::string_view> lines;
  for (auto l : split(text, '\n')) {
    l = trim(l);
    if (!l.empty()) lines.push_back(l);
  }
  if (lines.size() < 2 || lines[0] != "towerlab-params 1") throw std::runtime_error("not a towerlab parameter dump");
  if (lines[1].substr(0, 6) != "tower ") throw std::runtime_error("missing tower line");
  const auto kind = parse_tower_kind(lines[1].substr(6));

  std::vector<detail::Tensor> tensors;
  std::size_t i = 2;
  while (i < lines.size()) {
    const auto head = split_ws(lines[i]);
    if (head.size() != 3 || head[0] != "tensor") {
      throw std::runtime_error("expected tensor header at line " + std::to_string(i + 1));
    }
    detail::Tensor t{std::string(head[1]), {}, {}};
    std::size_t n = 1;
    for (auto d : split(head[2], 'x')) {
      const auto v = parse_int<std::size_t>(d);
      if (!v) throw std::runtime_error("bad tensor shape at line " + std::to_string(i + 1));
      t.shape.push_back(*v);
      n *= *v;
    }
    ++i;
    if (i + n > lines.size()) throw std::runtime_error("truncated tensor '" + t.name + "'");
    t.values.reserve(n);
    for (std::size_t j = 0; j < n; ++j, ++i) {
      const auto v = parse_double(lines[i]);
      if (!v) throw std::runtime_error("bad value at line " + std::to_string(i + 1));
      t.values.push_back(*v);
    }
    tensors.push_back(std::move(t));
  }
  auto find = [&](std::string_view name) -> const detail::Tensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw std::runtime_error("missing tensor '" + std::string(name) + "'");
  };

  TwoTowerModel m;
  m.theta = find("theta").values;
  switch (kind) {
    case TowerKind::embedding: {
      EmbeddingTower t;
      for (double v : find("offsets").values) t.offsets.push_back(static_cast<std::size_t>(v));
      t.params = find("gamma").values;
      if (t.offsets.empty() || t.offsets.back() != t.params.size()) throw std::runtime_error("inconsistent embedding");
      m.relevance = std::move(t);
      break;
    }
    case TowerKind::linear: {
      const auto& w = find("weight");
      LinearTower t{w.values.size(), w.values};
      t.params.push_back(find("intercept").values.at(0));
      m.relevance = std::move(t);
      break;
    }
    case TowerKind::mlp: {
      const auto& w1 = find("w1");
      if (w1.shape.size() != 2) throw std::runtime_error("w1 must be two-dimensional");
      MlpTower t{w1.shape[1], w1.shape[0], {}};
      for (auto name : {"w1", "b1", "w2", "b2", "w3", "b3"}) {
        const auto& v = find(name).values;
        t.params.insert(t.params.end(), v.begin(), v.end());
      }
      if (t.params.size() != MlpTower::param_count(t.dim, t.hidden)) throw std::runtime_error("inconsistent mlp");
      m.relevance = std::move(t);
      break;
    }
  }
  return m;
}

}  // namespace towerlab
