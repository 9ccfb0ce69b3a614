#pragma once

// Bias recovery against the simulated ground truth, and nDCG@k.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "towerlab/clicks.hpp"
#include "towerlab/data.hpp"
#include "towerlab/tables.hpp"
#include "towerlab/towers.hpp"

namespace towerlab {

/// Subtracts the first entry from every entry (theta_1 = 0 normalization).
inline std::vector<double> anchor_bias(std::span<const double> theta) {
  if (theta.empty()) throw std::invalid_argument("anchor_bias: empty vector");
  std::vector<double> out(theta.begin(), theta.end());
  const double first = out.front();
  for (auto& v : out) v -= first;
  return out;
}

struct BiasRecoveryReport {
  struct Row {
    std::size_t rank = 0;
    double theta_true = 0.0;
    double theta_hat = 0.0;  // anchored
    double abs_error = 0.0;
  };
  std::vector<Row> rows;
  double mae = 0.0;
  double max_error = 0.0;
};

/// Anchored estimates against theta_k = -ln k for ranks 1..K.
inline BiasRecoveryReport bias_recovery(std::span<const double> theta_hat, std::size_t k) {
  if (k == 0 || theta_hat.size() < k) throw std::invalid_argument("bias_recovery: need at least K estimates");
  const auto anchored = anchor_bias(theta_hat.first(k));
  BiasRecoveryReport rep;
  for (std::size_t r = 1; r <= k; ++r) {
    const double truth = true_bias_logit(r) - true_bias_logit(1);
    const double err = std::fabs(anchored[r - 1] - truth);
    rep.rows.push_back({r, truth, anchored[r - 1], err});
    rep.mae += err;
    rep.max_error = std::max(rep.max_error, err);
  }
  rep.mae /= static_cast<double>(k);
  return rep;
}

/// nDCG@k with gain 2^label - 1 and discount 1/log2(rank + 1). Documents are
/// ordered by descending score, ties by ascending doc id (or index when no ids
/// are given). nullopt when no label is positive.
inline std::optional<double> ndcg_at_k(std::span<const double> scores, std::span<const double> labels,
                                       std::size_t k = 10, std::span<const int> doc_ids = {}) {
  if (scores.size() != labels.size()) throw std::invalid_argument("ndcg_at_k: size mismatch");
  if (!doc_ids.empty() && doc_ids.size() != scores.size()) throw std::invalid_argument("ndcg_at_k: id size mismatch");
  if (std::none_of(labels.begin(), labels.end(), [](double l) { return l > 0.0; })) return std::nullopt;
  const std::size_t n = scores.size();
  auto id = [&](std::size_t i) { return doc_ids.empty() ? static_cast<long>(i) : static_cast<long>(doc_ids[i]); };
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return id(a) < id(b);
  });
  auto dcg = [&](const std::vector<std::size_t>& ord) {
    double s = 0.0;
    for (std::size_t r = 0; r < std::min(k, n); ++r) {
      s += (std::exp2(labels[ord[r]]) - 1.0) / std::log2(static_cast<double>(r) + 2.0);
    }
    return s;
  };
  std::vector<std::size_t> ideal(n);
  std::iota(ideal.begin(), ideal.end(), std::size_t{0});
  std::sort(ideal.begin(), ideal.end(), [&](std::size_t a, std::size_t b) { return labels[a] > labels[b]; });
  return dcg(order) / dcg(ideal);
}

struct RankingReport {
  double mean_ndcg = 0.0;
  std::vector<std::optional<double>> per_query;  // nullopt: excluded (no relevant docs)
  std::size_t evaluated = 0;
  std::size_t excluded = 0;
};

/// Mean nDCG@k of ranking each query by `scores` against `labels`.
inline RankingReport evaluate_ranking(const Dataset& ds, const DocValues& scores, const DocValues& labels,
                                      std::size_t k = 10) {
  if (!scores.matches(ds) || !labels.matches(ds)) throw std::invalid_argument("tables do not match dataset");
  RankingReport rep;
  double sum = 0.0;
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
    std::vector<int> ids;
    for (const auto& d : ds.queries[qi].docs) ids.push_back(d.doc_id);
    const auto v = ndcg_at_k(scores.values[qi], labels.values[qi], k, ids);
    rep.per_query.push_back(v);
    if (v) {
      sum += *v;
      ++rep.evaluated;
    } else {
      ++rep.excluded;
    }
  }
  rep.mean_ndcg = rep.evaluated ? sum / static_cast<double>(rep.evaluated) : 0.0;
  return rep;
}

}  // namespace towerlab
