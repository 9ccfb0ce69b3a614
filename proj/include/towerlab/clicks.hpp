#pragma once

// Position-biased click simulation under the additive user model
//   P(click | q, d, k) = sigmoid(-ln k + (gamma_{q,d} - 2)).

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "towerlab/data.hpp"
#include "towerlab/log.hpp"
#include "towerlab/model.hpp"
#include "towerlab/policy.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/tables.hpp"

namespace towerlab {

inline double true_bias_logit(std::size_t rank) { return -std::log(static_cast<double>(rank)); }

struct TrueUserModel {
  LabelTable labels;  // gamma in [0,4]; relevance logit is gamma - 2

  double relevance_logit(std::size_t qi, std::size_t pos) const { return labels.at(qi, pos) - 2.0; }
};

inline double click_probability(const TrueUserModel& user, std::size_t qi, std::size_t pos, std::size_t rank) {
  if (rank == 0) throw std::invalid_argument("rank must be >= 1");
  return sigmoid(true_bias_logit(rank) + user.relevance_logit(qi, pos));
}

/// Each session draws a query uniformly, a ranking from the policy, and one
/// independent Bernoulli click per displayed rank. Session ids run from
/// `first_session_id`; logs of different splits should use disjoint ranges so
/// their exploration draws are independent.
inline SessionLog simulate(const Dataset& ds, const TrueUserModel& user, const LoggingPolicy& policy,
                           std::uint64_t n_sessions, std::uint64_t seed, std::uint64_t first_session_id = 0) {
  if (!user.labels.matches(ds)) throw std::invalid_argument("user model labels do not match dataset");
  if (policy.exploit.size() != ds.queries.size()) throw std::invalid_argument("policy does not match dataset");
  SessionLog log;
  log.n_sessions = n_sessions;
  log.max_rank = ds.max_docs_per_query();
  if (n_sessions == 0 || ds.queries.empty()) {
    log.n_sessions = 0;
    return log;
  }
  const double mean_docs = static_cast<double>(ds.num_docs()) / static_cast<double>(ds.queries.size());
  log.reserve(static_cast<std::size_t>(mean_docs * static_cast<double>(n_sessions) * 1.05));

  // sigmoid(-ln k + g) is looked up per (document, rank) in the hot loop.
  const auto offsets = ds.doc_offsets();
  std::vector<double> prob(ds.num_docs() * log.max_rank);
  for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
    for (std::size_t p = 0; p < ds.queries[qi].docs.size(); ++p) {
      for (std::size_t k = 1; k <= log.max_rank; ++k) {
        prob[(offsets[qi] + p) * log.max_rank + (k - 1)] = click_probability(user, qi, p, k);
      }
    }
  }

  for (std::uint64_t s = 0; s < n_sessions; ++s) {
    const std::uint64_t sid = first_session_id + s;
    auto rng = Stream::make(seed, StreamTag::session, sid);
    const auto qi = static_cast<std::uint32_t>(rng.below(ds.queries.size()));
    const auto ranking = draw_ranking(policy, qi, sid);
    for (std::size_t r = 0; r < ranking.docs.size(); ++r) {
      const auto pos = ranking.docs[r];
      const double p = prob[(offsets[qi] + pos) * log.max_rank + r];
      log.push({sid, qi, pos, static_cast<std::uint16_t>(r + 1), static_cast<std::uint8_t>(rng.bernoulli(p))});
    }
  }
  return log;
}

}  // namespace towerlab
