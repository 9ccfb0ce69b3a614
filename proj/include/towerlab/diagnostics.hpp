#pragma once

// Identifiability and misspecification diagnostics over logs and fitted models.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "towerlab/io.hpp"
#include "towerlab/log.hpp"
#include "towerlab/model.hpp"
#include "towerlab/rng.hpp"
#include "towerlab/stats.hpp"
#include "towerlab/synth.hpp"
#include "towerlab/towers.hpp"
#include "towerlab/union_find.hpp"

namespace towerlab {

/// Graph whose vertices are bias configurations (ranks by default) and whose
/// edges join configurations sharing at least one displayed item.
struct SwapGraph {
  std::size_t num_vertices = 0;
  std::size_t first_label = 1;  // vertex v is reported as first_label + v
  struct Edge {
    std::size_t a = 0;
    std::size_t b = 0;  // a < b, both labels
    std::size_t shared_items = 0;
    bool operator==(const Edge&) const = default;
  };
  std::vector<Edge> edges;                            // sorted by (a, b)
  std::vector<std::vector<std::size_t>> components;  // labels, ascending

  bool connected() const { return components.size() <= 1; }

  bool has_edge(std::size_t a, std::size_t b) const {
    if (a > b) std::swap(a, b);
    return std::any_of(edges.begin(), edges.end(), [&](const Edge& e) { return e.a == a && e.b == b; });
  }

  /// `connected: true|false components: {1,2} {3}`
  std::string verdict() const {
    std::string s = connected() ? "connected: true" : "connected: false";
    s += " components:";
    for (const auto& c : components) {
      s += " {";
      for (std::size_t i = 0; i < c.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(c[i]);
      }
      s += '}';
    }
    return s;
  }
};

/// An item (e.g. a query-document pair) observed under a vertex (e.g. a rank).
struct VertexObservation {
  std::uint64_t item = 0;
  std::size_t vertex = 0;  // 0-based
};

inline SwapGraph build_vertex_graph(std::size_t num_vertices, std::span<const VertexObservation> obs,
                                    std::size_t first_label) {
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> seen;
  for (const auto& o : obs) {
    if (o.vertex >= num_vertices) throw std::out_of_range("observation vertex out of range");
    auto& v = seen[o.item];
    if (std::find(v.begin(), v.end(), o.vertex) == v.end()) v.push_back(o.vertex);
  }
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> edge_count;
  UnionFind uf(num_vertices);
  for (auto& [item, verts] : seen) {
    std::sort(verts.begin(), verts.end());
    for (std::size_t i = 0; i < verts.size(); ++i) {
      for (std::size_t j = i + 1; j < verts.size(); ++j) {
        ++edge_count[{verts[i], verts[j]}];
        uf.unite(verts[i], verts[j]);
      }
    }
  }
  SwapGraph g;
  g.num_vertices = num_vertices;
  g.first_label = first_label;
  for (const auto& [e, n] : edge_count) g.edges.push_back({e.first + first_label, e.second + first_label, n});
  for (auto comp : uf.components()) {
    for (auto& v : comp) v += first_label;
    g.components.push_back(std::move(comp));
  }
  return g;
}

inline std::uint64_t doc_key(std::uint32_t query, std::uint32_t doc) {
  return (static_cast<std::uint64_t>(query) << 32) | doc;
}

/// Rank graph of a log: ranks 1..K, edge (k, k') iff some (q, d) was shown at both.
inline SwapGraph build_swap_graph(const SessionLog& log, std::size_t max_rank = 0) {
  const std::size_t k = std::max(max_rank, log.max_rank);
  std::vector<VertexObservation> obs;
  obs.reserve(log.size());
  for (std::size_t i = 0; i < log.size(); ++i) obs.push_back({doc_key(log.query[i], log.doc[i]), log.rank[i] - 1u});
  return build_vertex_graph(k, obs, 1);
}

/// Factorized bias configurations, e.g. rank x content type x device.
struct BiasConfigSpace {
  std::vector<std::size_t> dims;

  std::size_t size() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
  }

  std::size_t encode(std::span<const std::size_t> coords) const {
    if (coords.size() != dims.size()) throw std::invalid_argument("coordinate arity mismatch");
    std::size_t id = 0;
    for (std::size_t i = 0; i < dims.size(); ++i) {
      if (coords[i] >= dims[i]) throw std::out_of_range("bias configuration coordinate out of range");
      id = id * dims[i] + coords[i];
    }
    return id;
  }
};

/// Connectivity of bias configurations linked by items shown under several of them.
inline SwapGraph bias_config_graph(std::size_t num_configs, std::span<const VertexObservation> tagged) {
  return build_vertex_graph(num_configs, tagged, 0);
}

// ---------------------------------------------------------------------------
// Feature overlap between ranks.

struct RankPairOverlap {
  std::size_t rank_a = 0;
  std::size_t rank_b = 0;
  double min_distance = std::numeric_limits<double>::infinity();
  std::uint64_t pairs_within_eps = 0;
  std::optional<double> offset_bound;  // 2 L d_min
};

struct OverlapReport {
  double eps = 0.0;
  std::vector<RankPairOverlap> pairs;
  SwapGraph graph;
};

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

/// Distinct flat documents displayed at each rank (index k-1).
inline std::vector<std::vector<std::size_t>> docs_per_rank(const SessionLog& log, const FeatureMatrix& f,
                                                           std::size_t max_rank) {
  std::vector<std::vector<std::size_t>> per(max_rank);
  for (std::size_t i = 0; i < log.size(); ++i) per.at(log.rank[i] - 1).push_back(f.flat(log.query[i], log.doc[i]));
  for (auto& v : per) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return per;
}

}  // namespace detail

/// Default overlap radius: the 5th percentile of cross-rank feature distances.
/// Above `max_exact` distances a deterministic stride sample is used.
inline double default_overlap_eps(const SessionLog& log, const FeatureMatrix& f, std::size_t max_rank = 0,
                                  std::size_t max_exact = 4'000'000) {
  const std::size_t k = std::max(max_rank, log.max_rank);
  const auto per = detail::docs_per_rank(log, f, k);
  std::size_t total = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) total += per[a].size() * per[b].size();
  }
  if (total == 0) return 0.0;
  const std::size_t stride = (total + max_exact - 1) / max_exact;
  std::vector<double> d;
  d.reserve(total / stride + 1);
  std::size_t counter = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      for (auto x : per[a]) {
        for (auto y : per[b]) {
          if (counter++ % stride == 0) d.push_back(detail::euclidean(f.row(x), f.row(y)));
        }
      }
    }
  }
  std::sort(d.begin(), d.end());
  return percentile_sorted(d, 0.05);
}

/// Minimum cross-rank feature distance per rank pair, the overlap graph at
/// radius `eps`, and optionally the offset bound 2 L d_min per pair.
inline OverlapReport feature_overlap(const SessionLog& log, const FeatureMatrix& f, double eps,
                                     std::optional<double> lipschitz = std::nullopt, std::size_t max_rank = 0) {
  if (!(eps > 0.0)) throw std::invalid_argument("overlap radius must be positive");
  const std::size_t k = std::max(max_rank, log.max_rank);
  const auto per = detail::docs_per_rank(log, f, k);
  OverlapReport rep;
  rep.eps = eps;
  std::vector<VertexObservation> links;
  std::uint64_t link_id = 0;
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      RankPairOverlap p{a + 1, b + 1, std::numeric_limits<double>::infinity(), 0, std::nullopt};
      for (auto x : per[a]) {
        for (auto y : per[b]) {
          const double d = x == y ? 0.0 : detail::euclidean(f.row(x), f.row(y));
          p.min_distance = std::min(p.min_distance, d);
          if (d <= eps) ++p.pairs_within_eps;
        }
      }
      if (lipschitz && std::isfinite(p.min_distance)) p.offset_bound = 2.0 * *lipschitz * p.min_distance;
      if (p.min_distance <= eps) {
        links.push_back({link_id, a});
        links.push_back({link_id, b});
        ++link_id;
      }
      rep.pairs.push_back(p);
    }
  }
  rep.graph = build_vertex_graph(k, links, 1);
  for (auto& e : rep.graph.edges) e.shared_items = 0;
  for (auto& e : rep.graph.edges) {
    for (const auto& p : rep.pairs) {
      if (p.rank_a == e.a && p.rank_b == e.b) e.shared_items = p.pairs_within_eps;
    }
  }
  return rep;
}

/// max |r(x1) - r(x2)| / |x1 - x2| over random document pairs.
inline double estimate_lipschitz(const RelevanceTower& tower, const FeatureMatrix& f, std::size_t n_pairs,
                                 std::uint64_t seed) {
  if (f.num_docs() < 2) return 0.0;
  auto rng = Stream::make(seed, StreamTag::lipschitz);
  double best = 0.0;
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto a = rng.below(f.num_docs());
    const auto b = rng.below(f.num_docs());
    const double d = detail::euclidean(f.row(a), f.row(b));
    if (d <= 0.0) continue;
    best = std::max(best, std::fabs(tower.forward(a, f.row(a)) - tower.forward(b, f.row(b))) / d);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Residuals of a fitted model against the empirical click rates of a log.

struct ResidualCell {
  std::uint32_t query = 0;
  std::uint32_t doc = 0;
  std::uint16_t rank = 0;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  double predicted = 0.0;
  double residual = 0.0;  // empirical click rate - predicted
  double propensity = 0.0;
};

struct RankResidual {
  std::size_t rank = 0;
  std::size_t cells = 0;
  std::uint64_t impressions = 0;
  double mean_residual = 0.0;        // impression-weighted
  double propensity_correlation = 0.0;
  double policy_weighted_sum = 0.0;  // sum_q P(q) sum_d pi(d,k|q) eps(q,d,k)
};

struct ResidualReport {
  std::vector<ResidualCell> cells;
  std::vector<RankResidual> ranks;
  double overall_correlation = 0.0;
  // sum_k pi(d,k|q) eps(q,d,k) for every observed (q, d), keyed by doc_key.
  std::vector<std::pair<std::uint64_t, double>> doc_sums;

  double max_abs_mean_residual() const {
    double m = 0.0;
    for (const auto& r : ranks) m = std::max(m, std::fabs(r.mean_residual));
    return m;
  }
  double max_abs_rank_sum() const {
    double m = 0.0;
    for (const auto& r : ranks) m = std::max(m, std::fabs(r.policy_weighted_sum));
    return m;
  }
  double max_abs_doc_sum() const {
    double m = 0.0;
    for (const auto& [k, v] : doc_sums) m = std::max(m, std::fabs(v));
    return m;
  }
};

inline ResidualReport residual_report(const TwoTowerModel& model, const FeatureMatrix& f, const SessionLog& log,
                                      const PropensityTable& props) {
  model.relevance.check_compatible(f);
  const std::size_t k_max = model.max_rank();
  // Dense per-(doc, rank) tallies.
  std::vector<std::uint64_t> imps(f.num_docs() * k_max, 0), clicks(f.num_docs() * k_max, 0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log.rank[i] > k_max) throw std::out_of_range("log rank exceeds model ranks");
    const auto idx = f.flat(log.query[i], log.doc[i]) * k_max + (log.rank[i] - 1);
    ++imps[idx];
    clicks[idx] += log.click[i];
  }
  std::uint64_t total_sessions = 0;
  for (std::size_t qi = 0; qi < props.num_queries(); ++qi) total_sessions += props.sessions(qi);

  ResidualReport rep;
  rep.ranks.resize(k_max);
  std::vector<std::vector<double>> res_by_rank(k_max), prop_by_rank(k_max);
  std::vector<double> all_res, all_prop;
  std::vector<double> weighted(k_max, 0.0);
  for (std::size_t qi = 0; qi < f.num_queries(); ++qi) {
    for (std::size_t p = 0; p < f.docs_in(qi); ++p) {
      const auto flat = f.flat(qi, p);
      const double rel = model.relevance.forward(flat, f.row(flat));
      double doc_sum = 0.0;
      bool observed = false;
      for (std::size_t k = 1; k <= k_max; ++k) {
        const auto idx = flat * k_max + (k - 1);
        if (imps[idx] == 0) continue;
        observed = true;
        ResidualCell c;
        c.query = static_cast<std::uint32_t>(qi);
        c.doc = static_cast<std::uint32_t>(p);
        c.rank = static_cast<std::uint16_t>(k);
        c.impressions = imps[idx];
        c.clicks = clicks[idx];
        c.predicted = sigmoid(model.theta[k - 1] + rel);
        c.residual = static_cast<double>(c.clicks) / static_cast<double>(c.impressions) - c.predicted;
        c.propensity = props.propensity(qi, p, k);
        doc_sum += c.propensity * c.residual;
        const double pq = total_sessions ? static_cast<double>(props.sessions(qi)) / total_sessions : 0.0;
        auto& r = rep.ranks[k - 1];
        r.cells += 1;
        r.impressions += c.impressions;
        weighted[k - 1] += static_cast<double>(c.impressions) * c.residual;
        r.policy_weighted_sum += pq * c.propensity * c.residual;
        res_by_rank[k - 1].push_back(c.residual);
        prop_by_rank[k - 1].push_back(c.propensity);
        all_res.push_back(c.residual);
        all_prop.push_back(c.propensity);
        rep.cells.push_back(c);
      }
      if (observed) rep.doc_sums.emplace_back(doc_key(static_cast<std::uint32_t>(qi), static_cast<std::uint32_t>(p)), doc_sum);
    }
  }
  for (std::size_t k = 0; k < k_max; ++k) {
    auto& r = rep.ranks[k];
    r.rank = k + 1;
    if (r.impressions) r.mean_residual = weighted[k] / static_cast<double>(r.impressions);
    r.propensity_correlation = pearson(res_by_rank[k], prop_by_rank[k]);
  }
  rep.overall_correlation = pearson(all_res, all_prop);
  return rep;
}

// ---------------------------------------------------------------------------
// Reparameterization theta_k += delta_k, gamma_{q,d} -= delta_{k(q,d)}.

struct ShiftProbeResult {
  double loss_difference = 0.0;
  // (query index, position) pairs observed at more than one rank; shifted by
  // the delta of their lowest observed rank.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> blockers;
};

inline ShiftProbeResult shift_invariance_probe(const TwoTowerModel& model, const FeatureMatrix& f,
                                               const SessionLog& log, std::span<const double> deltas) {
  const auto* emb = std::get_if<EmbeddingTower>(&model.relevance.variant());
  if (!emb) throw std::invalid_argument("shift_invariance_probe requires an embedding tower");
  if (deltas.size() != model.max_rank()) throw std::invalid_argument("one delta per rank required");
  model.relevance.check_compatible(f);

  constexpr std::uint16_t kUnseen = 0;
  std::vector<std::uint16_t> lowest(f.num_docs(), kUnseen);
  std::vector<char> multi(f.num_docs(), 0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    const auto flat = f.flat(log.query[i], log.doc[i]);
    const auto k = log.rank[i];
    if (lowest[flat] == kUnseen) {
      lowest[flat] = k;
    } else if (lowest[flat] != k) {
      multi[flat] = 1;
      lowest[flat] = std::min(lowest[flat], k);
    }
  }
  TwoTowerModel shifted = model;
  auto& gamma = shifted.relevance.params();
  for (std::size_t k = 0; k < deltas.size(); ++k) shifted.theta[k] += deltas[k];
  ShiftProbeResult res;
  for (std::size_t qi = 0; qi < f.num_queries(); ++qi) {
    for (std::size_t p = 0; p < f.docs_in(qi); ++p) {
      const auto flat = f.flat(qi, p);
      if (lowest[flat] == kUnseen) continue;
      gamma[flat] -= deltas[lowest[flat] - 1];
      if (multi[flat]) res.blockers.emplace_back(static_cast<std::uint32_t>(qi), static_cast<std::uint32_t>(p));
    }
  }
  res.loss_difference = std::fabs(evaluate_loss(model, f, log) - evaluate_loss(shifted, f, log));
  return res;
}

// ---------------------------------------------------------------------------
// CSV emission.

inline std::string swap_graph_csv(const SwapGraph& g) {
  std::string out = "vertex_a,vertex_b,shared_items\n";
  for (const auto& e : g.edges) {
    out += std::to_string(e.a) + ',' + std::to_string(e.b) + ',' + std::to_string(e.shared_items) + '\n';
  }
  return out;
}

inline std::string components_csv(const SwapGraph& g) {
  std::string out = "vertex,component\n";
  std::vector<std::size_t> comp(g.num_vertices, 0);
  for (std::size_t c = 0; c < g.components.size(); ++c) {
    for (auto v : g.components[c]) comp[v - g.first_label] = c;
  }
  for (std::size_t v = 0; v < g.num_vertices; ++v) {
    out += std::to_string(v + g.first_label) + ',' + std::to_string(comp[v]) + '\n';
  }
  return out;
}

inline std::string overlap_csv(const OverlapReport& r) {
  std::string out = "rank_a,rank_b,min_distance,pairs_within_eps,overlap,offset_bound\n";
  for (const auto& p : r.pairs) {
    out += std::to_string(p.rank_a) + ',' + std::to_string(p.rank_b) + ',' +
           (std::isfinite(p.min_distance) ? format_double(p.min_distance) : std::string("inf")) + ',' +
           std::to_string(p.pairs_within_eps) + ',' + (p.min_distance <= r.eps ? "1" : "0") + ',' +
           (p.offset_bound ? format_double(*p.offset_bound) : std::string()) + '\n';
  }
  return out;
}

inline std::string residual_ranks_csv(const ResidualReport& r) {
  std::string out = "rank,cells,impressions,mean_residual,residual_propensity_corr,policy_weighted_sum\n";
  for (const auto& k : r.ranks) {
    out += std::to_string(k.rank) + ',' + std::to_string(k.cells) + ',' + std::to_string(k.impressions) + ',' +
           format_double(k.mean_residual) + ',' + format_double(k.propensity_correlation) + ',' +
           format_double(k.policy_weighted_sum) + '\n';
  }
  return out;
}

}  // namespace towerlab
