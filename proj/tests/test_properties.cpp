// Randomized invariant checks; every case is reproducible from its seed.

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "test_util.hpp"
#include "towerlab/clicks.hpp"
#include "towerlab/diagnostics.hpp"
#include "towerlab/eval.hpp"
#include "towerlab/policy.hpp"
#include "towerlab/synth.hpp"

using namespace towerlab;

namespace {

constexpr std::uint64_t kCases = 25;

Dataset random_shape(std::uint64_t seed, std::size_t max_docs = 8, std::size_t dim = 4) {
  auto rng = Stream::make(seed, StreamTag::corpus, 1);
  std::vector<std::vector<int>> labels(1 + rng.below(6));
  for (auto& q : labels) {
    q.resize(1 + rng.below(max_docs));
    for (auto& l : q) l = static_cast<int>(rng.below(5));
  }
  return towerlab::testing::random_dataset(labels, dim, seed);
}

LabelTable random_labels(const Dataset& ds, std::uint64_t seed) {
  auto rng = Stream::make(seed, StreamTag::label_noise, 2);
  LabelTable t{zeros_like(ds)};
  for (auto& q : t.values) {
    for (auto& v : q) v = rng.uniform(0.0, 4.0);
  }
  return t;
}

SessionLog log_for(const Dataset& ds, const LabelTable& labels, std::size_t sessions, double tau, std::uint64_t seed) {
  const auto pol = interpolate_scores(ds, ScoreTable{labels}, 1.0, tau, seed);
  return simulate(ds, TrueUserModel{labels}, pol, sessions, seed);
}

// Brute-force nDCG: DCG of the score order over the best DCG of any permutation.
double brute_ndcg(const std::vector<double>& scores, const std::vector<double>& labels, std::size_t k) {
  const auto n = scores.size();
  auto dcg = [&](const std::vector<std::size_t>& ord) {
    double s = 0.0;
    for (std::size_t r = 0; r < std::min(k, n); ++r) s += (std::pow(2.0, labels[ord[r]]) - 1.0) / std::log2(r + 2.0);
    return s;
  };
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  auto by_score = perm;
  std::stable_sort(by_score.begin(), by_score.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });
  double best = 0.0;
  do {
    best = std::max(best, dcg(perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return dcg(by_score) / best;
}

}  // namespace

TEST(DataProperties, Log1pIsOddAndMonotone) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    auto rng = Stream::make(s, StreamTag::corpus, 3);
    std::vector<double> xs(50);
    for (auto& x : xs) x = rng.uniform(-1e3, 1e3);
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i < xs.size(); ++i) {
      EXPECT_EQ(log1p_signed(-xs[i]), -log1p_signed(xs[i]));
      if (i) {
        EXPECT_LE(log1p_signed(xs[i - 1]), log1p_signed(xs[i]));
      }
    }
  }
}

TEST(DataProperties, SerializeParseRoundTrip) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    EXPECT_EQ(parse_letor_text(serialize_letor(ds)), ds) << "seed " << s;
  }
}

TEST(DataProperties, TruncationIsIdempotentAndKeepsTopLabels) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s, 40);
    const std::size_t k = 1 + s % 10;
    const auto once = truncate_top_k(ds, k);
    EXPECT_EQ(truncate_top_k(once, k), once);
    for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
      std::vector<int> all, kept;
      for (const auto& d : ds.queries[qi].docs) all.push_back(d.label);
      for (const auto& d : once.queries[qi].docs) kept.push_back(d.label);
      std::sort(all.rbegin(), all.rend());
      std::sort(kept.rbegin(), kept.rend());
      all.resize(std::min(k, all.size()));
      EXPECT_EQ(kept, all);
    }
  }
}

TEST(SynthProperties, ScalingPreservesOrderAndRange) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = towerlab::testing::random_dataset(6, 8, 5, s);
    const auto gen = SyntheticLabeler::random(s % 2 ? LabelKind::linear : LabelKind::nonlinear, 5, s);
    const auto raw = generate_raw_labels(ds, gen);
    const auto scaled = minmax_percentile_scale(raw);
    EXPECT_EQ(scaled, generate_labels(ds, gen));
    std::vector<std::pair<double, double>> pairs;
    raw.for_each([&](std::size_t qi, std::size_t p, double v) { pairs.emplace_back(v, scaled.at(qi, p)); });
    std::sort(pairs.begin(), pairs.end());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      EXPECT_GE(pairs[i].second, 0.0);
      EXPECT_LE(pairs[i].second, 4.0);
      if (i) {
        EXPECT_LE(pairs[i - 1].second, pairs[i].second);
      }
    }
  }
}

TEST(SynthProperties, NoiselessLinearLabelsAreLinearInFeatures) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = towerlab::testing::random_dataset(4, 10, 3, s);
    const auto gen = SyntheticLabeler::random(LabelKind::linear, 3, s, 0.0);
    const auto raw = generate_raw_labels(ds, gen);
    const auto scaler = PercentileScaler::fit(raw);
    const double slope = 4.0 / (scaler.p95 - scaler.p5);
    const auto& docs = ds.queries[0].docs;
    for (std::size_t a = 0; a < docs.size(); ++a) {
      for (std::size_t b = 0; b < docs.size(); ++b) {
        const double ya = scaler.apply(raw.at(0, a)), yb = scaler.apply(raw.at(0, b));
        if (ya <= 0.0 || ya >= 4.0 || yb <= 0.0 || yb >= 4.0) continue;
        double dot = 0.0;
        for (std::size_t j = 0; j < 3; ++j) dot += gen.w[j] * (docs[a].features[j] - docs[b].features[j]);
        EXPECT_NEAR(ya - yb, slope * dot, 1e-12);
      }
    }
  }
}

TEST(PolicyProperties, RankingsArePermutationsAndScoresFrozen) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    const auto labels = random_labels(ds, s);
    const double alpha = Stream::make(s, StreamTag::corpus, 4).uniform(-1.0, 1.0);
    const auto a = interpolate_scores(ds, ScoreTable{labels}, alpha, 0.5, s);
    const auto b = interpolate_scores(ds, ScoreTable{labels}, alpha, 0.5, s);
    EXPECT_EQ(a.scores, b.scores);
    for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
      for (std::uint64_t sid = 0; sid < 20; ++sid) {
        auto r = draw_ranking(a, qi, sid).docs;
        EXPECT_EQ(r, draw_ranking(b, qi, sid).docs);
        std::sort(r.begin(), r.end());
        for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], i);
        EXPECT_EQ(r.size(), ds.queries[qi].docs.size());
      }
    }
  }
}

TEST(PolicyProperties, DeterministicRankingFollowsScoresAndSignFlipReverses) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    const auto labels = random_labels(ds, s);
    const auto plus = interpolate_scores(ds, ScoreTable{labels}, 1.0, 0.0, s);
    const auto minus = interpolate_scores(ds, ScoreTable{labels}, -1.0, 0.0, s);
    for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
      const auto r = draw_ranking(plus, qi, s).docs;
      for (std::size_t i = 1; i < r.size(); ++i) EXPECT_GT(plus.scores.at(qi, r[i - 1]), plus.scores.at(qi, r[i]));
      auto rev = draw_ranking(minus, qi, s).docs;
      std::reverse(rev.begin(), rev.end());
      EXPECT_EQ(rev, r);
    }
  }
}

TEST(ClickProperties, SimulationIsByteDeterministic) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto ds = random_shape(s);
    const auto labels = random_labels(ds, s);
    EXPECT_EQ(write_log_csv(ds, log_for(ds, labels, 300, 0.3, s)), write_log_csv(ds, log_for(ds, labels, 300, 0.3, s)));
  }
}

TEST(ClickProperties, PropensitiesSumToOnePerRank) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    const auto log = log_for(ds, random_labels(ds, s), 400, 0.1 * static_cast<double>(s % 11), s);
    const auto t = estimate_propensities(ds, log);
    for (std::size_t qi = 0; qi < ds.queries.size(); ++qi) {
      if (t.sessions(qi) == 0) continue;
      const auto n = ds.queries[qi].docs.size();
      for (std::size_t k = 1; k <= n; ++k) {
        double sum = 0.0;
        for (std::size_t p = 0; p < n; ++p) sum += t.propensity(qi, p, k);
        EXPECT_NEAR(sum, 1.0, 1e-12);
      }
    }
  }
}

TEST(ClickProperties, ClickRateNonIncreasingInRank) {
  const auto ds = towerlab::testing::random_dataset(1, 4, 1, 1);
  const auto labels = towerlab::testing::constant_labels(ds, 3.0);
  const auto log = log_for(ds, labels, 40000, 1.0, 3);
  std::vector<double> clicks(4, 0.0), shown(4, 0.0);
  for (std::size_t i = 0; i < log.size(); ++i) {
    clicks[log.rank[i] - 1] += log.click[i];
    shown[log.rank[i] - 1] += 1;
  }
  for (std::size_t k = 1; k < 4; ++k) {
    ASSERT_GE(shown[k], 1000);
    const double prev = clicks[k - 1] / shown[k - 1], cur = clicks[k] / shown[k];
    // Strictly lower click probability; allow 3 binomial SDs of noise.
    EXPECT_LE(cur, prev + 3.0 * std::sqrt(0.25 / shown[k] + 0.25 / shown[k - 1]));
  }
}

TEST(ModelProperties, ShiftInvarianceOnDeterministicLogs) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    const FeatureMatrix f(ds);
    const auto log = log_for(ds, random_labels(ds, s), 200, 0.0, s);
    auto m = TwoTowerModel::make(TowerKind::embedding, ds.max_docs_per_query(), f, 0);
    auto rng = Stream::make(s, StreamTag::tower_init, 5);
    for (auto& v : m.theta) v = rng.uniform(-1.0, 1.0);
    for (auto& v : m.relevance.params()) v = rng.uniform(-3.0, 3.0);
    std::vector<double> deltas(m.max_rank());
    for (auto& v : deltas) v = rng.uniform(-2.0, 2.0);
    EXPECT_LE(shift_invariance_probe(m, f, log, deltas).loss_difference, 1e-9) << "seed " << s;
  }
}

TEST(ModelProperties, SmallStepGradientDescentNeverIncreasesLoss) {
  for (auto kind : {TowerKind::embedding, TowerKind::linear, TowerKind::mlp}) {
    const auto ds = towerlab::testing::random_dataset(5, 6, 3, 9);
    const FeatureMatrix f(ds);
    const auto log = log_for(ds, random_labels(ds, 9), 300, 0.5, 9);
    auto m = TwoTowerModel::make(kind, 6, f, 2);
    const auto rows = all_rows(log);
    double prev = nll_loss(m, f, log);
    for (int step = 0; step < 100; ++step) {
      const auto g = gradients(m, f, log, rows);
      for (std::size_t i = 0; i < g.theta.size(); ++i) m.theta[i] -= 0.05 * g.theta[i];
      for (std::size_t i = 0; i < g.relevance.size(); ++i) m.relevance.params()[i] -= 0.05 * g.relevance[i];
      const double cur = nll_loss(m, f, log);
      EXPECT_LE(cur, prev + 1e-15) << to_string(kind) << " step " << step;
      prev = cur;
    }
  }
}

TEST(DiagnosticProperties, SwapGraphEdgesSymmetricAndComponentsPartition) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    const auto log = log_for(ds, random_labels(ds, s), 50, 0.2, s);
    const auto g = build_swap_graph(log);
    for (const auto& e : g.edges) {
      EXPECT_LT(e.a, e.b);
      EXPECT_TRUE(g.has_edge(e.b, e.a));
    }
    std::vector<std::size_t> all;
    for (const auto& c : g.components) all.insert(all.end(), c.begin(), c.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> expected(g.num_vertices);
    std::iota(expected.begin(), expected.end(), std::size_t{1});
    EXPECT_EQ(all, expected);
  }
}

TEST(DiagnosticProperties, EdgeCountNonDecreasingInTau) {
  const auto ds = towerlab::testing::random_dataset(20, 8, 2, 4);
  const auto labels = random_labels(ds, 4);
  std::vector<double> mean_edges;
  for (double tau : {0.0, 0.05, 0.2, 1.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) total += build_swap_graph(log_for(ds, labels, 200, tau, seed)).edges.size();
    mean_edges.push_back(total / 5.0);
  }
  for (std::size_t i = 1; i < mean_edges.size(); ++i) EXPECT_LE(mean_edges[i - 1], mean_edges[i]);
}

TEST(DiagnosticProperties, OverlapGraphContainsSwapGraph) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    const auto ds = random_shape(s);
    const FeatureMatrix f(ds);
    const auto log = log_for(ds, random_labels(ds, s), 60, 0.3, s);
    const auto swaps = build_swap_graph(log);
    const auto overlap = feature_overlap(log, f, 1e-12);
    for (const auto& e : swaps.edges) EXPECT_TRUE(overlap.graph.has_edge(e.a, e.b));
  }
}

TEST(EvalProperties, NdcgMatchesBruteForceOracle) {
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto rng = Stream::make(s, StreamTag::corpus, 6);
    const std::size_t n = 1 + rng.below(6);
    std::vector<double> scores(n), labels(n);
    for (auto& v : scores) v = rng.uniform(-1.0, 1.0);
    for (auto& v : labels) v = static_cast<double>(rng.below(5));
    labels[rng.below(n)] = 1.0 + static_cast<double>(rng.below(4));
    const std::size_t k = 1 + rng.below(6);
    EXPECT_NEAR(*ndcg_at_k(scores, labels, k), brute_ndcg(scores, labels, k), 1e-12) << "seed " << s;
  }
}

TEST(EvalProperties, NdcgInvariantUnderMonotoneTransforms) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    auto rng = Stream::make(s, StreamTag::corpus, 7);
    std::vector<double> scores(8), labels(8);
    for (auto& v : scores) v = rng.uniform(-2.0, 2.0);
    for (auto& v : labels) v = rng.uniform(0.0, 4.0);
    std::vector<double> transformed;
    for (double v : scores) transformed.push_back(std::exp(3.0 * v) + 7.0);
    EXPECT_EQ(*ndcg_at_k(scores, labels, 5), *ndcg_at_k(transformed, labels, 5));
  }
}

TEST(EvalProperties, BiasRecoveryInvariantToGlobalShift) {
  for (std::uint64_t s = 0; s < kCases; ++s) {
    auto rng = Stream::make(s, StreamTag::corpus, 8);
    std::vector<double> theta(10), shifted(10);
    const double c = rng.uniform(-5.0, 5.0);
    for (std::size_t i = 0; i < 10; ++i) {
      theta[i] = rng.uniform(-3.0, 1.0);
      shifted[i] = theta[i] + c;
    }
    EXPECT_NEAR(bias_recovery(theta, 10).mae, bias_recovery(shifted, 10).mae, 1e-12);
  }
}
