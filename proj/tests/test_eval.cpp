#include <gtest/gtest.h>

#include <cmath>

#include "test_util.hpp"
#include "towerlab/eval.hpp"
#include "towerlab/stats.hpp"

using namespace towerlab;

TEST(AnchorBias, SubtractsFirstEntry) {
  const std::vector<double> v{0.5, -0.2, -0.9};
  const auto a = anchor_bias(v);
  EXPECT_DOUBLE_EQ(a[0], 0.0);
  EXPECT_DOUBLE_EQ(a[1], -0.7);
  EXPECT_DOUBLE_EQ(a[2], -1.4);
  EXPECT_EQ(anchor_bias(a), a);
  EXPECT_EQ(anchor_bias(std::vector<double>{3.0, 3.0, 3.0}), (std::vector<double>{0.0, 0.0, 0.0}));
  EXPECT_THROW(anchor_bias(std::vector<double>{}), std::invalid_argument);
}

TEST(BiasRecovery, ExactAndShiftedTruthGiveZeroError) {
  std::vector<double> truth, shifted;
  for (int k = 1; k <= 10; ++k) {
    truth.push_back(-std::log(k));
    shifted.push_back(-std::log(k) + 0.7);
  }
  EXPECT_EQ(bias_recovery(truth, 10).mae, 0.0);
  EXPECT_NEAR(bias_recovery(shifted, 10).mae, 0.0, 1e-15);
  EXPECT_NEAR(bias_recovery(shifted, 10).max_error, 0.0, 1e-15);
}

TEST(BiasRecovery, TwoRankExample) {
  const std::vector<double> theta{0.0, -0.5};
  const auto rep = bias_recovery(theta, 2);
  EXPECT_NEAR(rep.mae, 0.09657, 5e-6);
  ASSERT_EQ(rep.rows.size(), 2u);
  EXPECT_EQ(rep.rows[1].rank, 2u);
  EXPECT_NEAR(rep.rows[1].theta_true, -0.693147, 1e-6);
  EXPECT_EQ(rep.rows[1].theta_hat, -0.5);
  EXPECT_NEAR(rep.max_error, 0.193147, 1e-6);
  EXPECT_THROW(bias_recovery(theta, 3), std::invalid_argument);
}

TEST(Ndcg, IdealOrderIsOne) {
  const std::vector<double> labels{0.0, 3.0, 1.0, 2.0};
  const std::vector<double> scores{0.1, 0.9, 0.3, 0.5};
  EXPECT_DOUBLE_EQ(*ndcg_at_k(scores, labels), 1.0);
}

TEST(Ndcg, TwoDocumentWorseFirst) {
  const std::vector<double> labels{3.0, 2.0};
  const std::vector<double> scores{0.0, 1.0};
  const double dcg = 3.0 + 7.0 / std::log2(3.0);
  const double idcg = 7.0 + 3.0 / std::log2(3.0);
  EXPECT_NEAR(dcg, 7.41651, 5e-6);
  EXPECT_NEAR(idcg, 8.89279, 5e-6);
  EXPECT_NEAR(*ndcg_at_k(scores, labels), 0.83399, 5e-6);
  EXPECT_NEAR(*ndcg_at_k(scores, labels), dcg / idcg, 1e-15);
}

TEST(Ndcg, SingleDocumentAndAllZeroLabels) {
  EXPECT_DOUBLE_EQ(*ndcg_at_k(std::vector<double>{-5.0}, std::vector<double>{2.0}), 1.0);
  EXPECT_FALSE(ndcg_at_k(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}).has_value());
  EXPECT_THROW(ndcg_at_k(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}), std::invalid_argument);
}

TEST(Ndcg, CutoffAndTieBreak) {
  // Equal scores: ascending doc id decides the order.
  const std::vector<double> labels{0.0, 2.0};
  const std::vector<double> scores{1.0, 1.0};
  EXPECT_NEAR(*ndcg_at_k(scores, labels), 1.0 / std::log2(3.0), 1e-15);
  const std::vector<int> ids{7, 3};
  EXPECT_DOUBLE_EQ(*ndcg_at_k(scores, labels, 10, ids), 1.0);
  EXPECT_DOUBLE_EQ(*ndcg_at_k(scores, labels, 1), 0.0);
}

TEST(EvaluateRanking, ExcludesQueriesWithoutRelevantDocs) {
  const auto ds = towerlab::testing::random_dataset({{0, 0}, {1, 2}}, 1, 1);
  DocValues labels{{{0.0, 0.0}, {1.0, 2.0}}};
  DocValues scores{{{1.0, 2.0}, {2.0, 1.0}}};
  const auto rep = evaluate_ranking(ds, scores, labels);
  EXPECT_EQ(rep.evaluated, 1u);
  EXPECT_EQ(rep.excluded, 1u);
  EXPECT_FALSE(rep.per_query[0].has_value());
  EXPECT_DOUBLE_EQ(rep.mean_ndcg, *ndcg_at_k(scores.values[1], labels.values[1]));
  DocValues wrong{{{1.0}}};
  EXPECT_THROW(evaluate_ranking(ds, wrong, labels), std::invalid_argument);
}

TEST(Stats, MomentsAndCorrelation) {
  const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> y{2.0, 4.0, 6.0, 8.0};
  const std::vector<double> c{5.0, 5.0, 5.0, 5.0};
  EXPECT_DOUBLE_EQ(mean(x), 2.5);
  EXPECT_DOUBLE_EQ(sample_stddev(x), std::sqrt(5.0 / 3.0));
  EXPECT_DOUBLE_EQ(pearson(x, y), 1.0);
  EXPECT_EQ(pearson(x, c), 0.0);
}

TEST(Stats, StudentTInterval) {
  const std::vector<double> xs{-0.70, -0.69, -0.68};
  EXPECT_NEAR(t_interval_half_width(xs), 4.302652729 * 0.01 / std::sqrt(3.0), 1e-9);
  EXPECT_NEAR(t_interval_half_width(xs), 0.02484, 5e-6);
  EXPECT_EQ(t_interval_half_width(std::vector<double>{1.0}), 0.0);
}
