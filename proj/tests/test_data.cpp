#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "test_util.hpp"
#include "towerlab/data.hpp"

using namespace towerlab;

namespace {

Dataset one_query(const std::vector<int>& labels, const std::vector<int>& doc_ids) {
  Dataset ds;
  ds.feature_dim = 1;
  Query q;
  q.id = "1";
  for (std::size_t i = 0; i < labels.size(); ++i) q.docs.push_back({doc_ids[i], {static_cast<double>(i)}, labels[i]});
  ds.queries.push_back(q);
  return ds;
}

std::vector<int> ids_of(const Query& q) {
  std::vector<int> ids;
  for (const auto& d : q.docs) ids.push_back(d.doc_id);
  return ids;
}

}  // namespace

TEST(ParseLetor, MapsFieldsAndFillsAbsentFeatures) {
  const auto ds = parse_letor_text("2 qid:7 1:0.5 3:-1.0\n");
  ASSERT_EQ(ds.queries.size(), 1u);
  EXPECT_EQ(ds.feature_dim, 3u);
  EXPECT_EQ(ds.queries[0].id, "7");
  const auto& d = ds.queries[0].docs.at(0);
  EXPECT_EQ(d.label, 2);
  EXPECT_EQ(d.features, (std::vector<double>{0.5, 0.0, -1.0}));
}

TEST(ParseLetor, GroupsLinesByQuery) {
  const auto ds = parse_letor_text("1 qid:7 1:1\n0 qid:8 1:2\n3 qid:7 1:3 # trailing comment\n");
  ASSERT_EQ(ds.queries.size(), 2u);
  EXPECT_EQ(ds.queries[0].id, "7");
  ASSERT_EQ(ds.queries[0].docs.size(), 2u);
  EXPECT_EQ(ds.queries[0].docs[1].label, 3);
  EXPECT_EQ(ds.queries[0].docs[1].doc_id, 1);
  EXPECT_EQ(ds.queries[1].docs.size(), 1u);
}

TEST(ParseLetor, ReportsNonNumericLabel) {
  try {
    parse_letor_text("x qid:7 1:0.5\n");
    FAIL() << "expected a parse error";
  } catch (const LetorParseError& e) {
    EXPECT_STREQ(e.what(), "non-numeric label at line 1");
    EXPECT_EQ(e.line(), 1u);
  }
}

TEST(ParseLetor, RejectsMalformedInput) {
  EXPECT_THROW(parse_letor_text("1 7 1:0.5\n"), LetorParseError);
  EXPECT_THROW(parse_letor_text("1 qid:7 1-0.5\n"), LetorParseError);
  EXPECT_THROW(parse_letor_text("1 qid:7 0:0.5\n"), LetorParseError);
  EXPECT_THROW(parse_letor_text("1 qid:7 1:abc\n"), LetorParseError);
  EXPECT_THROW(parse_letor_text("1 qid:7 1:1 1:2\n"), LetorParseError);
  EXPECT_THROW(parse_letor_text("5 qid:7 1:1\n"), LetorParseError);
  EXPECT_THROW(parse_letor_text("\n\n"), std::runtime_error);
  try {
    parse_letor_text("1 qid:1 1:1\n\n1 qid:1 1:z\n");
  } catch (const LetorParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

TEST(ParseLetor, SerializeRoundTrip) {
  const auto ds = towerlab::testing::random_dataset(4, 6, 5, 11);
  const auto back = parse_letor_text(serialize_letor(ds));
  EXPECT_EQ(back, ds);
}

TEST(ParseLetor, BundledCorpusShape) {
  for (const char* name : {"train.txt", "valid.txt", "test.txt"}) {
    const auto ds = parse_letor(towerlab::testing::data_dir() / name);
    EXPECT_EQ(ds.feature_dim, 10u) << name;
    for (const auto& q : ds.queries) EXPECT_EQ(q.docs.size(), 10u);
  }
  EXPECT_EQ(parse_letor(towerlab::testing::data_dir() / "train.txt").queries.size(), 100u);
}

TEST(NormalizeLog1p, ClosedFormValues) {
  EXPECT_EQ(log1p_signed(0.0), 0.0);
  EXPECT_NEAR(log1p_signed(9.0), std::log(10.0), 1e-15);
  EXPECT_NEAR(log1p_signed(-(std::numbers::e - 1.0)), -1.0, 1e-15);
  Dataset ds = one_query({1}, {0});
  ds.queries[0].docs[0].features = {9.0};
  EXPECT_NEAR(normalize_log1p(ds).queries[0].docs[0].features[0], 2.302585, 1e-6);
}

TEST(TruncateTopK, KeepsHighestLabelsWithDocIdTieBreak) {
  const auto ds = truncate_top_k(one_query({3, 3, 1}, {5, 2, 9}), 2);
  auto ids = ids_of(ds.queries[0]);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<int>{2, 5}));
}

TEST(TruncateTopK, ShortQueriesUnchanged) {
  std::vector<int> labels(10, 1), ids(10);
  for (int i = 0; i < 10; ++i) ids[i] = i;
  const auto ds = one_query(labels, ids);
  EXPECT_EQ(truncate_top_k(ds, 25), ds);
}

TEST(TruncateTopK, DroppedDocsNeverOutrankKeptOnes) {
  std::vector<int> labels, ids;
  for (int i = 0; i < 30; ++i) {
    labels.push_back((i * 7) % 5);
    ids.push_back(i);
  }
  const auto out = truncate_top_k(one_query(labels, ids), 25);
  ASSERT_EQ(out.queries[0].docs.size(), 25u);
  int min_kept = 4;
  for (const auto& d : out.queries[0].docs) min_kept = std::min(min_kept, d.label);
  const auto kept = ids_of(out.queries[0]);
  for (int i = 0; i < 30; ++i) {
    if (std::find(kept.begin(), kept.end(), i) == kept.end()) {
      EXPECT_LE(labels[i], min_kept);
    }
  }
  EXPECT_THROW(truncate_top_k(one_query({1}, {0}), 0), std::invalid_argument);
}

TEST(DropIrrelevant, RemovesQueriesWithoutRelevantDocs) {
  Dataset ds = towerlab::testing::random_dataset({{0, 0, 0}, {0, 1, 0}}, 2, 1);
  const auto r = drop_irrelevant_queries(ds);
  ASSERT_EQ(r.dataset.queries.size(), 1u);
  EXPECT_EQ(r.dataset.queries[0].id, "q1");
  EXPECT_DOUBLE_EQ(r.fraction_removed, 0.5);
}

TEST(DropIrrelevant, EmptyDataset) {
  const auto r = drop_irrelevant_queries(Dataset{});
  EXPECT_TRUE(r.dataset.queries.empty());
  EXPECT_EQ(r.fraction_removed, 0.0);
}

TEST(Preprocess, DeterministicForIdenticalBytes) {
  const auto text = read_file(towerlab::testing::data_dir() / "train.txt");
  const auto a = preprocess(parse_letor_text(text), {});
  const auto b = preprocess(parse_letor_text(text), {});
  EXPECT_EQ(a.dataset, b.dataset);
  EXPECT_EQ(a.fraction_removed, b.fraction_removed);
}

TEST(Preprocess, AppliesStagesInOrder) {
  // Truncation sees raw labels; normalization sees kept raw features.
  Dataset ds = one_query({0, 2, 1}, {0, 1, 2});
  ds.queries[0].docs[1].features = {9.0};
  const auto r = preprocess(ds, {2, true, true});
  ASSERT_EQ(r.dataset.queries[0].docs.size(), 2u);
  EXPECT_NEAR(r.dataset.queries[0].docs[0].features[0], std::log(10.0), 1e-15);
}
