#include <gtest/gtest.h>

#include "support/suites.hpp"
#include "vdctr/eval/metrics.hpp"

using namespace vdctr;
using namespace vdctr::eval;

namespace {

Tensor rows(std::vector<std::vector<double>> r) {
  Tensor t(Shape{r.size(), r.front().size()});
  for (std::size_t i = 0; i < r.size(); ++i) std::copy(r[i].begin(), r[i].end(), t.row(i).begin());
  return t;
}

TEST(MetricOracles, AllMetricsMatchBruteForceOn120Instances) {
  const auto d = vdctr::testing::metric_oracle_suite(120, 1000);
  EXPECT_EQ(d.instances, 120u);
  EXPECT_LE(d.hr, 1e-12);
  EXPECT_LE(d.lr, 1e-12);
  EXPECT_LE(d.cr, 1e-12);
  EXPECT_LE(d.auc, 1e-12);
  EXPECT_LE(d.auc_bottom, 1e-12);
  EXPECT_LE(d.auc_top, 1e-12);
  EXPECT_EQ(d.undefined_mismatches, 0u);
}

TEST(RankAll, QueryEqualToItemRanksItFirst) {
  const auto r = rank_all({0}, rows({{0.0, 1.0}}), {5, 6, 7}, rows({{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}}));
  EXPECT_EQ(r[0].items.front(), 6);
}

TEST(RankAll, ItemFileOrderDoesNotMatter) {
  const auto a = rank_all({0}, rows({{1.0, 0.0}}), {1, 2, 3}, rows({{0.6, 0.8}, {0.6, 0.8}, {1.0, 0.0}}));
  const auto b = rank_all({0}, rows({{1.0, 0.0}}), {3, 2, 1}, rows({{1.0, 0.0}, {0.6, 0.8}, {0.6, 0.8}}));
  EXPECT_EQ(a[0].items, b[0].items);
  EXPECT_EQ(a[0].items, (std::vector<std::int64_t>{3, 1, 2}));
}

TEST(RankAll, DimensionMismatchThrows) {
  EXPECT_THROW(rank_all({0}, rows({{1.0, 0.0, 0.0}}), {1}, rows({{1.0, 0.0}})), DimensionError);
}

TEST(HitRatio, HandCountedExample) {
  std::vector<Ranking> r{{0, {1, 2, 3, 4}, {}}, {1, {4, 3, 2, 1}, {}}};
  // n = (2, 1); hits = (1, 1) -> 2/3
  std::vector<data::RelevanceAnnotation> ann{{0, {1, 4}}, {1, {4}}};
  EXPECT_DOUBLE_EQ(hit_ratio(r, ann), 2.0 / 3.0);
}

TEST(HitRatio, PerfectAndEmptyRetrieval) {
  std::vector<Ranking> r{{0, {1, 2, 3}, {}}};
  EXPECT_DOUBLE_EQ(hit_ratio(r, {{0, {1, 2}}}), 1.0);
  EXPECT_DOUBLE_EQ(hit_ratio(r, {{0, {3}}}), 0.0);
}

TEST(HitRatio, MissingAnnotationNamesQuery) {
  std::vector<Ranking> r{{0, {1}, {}}, {9, {1}, {}}};
  try {
    hit_ratio(r, {{0, {1}}});
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("9"), std::string::npos);
  }
}

TEST(LrCr, BoundaryCases) {
  std::vector<Ranking> r{{0, {1, 2, 3}, {}}};
  EXPECT_DOUBLE_EQ(lr_at_k(r, {1, 2, 3}, 2), 1.0);
  EXPECT_DOUBLE_EQ(lr_at_k(r, {}, 2), 0.0);
  std::unordered_map<std::int64_t, int> single{{1, 0}, {2, 0}, {3, 0}}, q{{0, 0}};
  EXPECT_DOUBLE_EQ(cr_at_k(r, single, q, 3), 1.0);
  std::unordered_map<std::int64_t, int> cross{{1, 1}, {2, 0}, {3, 0}};
  EXPECT_DOUBLE_EQ(cr_at_k(r, cross, q, 1), 0.0);
  EXPECT_THROW(lr_at_k(r, {}, 4), std::invalid_argument);
}

TEST(Auc, SeparatedTiedAndSingleClass) {
  EXPECT_DOUBLE_EQ(auc({{0.9, 1}, {0.8, 1}, {0.1, 0}}), 1.0);
  EXPECT_DOUBLE_EQ(auc({{0.5, 1}, {0.5, 0}, {0.5, 0}}), 0.5);
  EXPECT_THROW(auc({{0.5, 1}, {0.4, 1}}), std::invalid_argument);
}

TEST(Auc, InvariantUnderMonotoneTransform) {
  Rng rng = make_rng(5, "monotone");
  std::vector<ScoredLabel> s, t;
  for (int i = 0; i < 200; ++i) {
    const double x = std::floor(uniform01(rng) * 30.0) / 30.0;
    const int y = uniform01(rng) < 0.3 ? 1 : 0;
    s.push_back({x, y});
    t.push_back({std::exp(3.0 * x) - 7.0, y});
  }
  EXPECT_DOUBLE_EQ(auc(s), auc(t));
}

TEST(AucBucketed, EqualImpressionsGiveIdenticalBuckets) {
  std::vector<ScoredEvent> ev;
  std::unordered_map<std::int64_t, std::int64_t> imp;
  Rng rng = make_rng(2, "equal");
  for (std::int64_t i = 0; i < 40; ++i) imp[i] = 3;
  for (int e = 0; e < 400; ++e) ev.push_back({static_cast<std::int64_t>(rng() % 40), uniform01(rng), static_cast<int>(rng() % 2)});
  EXPECT_EQ(decile_items(ev, imp, Decile::kBottom), decile_items(ev, imp, Decile::kTop));
  EXPECT_EQ(auc_bucketed(ev, imp, Decile::kBottom), auc_bucketed(ev, imp, Decile::kTop));
}

TEST(AucBucketed, WholeSetWhenEveryItemFallsInBucket) {
  // Fewer than ten distinct items: the bucket holds one item, so use a single item.
  std::vector<ScoredEvent> ev{{4, 0.2, 0}, {4, 0.9, 1}, {4, 0.5, 0}};
  std::unordered_map<std::int64_t, std::int64_t> imp{{4, 10}};
  EXPECT_DOUBLE_EQ(*auc_bucketed(ev, imp, Decile::kBottom), auc(to_scored_labels(ev)));
}

TEST(AucBucketed, SingleClassBucketIsUndefinedNotZero) {
  std::vector<ScoredEvent> ev{{0, 0.1, 0}, {1, 0.9, 1}, {1, 0.2, 0}};
  std::unordered_map<std::int64_t, std::int64_t> imp{{0, 0}, {1, 50}};
  EXPECT_FALSE(auc_bucketed(ev, imp, Decile::kBottom).has_value());
  EXPECT_TRUE(auc_bucketed(ev, imp, Decile::kTop).has_value());
}

TEST(AucBucketed, MissingImpressionCountThrows) {
  EXPECT_THROW(auc_bucketed({{3, 0.5, 1}}, {}, Decile::kTop), std::invalid_argument);
}

TEST(Metrics, RepeatedEvaluationIsBitIdentical) {
  const auto a = vdctr::testing::metric_oracle_suite(5, 77);
  const auto b = vdctr::testing::metric_oracle_suite(5, 77);
  EXPECT_EQ(a.worst(), b.worst());
}

}  // namespace
