#include <gtest/gtest.h>

#include <random>

#include "irpo/gains.hpp"

namespace irpo {
namespace {

const std::vector<int> kGraded{2, 2, 1, 1, 0, 0};

TEST(Weight, NdcgDirectEvaluation) {
  EXPECT_DOUBLE_EQ(weight(GainScheme::ndcg(), std::vector<int>{1, 0, 0}, 1), 1.0);
  EXPECT_DOUBLE_EQ(weight(GainScheme::ndcg(), std::vector<int>{2, 2, 2}, 3), 1.5);
}

TEST(Weight, ZeroGainIsZeroExceptPositionOnly) {
  const std::vector<GainScheme> schemes = {GainScheme::ndcg(),  GainScheme::precision_at_k(3), GainScheme::map(),
                                           GainScheme::mrr(),   GainScheme::mrr(true),         GainScheme::edcg(),
                                           GainScheme::abl_linear_discount()};
  for (const auto& s : schemes) {
    EXPECT_EQ(weight(s, kGraded, 5), 0.0) << s.name();
    EXPECT_EQ(weight(s, kGraded, 6), 0.0) << s.name();
  }
  EXPECT_GT(weight(GainScheme::abl_position_only(), kGraded, 6), 0.0);
}

TEST(Weight, MapNormalisesByRelevantCount) {
  EXPECT_DOUBLE_EQ(weight(GainScheme::map(), std::vector<int>{1, 1, 0, 0}, 2), 0.5);
}

TEST(Weight, EdcgDefaultLambda) {
  EXPECT_NEAR(weight(GainScheme::edcg(), std::vector<int>{1, 1}, 2), 0.36787944117144233, 1e-15);
}

TEST(Weight, MrrVariants) {
  const std::vector<int> observed{0, 1, 0, 2, 1};
  const auto first = GainScheme::mrr();
  const auto all = GainScheme::mrr(true);
  const std::vector<double> expect_first{0, 0.5, 0, 0, 0};
  const std::vector<double> expect_all{0, 0.5, 0, 0.25, 0.2};
  for (std::size_t i = 1; i <= observed.size(); ++i) {
    EXPECT_DOUBLE_EQ(weight(first, observed, i), expect_first[i - 1]) << i;
    EXPECT_DOUBLE_EQ(weight(all, observed, i), expect_all[i - 1]) << i;
  }
}

TEST(Weight, MapWithoutRelevantItemsIsFlaggedZero) {
  RankedExample ex;
  ex.prompt_id = "z";
  ex.candidates = {{"a", {}}, {"b", {}}};
  ex.relevance = {0, 0};
  ex.target_perm = {0, 1};
  const auto rw = rank_weights(GainScheme::map(), ex);
  EXPECT_TRUE(rw.degenerate);
  EXPECT_EQ(rw.w, (std::vector<double>{0.0, 0.0}));
  EXPECT_FALSE(rank_weights(GainScheme::ndcg(), ex).degenerate);
}

TEST(Weight, RankOutOfRangeThrows) {
  EXPECT_THROW(weight(GainScheme::ndcg(), kGraded, 0), ValidationError);
  EXPECT_THROW(weight(GainScheme::ndcg(), kGraded, 7), ValidationError);
}

TEST(Weight, DoublingGradeTriplesNdcgWeight) {
  for (std::size_t i = 1; i <= 6; ++i) {
    std::vector<int> one(6, 1);
    std::vector<int> two(6, 2);
    EXPECT_DOUBLE_EQ(weight(GainScheme::ndcg(), two, i), 3.0 * weight(GainScheme::ndcg(), one, i));
  }
}

TEST(Weight, PrecisionZeroBeyondCutoff) {
  std::vector<int> all_relevant(10, 1);
  const auto s = GainScheme::precision_at_k(4);
  for (std::size_t i = 1; i <= 10; ++i) EXPECT_EQ(weight(s, all_relevant, i), i <= 4 ? 1.0 : 0.0);
}

TEST(Weight, NonIncreasingOnSortedTargets) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> grade(0, 3);
  const std::vector<GainScheme> schemes = {GainScheme::ndcg(), GainScheme::edcg(0.3), GainScheme::abl_position_only(),
                                           GainScheme::abl_linear_discount()};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> y(1 + trial % 12);
    for (auto& v : y) v = grade(rng);
    std::sort(y.begin(), y.end(), std::greater<int>());
    for (const auto& s : schemes) {
      for (std::size_t i = 2; i <= y.size(); ++i) EXPECT_LE(weight(s, y, i), weight(s, y, i - 1)) << s.name();
    }
  }
}

TEST(GainSchemeParse, NamesAndErrors) {
  EXPECT_EQ(GainScheme::parse("abl1").kind, GainKind::kAblPositionOnly);
  EXPECT_EQ(GainScheme::parse("abl2").kind, GainKind::kAblLinearDiscount);
  EXPECT_EQ(GainScheme::parse("edcg", 1, 0.25).lambda, 0.25);
  EXPECT_THROW(GainScheme::parse("lipo"), ConfigError);
  EXPECT_THROW(GainScheme::parse("edcg", 1, 0.0), ConfigError);
  EXPECT_THROW(GainScheme::parse("precision_at_k", 0), ConfigError);
}

}  // namespace
}  // namespace irpo
