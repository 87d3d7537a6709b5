#pragma once

#include <string>
#include <vector>

#include "irpo/datamodel.hpp"

namespace irpo {

enum class GainKind {
  kNdcg,
  kPrecisionAtK,
  kMap,
  kMrr,
  kEdcg,
  kAblPositionOnly,     // 1 / ln(1 + i)
  kAblLinearDiscount,   // (2^y - 1) / i
};

// Positional weight rule w(i) over a target ranking.
struct GainScheme {
  GainKind kind = GainKind::kNdcg;
  std::size_t k = 1;          // precision_at_k cutoff
  double lambda = 0.5;        // edcg decay rate
  bool mrr_all_relevant = false;  // weight every relevant rank by 1/i, not only the first

  static GainScheme ndcg() { return {}; }
  static GainScheme precision_at_k(std::size_t k);
  static GainScheme map() { return {GainKind::kMap}; }
  static GainScheme mrr(bool all_relevant = false);
  static GainScheme edcg(double lambda = 0.5);
  static GainScheme abl_position_only() { return {GainKind::kAblPositionOnly}; }
  static GainScheme abl_linear_discount() { return {GainKind::kAblLinearDiscount}; }

  // Parses "ndcg", "precision_at_k", "map", "mrr", "edcg", "abl1"/"abl_position_only",
  // "abl2"/"abl_linear_discount". Throws ConfigError on unknown names or bad parameters.
  static GainScheme parse(const std::string& name, std::size_t k = 1, double lambda = 0.5,
                          bool mrr_all_relevant = false);

  std::string name() const;
  void check() const;
};

// Weight at 1-based rank i for a list whose grades along the target ranking
// are `ranked_relevance`.
double weight(const GainScheme& scheme, const std::vector<int>& ranked_relevance, std::size_t rank);
double weight(const GainScheme& scheme, const RankedExample& example, std::size_t rank);

struct RankWeights {
  std::vector<double> w;  // index r holds w(r + 1)
  bool degenerate = false;  // map with no relevant item
};

RankWeights rank_weights(const GainScheme& scheme, const RankedExample& example);

}  // namespace irpo
