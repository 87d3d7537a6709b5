#pragma once

#include <map>
#include <span>
#include <vector>

#include "irpo/datamodel.hpp"

namespace irpo {

// DCG over the first k grades of a ranked relevance list.
double dcg(std::span<const int> ranked_relevance, std::size_t k);

// `predicted` is a permutation of 0-based candidate indices, best first.
// Both metrics return 0 for lists without a relevant item.
double ndcg_at_k(std::span<const std::size_t> predicted, std::span<const int> relevance, std::size_t k);
double recall_at_k(std::span<const std::size_t> predicted, std::span<const int> relevance, std::size_t k);

bool has_relevant(std::span<const int> relevance);

// Candidate indices by descending score; ties keep list order.
std::vector<std::size_t> rank_by_scores(std::span<const double> scores);

struct MetricResult {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> mean_ndcg;
  std::map<std::size_t, double> mean_recall;
  std::map<std::size_t, std::vector<double>> ndcg;    // per example
  std::map<std::size_t, std::vector<double>> recall;  // per example
  std::size_t num_examples = 0;
  std::size_t degenerate = 0;  // lists with no relevant item
};

MetricResult evaluate_rankings(std::span<const RankedExample> dataset,
                               std::span<const std::vector<std::size_t>> predicted,
                               std::span<const std::size_t> ks);

// Ranks every example by policy score and scores the result.
MetricResult evaluate(const Policy& policy, std::span<const RankedExample> dataset,
                      std::span<const std::size_t> ks);

}  // namespace irpo
