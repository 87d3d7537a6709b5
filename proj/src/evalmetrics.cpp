#include "irpo/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace irpo {

double dcg(std::span<const int> ranked_relevance, std::size_t k) {
  if (k < 1) throw ValidationError("dcg: k must be >= 1");
  const std::size_t cut = std::min(k, ranked_relevance.size());
  double total = 0.0;
  for (std::size_t r = 0; r < cut; ++r) {
    total += (std::exp2(static_cast<double>(ranked_relevance[r])) - 1.0) / std::log2(2.0 + static_cast<double>(r));
  }
  return total;
}

bool has_relevant(std::span<const int> relevance) {
  return std::any_of(relevance.begin(), relevance.end(), [](int y) { return y >= 1; });
}

double ndcg_at_k(std::span<const std::size_t> predicted, std::span<const int> relevance, std::size_t k) {
  if (k < 1) throw ValidationError("ndcg_at_k: k must be >= 1");
  if (predicted.size() != relevance.size()) throw ValidationError("ndcg_at_k: ranking/relevance size mismatch");
  if (!has_relevant(relevance)) return 0.0;
  std::vector<int> along(predicted.size());
  for (std::size_t r = 0; r < predicted.size(); ++r) along[r] = relevance[predicted[r]];
  std::vector<int> ideal(relevance.begin(), relevance.end());
  std::stable_sort(ideal.begin(), ideal.end(), std::greater<int>());
  const double best = dcg(ideal, k);
  return std::min(1.0, dcg(along, k) / best);
}

double recall_at_k(std::span<const std::size_t> predicted, std::span<const int> relevance, std::size_t k) {
  if (k < 1) throw ValidationError("recall_at_k: k must be >= 1");
  if (predicted.size() != relevance.size()) throw ValidationError("recall_at_k: ranking/relevance size mismatch");
  const auto total = std::count_if(relevance.begin(), relevance.end(), [](int y) { return y >= 1; });
  if (total == 0) return 0.0;
  const std::size_t cut = std::min(k, predicted.size());
  std::size_t hit = 0;
  for (std::size_t r = 0; r < cut; ++r) hit += relevance[predicted[r]] >= 1 ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(total);
}

std::vector<std::size_t> rank_by_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

MetricResult evaluate_rankings(std::span<const RankedExample> dataset,
                               std::span<const std::vector<std::size_t>> predicted,
                               std::span<const std::size_t> ks) {
  if (dataset.size() != predicted.size()) throw ValidationError("evaluate: one ranking per example required");
  MetricResult out;
  out.ks.assign(ks.begin(), ks.end());
  out.num_examples = dataset.size();
  for (std::size_t e = 0; e < dataset.size(); ++e) {
    const auto& rel = dataset[e].relevance;
    if (!has_relevant(rel)) ++out.degenerate;
    for (std::size_t k : ks) {
      out.ndcg[k].push_back(ndcg_at_k(predicted[e], rel, k));
      out.recall[k].push_back(recall_at_k(predicted[e], rel, k));
    }
  }
  for (std::size_t k : ks) {
    const double n = static_cast<double>(std::max<std::size_t>(dataset.size(), 1));
    out.mean_ndcg[k] = std::accumulate(out.ndcg[k].begin(), out.ndcg[k].end(), 0.0) / n;
    out.mean_recall[k] = std::accumulate(out.recall[k].begin(), out.recall[k].end(), 0.0) / n;
  }
  return out;
}

MetricResult evaluate(const Policy& policy, std::span<const RankedExample> dataset,
                      std::span<const std::size_t> ks) {
  std::vector<std::vector<std::size_t>> predicted;
  predicted.reserve(dataset.size());
  for (const auto& ex : dataset) predicted.push_back(rank_by_scores(policy.scores(ex)));
  return evaluate_rankings(dataset, predicted, ks);
}

}  // namespace irpo
