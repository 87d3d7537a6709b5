#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "irpo/datamodel.hpp"
#include "irpo/gains.hpp"

namespace irpo {

enum class Method { kIrpo, kDpo, kSdpo, kSft, kReinforce, kIterativeIrpo };

Method parse_method(const std::string& name);
std::string method_name(Method method);
bool is_online(Method method);

struct TrainConfig {
  Method method = Method::kIrpo;
  PolicyKind policy = PolicyKind::kLinear;
  double beta = 1.0;
  double learning_rate = 0.1;
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  GainScheme gain;
  // Upper bound on the L2 norm of each update direction.
  double clip_L = 10.0;
  std::uint64_t seed = 0;
  std::size_t eval_every = 10;
  std::vector<std::size_t> eval_ks{1, 5, 10};
  // Iterative IRPO: reset the reference to the pre-update policy every step.
  bool refresh_reference = true;
  // REINFORCE running-mean baseline window, in rewards.
  std::size_t baseline_window = 50;

  void check() const;
};

struct TraceRecord {
  std::size_t step = 0;
  double loss = 0.0;
  std::vector<double> ndcg;    // aligned with TrainTrace::ks
  std::vector<double> recall;

  bool operator==(const TraceRecord&) const = default;
};

struct TrainTrace {
  std::vector<std::size_t> ks;
  std::vector<TraceRecord> records;

  std::string csv_header() const;
  std::string to_csv() const;
  bool operator==(const TrainTrace&) const = default;
};

struct TrainResult {
  Policy policy;
  Policy reference;
  TrainTrace trace;
  bool diverged = false;
  std::string message;
  std::size_t steps = 0;
  std::size_t policy_eval_count = 0;
  std::size_t examples_processed = 0;

  double evals_per_example() const {
    return examples_processed == 0 ? 0.0
                                   : static_cast<double>(policy_eval_count) / static_cast<double>(examples_processed);
  }
};

// Zero-initialised (uniform) policy of the configured kind. Tabular policies
// get a logit for every (prompt, item) in both datasets.
Policy initial_policy(const TrainConfig& config, std::span<const RankedExample> train,
                      std::span<const RankedExample> eval);

// Gradient descent on IRPO, DPO, S-DPO or SFT with the reference frozen at
// `init`.
TrainResult train_offline(const TrainConfig& config, const Policy& init, std::span<const RankedExample> train,
                          std::span<const RankedExample> eval);
TrainResult train_offline(const TrainConfig& config, std::span<const RankedExample> train,
                          std::span<const RankedExample> eval);

// On-policy loop: sample a ranking per prompt, relabel it with the prompt's
// relevance, rebuild the target by descending relevance, take one IRPO step.
TrainResult train_iterative_irpo(const TrainConfig& config, const Policy& init,
                                 std::span<const RankedExample> prompts, std::span<const RankedExample> eval);
TrainResult train_iterative_irpo(const TrainConfig& config, std::span<const RankedExample> prompts,
                                 std::span<const RankedExample> eval);

// REINFORCE with full-list NDCG reward and a running-mean baseline.
TrainResult train_reinforce(const TrainConfig& config, const Policy& init, std::span<const RankedExample> prompts,
                            std::span<const RankedExample> eval);
TrainResult train_reinforce(const TrainConfig& config, std::span<const RankedExample> prompts,
                            std::span<const RankedExample> eval);

// Dispatch on config.method.
TrainResult train(const TrainConfig& config, std::span<const RankedExample> train_set,
                  std::span<const RankedExample> eval_set);

// Plackett-Luce sampling without replacement, proportional to exp(score).
std::vector<std::size_t> sample_ranking_pl(std::span<const double> scores, std::mt19937_64& rng);
std::vector<std::size_t> sample_ranking_pl(const Policy& policy, const RankedExample& example, std::uint64_t seed);

// log P_PL(ranking) = sum over picks of the log-softmax among remaining items.
double pl_log_prob(std::span<const double> scores, std::span<const std::size_t> ranking);
// d log P_PL(ranking) / d score_k.
std::vector<double> pl_log_prob_score_grad(std::span<const double> scores, std::span<const std::size_t> ranking);

// Candidates and relevance reordered to `ranking`, target rebuilt by
// descending relevance with ties kept in sampled order.
RankedExample relabel(const RankedExample& example, std::span<const std::size_t> ranking);

}  // namespace irpo
