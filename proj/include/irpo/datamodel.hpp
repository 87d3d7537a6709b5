#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "irpo/errors.hpp"

namespace irpo {

struct CandidateItem {
  std::string item_id;
  std::vector<double> features;  // empty when absent

  bool operator==(const CandidateItem&) const = default;
};

// One prompt with its candidate list. Indices are 0-based in the C++ API;
// target_perm[i] is the candidate placed at rank i + 1. The JSONL format uses
// 1-based indices.
struct RankedExample {
  std::string prompt_id;
  std::vector<CandidateItem> candidates;
  std::vector<int> relevance;
  std::vector<std::size_t> target_perm;

  std::size_t size() const { return candidates.size(); }
  int relevance_at_rank(std::size_t rank) const { return relevance[target_perm[rank]]; }
  // Relevance grades read along target_perm.
  std::vector<int> ranked_relevance() const;
  std::size_t feature_dim() const;

  bool operator==(const RankedExample&) const = default;
};

// Stable sort of candidate indices by descending relevance.
std::vector<std::size_t> derive_target_perm(std::span<const int> relevance);

// Throws ValidationError naming the prompt and the violated invariant.
void validate(const RankedExample& example);

enum class PolicyKind { kTabular, kLinear };

// Softmax policy over each example's candidate set. Tabular policies hold one
// logit per (prompt_id, item_id) pair; linear policies score a candidate by
// the dot product of a weight vector with its features.
class Policy {
 public:
  static Policy tabular(std::span<const RankedExample> examples, double init = 0.0);
  static Policy linear(std::size_t dim, double init = 0.0);

  PolicyKind kind() const { return kind_; }
  std::size_t num_params() const { return params_.size(); }
  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }

  std::vector<double> scores(const RankedExample& example) const;
  std::vector<double> log_probs(const RankedExample& example) const;

  // grad += sum_j coef[j] * d score_j / d params.
  void accumulate_score_grad(const RankedExample& example, std::span<const double> coef,
                             std::span<double> grad) const;

  // Index of the tabular logit for one candidate. Throws when unknown.
  std::size_t tabular_index(const std::string& prompt_id, const std::string& item_id) const;

  std::string to_json() const;
  static Policy from_json(const std::string& text);

  bool operator==(const Policy& other) const {
    return kind_ == other.kind_ && params_ == other.params_ && keys_ == other.keys_;
  }

 private:
  PolicyKind kind_ = PolicyKind::kLinear;
  std::vector<double> params_;
  // Tabular only: (prompt_id, item_id) for each logit, in parameter order.
  std::vector<std::pair<std::string, std::string>> keys_;
  std::unordered_map<std::string, std::size_t> index_;

  void rebuild_index();
};

// log pi(e_j | x) for the 0-based candidate index j.
double log_prob(const Policy& policy, const RankedExample& example, std::size_t j);

std::vector<RankedExample> ingest_jsonl(const std::filesystem::path& path);
std::vector<RankedExample> parse_jsonl(std::istream& in);
std::string to_jsonl_line(const RankedExample& example);
void write_jsonl(const std::filesystem::path& path, std::span<const RankedExample> examples);

struct SynthConfig {
  std::size_t num_prompts = 200;
  std::size_t num_eval_prompts = 0;
  std::size_t num_candidates = 20;
  // Grade -> count per list; counts must sum to num_candidates.
  std::map<int, std::size_t, std::greater<int>> grade_counts{{2, 1}, {1, 5}, {0, 14}};
  std::size_t feature_dim = 8;
  double feature_noise = 0.5;
  // Distance of each grade's feature centroid from the origin, per grade unit.
  double separation = 1.0;
};

struct SynthDataset {
  std::vector<RankedExample> train;
  std::vector<RankedExample> eval;
  // Scorer that orders every list by relevance when feature_noise = 0.
  std::vector<double> planted_weights;
};

// Deterministic in (config, seed). Each positive grade level g has its own
// feature direction u_g; a grade-g candidate's features are g * separation *
// u_g plus isotropic Gaussian noise, and grade 0 is centred at the origin.
// The planted scorer is sum_g u_g.
SynthDataset synthesize(const SynthConfig& config, std::uint64_t seed);

// "2:1 1:5 0:14" style summary of the per-list grade multiset.
std::string grade_histogram(const SynthConfig& config);

}  // namespace irpo
