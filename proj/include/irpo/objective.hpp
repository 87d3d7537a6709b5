#pragma once

#include <span>
#include <string>
#include <vector>

#include "irpo/datamodel.hpp"
#include "irpo/gains.hpp"

namespace irpo {

// Per-example diagnostics. Vectors are indexed by 0-based rank.
struct ExampleDiagnostics {
  std::string prompt_id;
  std::vector<double> weights;
  std::vector<double> z;
  std::vector<double> sigma_z;
  std::vector<std::vector<double>> rho;  // rho[i][j], rows sum to 1
  double loss = 0.0;
  bool degenerate = false;
};

struct LossReport {
  double loss = 0.0;
  std::vector<ExampleDiagnostics> per_example;
  // Number of log-ratio evaluations Delta_j = log pi_theta(e_j) - log pi_ref(e_j)
  // consumed by the loss.
  std::size_t policy_eval_count = 0;
  std::size_t skipped = 0;  // examples with no usable pair / negative

  std::string to_json() const;
};

// Delta_j for every candidate of one example.
std::vector<double> log_ratios(const Policy& theta, const Policy& ref, const RankedExample& example);

// z_i for the 0-based rank i.
double margin_z(const Policy& theta, const Policy& ref, const RankedExample& example, std::size_t rank,
                double beta);
// Same, from precomputed log-ratios.
double margin_z(std::span<const double> delta, std::size_t target, double beta);

LossReport irpo_loss(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                     const GainScheme& scheme, double beta);

// Preferred = first item of target_perm; dispreferred = every zero-relevance
// candidate. Lists without a relevant top item or without negatives yield no pairs.
struct PreferencePair {
  std::size_t example = 0;  // index into the batch
  std::size_t win = 0;
  std::size_t lose = 0;
};
std::vector<PreferencePair> make_pairs(std::span<const RankedExample> batch);

double dpo_pair_loss(double delta_win, double delta_lose, double beta);

LossReport dpo_loss(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch, double beta);
LossReport sdpo_loss(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch, double beta);
LossReport sft_loss(const Policy& theta, std::span<const RankedExample> batch);

}  // namespace irpo
