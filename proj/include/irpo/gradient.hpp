#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "irpo/datamodel.hpp"
#include "irpo/gains.hpp"

namespace irpo {

// Gradient with respect to Policy::params(), same layout.
struct GradientVector {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t k) const { return values[k]; }
};

// Analytic IRPO gradient in importance-weighted form:
//   beta * mean_x sum_i w(i) (1 - sigma(z_i)) sum_j rho_ij grad log(pi(e_j) / pi(e_tau(i))).
// The reference policy only contributes constant log-probabilities.
GradientVector irpo_grad(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                         const GainScheme& scheme, double beta);

GradientVector dpo_grad(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                        double beta);
GradientVector sdpo_grad(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                         double beta);
GradientVector sft_grad(const Policy& theta, std::span<const RankedExample> batch);

// rho_i. over candidates for the 0-based rank i.
std::vector<double> importance_weights(const Policy& theta, const Policy& ref, const RankedExample& example,
                                       std::size_t rank, double beta);
std::vector<double> importance_weights(std::span<const double> delta, std::size_t target, double beta);

// grad log(pi(e_j) / pi(e_target)) for every candidate j, one dense row each.
std::vector<std::vector<double>> log_ratio_differences(const Policy& theta, const RankedExample& example,
                                                       std::size_t target);

struct EstimatorReport {
  GradientVector g_exact;         // sum_j rho_ij * diff_j
  GradientVector g_sampled_mean;  // mean of m clipped draws diff_j, j ~ rho_i.
  std::size_t samples = 0;
  std::size_t rank = 0;           // 0-based
  double max_abs_dev = 0.0;       // max_k |g_sampled_mean[k] - g_exact[k]|
  double l2_dev = 0.0;            // ||g_sampled_mean - g_exact||_2
  double rho_max = 0.0;
  double clip_L = 0.0;
  double true_max_norm = 0.0;     // max_j ||diff_j||_2 before clipping
  double bound = 0.0;             // clip_L * sqrt(rho_max / n)

  std::string to_json() const;
};

EstimatorReport sampled_grad(const Policy& theta, const Policy& ref, const RankedExample& example,
                             std::size_t rank, double beta, std::size_t m, std::uint64_t seed,
                             double clip_L = 10.0);

// Mean L2 deviation of the m-sample estimator over independent repetitions.
struct DeviationStudy {
  std::size_t repetitions = 0;
  std::size_t samples = 0;
  double mean_l2_dev = 0.0;
  double max_l2_dev = 0.0;
  double bound = 0.0;
  double true_max_norm = 0.0;
};

DeviationStudy deviation_study(const Policy& theta, const Policy& ref, const RankedExample& example,
                               std::size_t rank, double beta, std::size_t m, std::size_t repetitions,
                               std::uint64_t seed, double clip_L);

// Central finite differences of a scalar function of the policy parameters.
std::vector<double> finite_difference(const std::function<double(const Policy&)>& f, const Policy& at,
                                      double step = 1e-5);

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;  // coordinates above the magnitude floor
};

// Per-coordinate |a - b| / max(|a|, |b|) over coordinates whose magnitude
// exceeds `floor` in either vector.
GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double floor = 1e-8);

}  // namespace irpo
