#include "irpo/gradient.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "irpo/numeric.hpp"
#include "irpo/objective.hpp"
#include "json.hpp"

namespace irpo {

namespace {

// Chain rule through log-softmax: coefficients on log pi_j become
// coefficients on raw scores, d/ds_k = c_k - p_k * sum_j c_j.
void backprop_log_probs(const Policy& theta, const RankedExample& ex, std::span<const double> log_probs,
                        std::span<const double> coef_on_log_prob, double scale, std::span<double> grad) {
  double total = 0.0;
  for (double c : coef_on_log_prob) total += c;
  std::vector<double> coef(ex.size());
  for (std::size_t k = 0; k < ex.size(); ++k) {
    coef[k] = scale * (coef_on_log_prob[k] - std::exp(log_probs[k]) * total);
  }
  theta.accumulate_score_grad(ex, coef, grad);
}

GradientVector finish(std::vector<double> values) {
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k])) {
      throw NumericalError("non-finite gradient entry at parameter " + std::to_string(k));
    }
  }
  return GradientVector{std::move(values)};
}

bool has_relevant_top(const RankedExample& ex) { return ex.relevance_at_rank(0) > 0; }

}  // namespace

std::vector<double> importance_weights(std::span<const double> delta, std::size_t target, double beta) {
  std::vector<double> terms(delta.size());
  for (std::size_t j = 0; j < delta.size(); ++j) terms[j] = beta * (delta[j] - delta[target]);
  return softmax(terms);
}

std::vector<double> importance_weights(const Policy& theta, const Policy& ref, const RankedExample& example,
                                       std::size_t rank, double beta) {
  if (rank >= example.size()) throw ValidationError("rank out of range");
  const auto delta = log_ratios(theta, ref, example);
  return importance_weights(delta, example.target_perm[rank], beta);
}

GradientVector irpo_grad(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                         const GainScheme& scheme, double beta) {
  if (!(beta > 0.0)) throw ValidationError("beta must be positive");
  if (batch.empty()) throw ValidationError("irpo_grad: empty batch");
  std::vector<double> grad(theta.num_params(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const std::size_t n = ex.size();
    const auto log_probs = theta.log_probs(ex);
    const auto ref_log_probs = ref.log_probs(ex);
    std::vector<double> delta(n);
    for (std::size_t j = 0; j < n; ++j) delta[j] = log_probs[j] - ref_log_probs[j];
    const auto rw = rank_weights(scheme, ex);

    // coef[j] multiplies grad log pi_theta(e_j).
    std::vector<double> coef(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      if (rw.w[i] == 0.0) continue;
      const std::size_t t = ex.target_perm[i];
      const auto rho = importance_weights(delta, t, beta);
      const double z = margin_z(delta, t, beta);
      const double factor = beta * rw.w[i] * sigmoid(-z);
      for (std::size_t j = 0; j < n; ++j) {
        coef[j] += factor * rho[j];
        coef[t] -= factor * rho[j];
      }
    }
    backprop_log_probs(theta, ex, log_probs, coef, scale, grad);
  }
  return finish(std::move(grad));
}

GradientVector dpo_grad(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                        double beta) {
  const auto pairs = make_pairs(batch);
  std::vector<double> grad(theta.num_params(), 0.0);
  if (pairs.empty()) return GradientVector{std::move(grad)};
  const double scale = 1.0 / static_cast<double>(pairs.size());
  std::size_t p = 0;
  while (p < pairs.size()) {
    const std::size_t e = pairs[p].example;
    const auto& ex = batch[e];
    const auto log_probs = theta.log_probs(ex);
    const auto ref_log_probs = ref.log_probs(ex);
    std::vector<double> coef(ex.size(), 0.0);
    for (; p < pairs.size() && pairs[p].example == e; ++p) {
      const auto [_, win, lose] = pairs[p];
      const double margin =
          beta * ((log_probs[win] - ref_log_probs[win]) - (log_probs[lose] - ref_log_probs[lose]));
      // d/dmargin of -log sigma(margin) = -sigma(-margin).
      const double g = -beta * sigmoid(-margin);
      coef[win] += g;
      coef[lose] -= g;
    }
    backprop_log_probs(theta, ex, log_probs, coef, scale, grad);
  }
  return finish(std::move(grad));
}

GradientVector sdpo_grad(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                         double beta) {
  std::vector<double> grad(theta.num_params(), 0.0);
  std::vector<const RankedExample*> used;
  for (const auto& ex : batch) {
    const bool has_neg = std::any_of(ex.relevance.begin(), ex.relevance.end(), [](int y) { return y == 0; });
    if (has_relevant_top(ex) && has_neg) used.push_back(&ex);
  }
  if (used.empty()) return GradientVector{std::move(grad)};
  const double scale = 1.0 / static_cast<double>(used.size());
  for (const RankedExample* exp : used) {
    const auto& ex = *exp;
    const auto log_probs = theta.log_probs(ex);
    const auto ref_log_probs = ref.log_probs(ex);
    const std::size_t pos = ex.target_perm[0];
    std::vector<std::size_t> neg;
    std::vector<double> terms;
    for (std::size_t j = 0; j < ex.size(); ++j) {
      if (ex.relevance[j] != 0) continue;
      neg.push_back(j);
      terms.push_back(beta * ((log_probs[j] - ref_log_probs[j]) - (log_probs[pos] - ref_log_probs[pos])));
    }
    const double z = -logsumexp(terms);
    const auto q = softmax(terms);
    // loss = -log sigma(z); dz/d log pi_j = -beta q_j (negatives), +beta (positive).
    const double outer = -sigmoid(-z);
    std::vector<double> coef(ex.size(), 0.0);
    for (std::size_t a = 0; a < neg.size(); ++a) coef[neg[a]] += outer * (-beta * q[a]);
    coef[pos] += outer * beta;
    backprop_log_probs(theta, ex, log_probs, coef, scale, grad);
  }
  return finish(std::move(grad));
}

GradientVector sft_grad(const Policy& theta, std::span<const RankedExample> batch) {
  if (batch.empty()) throw ValidationError("sft_grad: empty batch");
  std::vector<double> grad(theta.num_params(), 0.0);
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const auto log_probs = theta.log_probs(ex);
    std::vector<double> coef(ex.size(), 0.0);
    coef[ex.target_perm[0]] = -1.0;
    backprop_log_probs(theta, ex, log_probs, coef, scale, grad);
  }
  return finish(std::move(grad));
}

std::vector<std::vector<double>> log_ratio_differences(const Policy& theta, const RankedExample& example,
                                                       std::size_t target) {
  // The softmax normaliser cancels in log pi_j - log pi_target, leaving the
  // difference of raw score gradients.
  std::vector<std::vector<double>> rows(example.size());
  std::vector<double> coef(example.size(), 0.0);
  for (std::size_t j = 0; j < example.size(); ++j) {
    rows[j].assign(theta.num_params(), 0.0);
    if (j == target) continue;
    coef[j] = 1.0;
    coef[target] = -1.0;
    theta.accumulate_score_grad(example, coef, rows[j]);
    coef[j] = 0.0;
    coef[target] = 0.0;
  }
  return rows;
}

namespace {

struct EstimatorSetup {
  std::vector<double> rho;
  std::vector<std::vector<double>> diffs;    // unclipped
  std::vector<std::vector<double>> clipped;  // per-sample L2 clip to clip_L
  std::vector<double> exact;
  double true_max_norm = 0.0;
  double rho_max = 0.0;
};

EstimatorSetup setup_estimator(const Policy& theta, const Policy& ref, const RankedExample& example,
                               std::size_t rank, double beta, double clip_L) {
  if (rank >= example.size()) throw ValidationError("rank out of range");
  if (!(clip_L > 0.0)) throw ValidationError("clip_L must be positive");
  EstimatorSetup s;
  const std::size_t target = example.target_perm[rank];
  s.rho = importance_weights(theta, ref, example, rank, beta);
  s.diffs = log_ratio_differences(theta, example, target);
  s.exact.assign(theta.num_params(), 0.0);
  s.clipped = s.diffs;
  for (std::size_t j = 0; j < example.size(); ++j) {
    for (std::size_t k = 0; k < s.exact.size(); ++k) s.exact[k] += s.rho[j] * s.diffs[j][k];
    const double norm = l2_norm(s.diffs[j]);
    s.true_max_norm = std::max(s.true_max_norm, norm);
    if (norm > clip_L) {
      for (auto& v : s.clipped[j]) v *= clip_L / norm;
    }
  }
  s.rho_max = *std::max_element(s.rho.begin(), s.rho.end());
  return s;
}

std::vector<double> sample_mean(const EstimatorSetup& s, std::size_t m, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> counts(s.rho.size(), 0);
  for (std::size_t draw = 0; draw < m; ++draw) ++counts[sample_index(s.rho, rng)];
  std::vector<double> mean(s.exact.size(), 0.0);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] == 0) continue;
    const double w = static_cast<double>(counts[j]) / static_cast<double>(m);
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += w * s.clipped[j][k];
  }
  return mean;
}

double deviation_bound(double clip_L, double rho_max, std::size_t n) {
  return clip_L * std::sqrt(rho_max / static_cast<double>(n));
}

}  // namespace

EstimatorReport sampled_grad(const Policy& theta, const Policy& ref, const RankedExample& example,
                             std::size_t rank, double beta, std::size_t m, std::uint64_t seed, double clip_L) {
  if (m < 1) throw ValidationError("sampled_grad needs at least one sample");
  const auto s = setup_estimator(theta, ref, example, rank, beta, clip_L);
  EstimatorReport r;
  r.samples = m;
  r.rank = rank;
  r.clip_L = clip_L;
  r.rho_max = s.rho_max;
  r.true_max_norm = s.true_max_norm;
  r.g_exact.values = s.exact;
  r.g_sampled_mean.values = sample_mean(s, m, seed);
  double sq = 0.0;
  for (std::size_t k = 0; k < s.exact.size(); ++k) {
    const double dev = std::abs(r.g_sampled_mean.values[k] - s.exact[k]);
    r.max_abs_dev = std::max(r.max_abs_dev, dev);
    sq += dev * dev;
  }
  r.l2_dev = std::sqrt(sq);
  r.bound = deviation_bound(clip_L, s.rho_max, example.size());
  return r;
}

DeviationStudy deviation_study(const Policy& theta, const Policy& ref, const RankedExample& example,
                               std::size_t rank, double beta, std::size_t m, std::size_t repetitions,
                               std::uint64_t seed, double clip_L) {
  if (m < 1 || repetitions < 1) throw ValidationError("deviation_study needs m >= 1 and repetitions >= 1");
  const auto s = setup_estimator(theta, ref, example, rank, beta, clip_L);
  DeviationStudy out;
  out.repetitions = repetitions;
  out.samples = m;
  out.true_max_norm = s.true_max_norm;
  out.bound = deviation_bound(clip_L, s.rho_max, example.size());
  double total = 0.0;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    const auto mean = sample_mean(s, m, mix_seed(seed, rep));
    double sq = 0.0;
    for (std::size_t k = 0; k < mean.size(); ++k) sq += (mean[k] - s.exact[k]) * (mean[k] - s.exact[k]);
    const double dev = std::sqrt(sq);
    total += dev;
    out.max_l2_dev = std::max(out.max_l2_dev, dev);
  }
  out.mean_l2_dev = total / static_cast<double>(repetitions);
  return out;
}

std::string EstimatorReport::to_json() const {
  nlohmann::json j;
  j["g_exact"] = g_exact.values;
  j["g_sampled_mean"] = g_sampled_mean.values;
  j["samples"] = samples;
  j["rank"] = rank + 1;
  j["max_abs_dev"] = max_abs_dev;
  j["l2_dev"] = l2_dev;
  j["rho_max"] = rho_max;
  j["clip_L"] = clip_L;
  j["true_max_norm"] = true_max_norm;
  j["bound"] = bound;
  return j.dump(2);
}

std::vector<double> finite_difference(const std::function<double(const Policy&)>& f, const Policy& at,
                                      double step) {
  Policy probe = at;
  std::vector<double> out(at.num_params());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double orig = probe.params()[k];
    probe.mutable_params()[k] = orig + step;
    const double up = f(probe);
    probe.mutable_params()[k] = orig - step;
    const double down = f(probe);
    probe.mutable_params()[k] = orig;
    out[k] = (up - down) / (2.0 * step);
  }
  return out;
}

GradCheckResult compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                                  double floor) {
  if (analytic.size() != numeric.size()) throw ValidationError("gradient dimension mismatch");
  GradCheckResult r;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double scale = std::max(std::abs(analytic[k]), std::abs(numeric[k]));
    if (scale <= floor) continue;
    ++r.checked;
    const double rel = std::abs(analytic[k] - numeric[k]) / scale;
    if (rel > r.max_rel_err) {
      r.max_rel_err = rel;
      r.worst_index = k;
    }
  }
  return r;
}

}  // namespace irpo
