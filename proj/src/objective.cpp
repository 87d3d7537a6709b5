#include "irpo/objective.hpp"

#include <cmath>

#include "irpo/numeric.hpp"
#include "json.hpp"

namespace irpo {

namespace {

void require_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValidationError("beta must be a positive finite number");
}

void require_finite(double v, const RankedExample& ex, const char* what) {
  if (!std::isfinite(v)) {
    throw NumericalError(std::string("non-finite ") + what + " on prompt '" + ex.prompt_id +
                         "' (parameter blow-up?)");
  }
}

bool has_relevant_top(const RankedExample& ex) { return ex.relevance_at_rank(0) > 0; }

std::vector<std::size_t> negatives(const RankedExample& ex) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < ex.size(); ++j) {
    if (ex.relevance[j] == 0) out.push_back(j);
  }
  return out;
}

}  // namespace

std::vector<double> log_ratios(const Policy& theta, const Policy& ref, const RankedExample& example) {
  auto lp = theta.log_probs(example);
  const auto lr = ref.log_probs(example);
  for (std::size_t j = 0; j < lp.size(); ++j) lp[j] -= lr[j];
  return lp;
}

double margin_z(std::span<const double> delta, std::size_t target, double beta) {
  std::vector<double> terms(delta.size());
  for (std::size_t j = 0; j < delta.size(); ++j) terms[j] = beta * (delta[j] - delta[target]);
  return -logsumexp(terms);
}

double margin_z(const Policy& theta, const Policy& ref, const RankedExample& example, std::size_t rank,
                double beta) {
  require_beta(beta);
  if (rank >= example.size()) throw ValidationError("rank out of range");
  const auto delta = log_ratios(theta, ref, example);
  return margin_z(delta, example.target_perm[rank], beta);
}

LossReport irpo_loss(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                     const GainScheme& scheme, double beta) {
  require_beta(beta);
  if (batch.empty()) throw ValidationError("irpo_loss: empty batch");
  LossReport report;
  double total = 0.0;
  for (const auto& ex : batch) {
    const std::size_t n = ex.size();
    // One log-ratio per candidate, reused by every rank.
    const auto delta = log_ratios(theta, ref, ex);
    report.policy_eval_count += n;
    const auto rw = rank_weights(scheme, ex);

    ExampleDiagnostics diag;
    diag.prompt_id = ex.prompt_id;
    diag.weights = rw.w;
    diag.degenerate = rw.degenerate;
    diag.z.resize(n);
    diag.sigma_z.resize(n);
    diag.rho.resize(n);
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = ex.target_perm[i];
      for (std::size_t j = 0; j < n; ++j) terms[j] = beta * (delta[j] - delta[t]);
      const double lse = logsumexp(terms);
      diag.z[i] = -lse;
      diag.sigma_z[i] = sigmoid(diag.z[i]);
      diag.rho[i].resize(n);
      for (std::size_t j = 0; j < n; ++j) diag.rho[i][j] = std::exp(terms[j] - lse);
      if (rw.w[i] != 0.0) diag.loss -= rw.w[i] * log_sigmoid(diag.z[i]);
    }
    require_finite(diag.loss, ex, "IRPO loss");
    total += diag.loss;
    report.per_example.push_back(std::move(diag));
  }
  report.loss = total / static_cast<double>(batch.size());
  return report;
}

std::vector<PreferencePair> make_pairs(std::span<const RankedExample> batch) {
  std::vector<PreferencePair> pairs;
  for (std::size_t e = 0; e < batch.size(); ++e) {
    const auto& ex = batch[e];
    if (!has_relevant_top(ex)) continue;
    for (std::size_t j : negatives(ex)) pairs.push_back({e, ex.target_perm[0], j});
  }
  return pairs;
}

double dpo_pair_loss(double delta_win, double delta_lose, double beta) {
  return -log_sigmoid(beta * (delta_win - delta_lose));
}

LossReport dpo_loss(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch, double beta) {
  require_beta(beta);
  LossReport report;
  double total = 0.0;
  std::size_t num_pairs = 0;
  for (const auto& ex : batch) {
    ExampleDiagnostics diag;
    diag.prompt_id = ex.prompt_id;
    const auto neg = negatives(ex);
    if (!has_relevant_top(ex) || neg.empty()) {
      ++report.skipped;
      diag.degenerate = true;
      report.per_example.push_back(std::move(diag));
      continue;
    }
    const auto delta = log_ratios(theta, ref, ex);
    const std::size_t win = ex.target_perm[0];
    double ex_total = 0.0;
    for (std::size_t j : neg) {
      // Pairwise DPO scores both members of every pair separately.
      report.policy_eval_count += 2;
      ex_total += dpo_pair_loss(delta[win], delta[j], beta);
    }
    require_finite(ex_total, ex, "DPO loss");
    diag.loss = ex_total / static_cast<double>(neg.size());
    total += ex_total;
    num_pairs += neg.size();
    report.per_example.push_back(std::move(diag));
  }
  report.loss = num_pairs == 0 ? 0.0 : total / static_cast<double>(num_pairs);
  return report;
}

LossReport sdpo_loss(const Policy& theta, const Policy& ref, std::span<const RankedExample> batch,
                     double beta) {
  require_beta(beta);
  LossReport report;
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& ex : batch) {
    ExampleDiagnostics diag;
    diag.prompt_id = ex.prompt_id;
    const auto neg = negatives(ex);
    if (!has_relevant_top(ex) || neg.empty()) {
      ++report.skipped;
      diag.degenerate = true;
      report.per_example.push_back(std::move(diag));
      continue;
    }
    const auto delta = log_ratios(theta, ref, ex);
    const std::size_t pos = ex.target_perm[0];
    report.policy_eval_count += 1 + neg.size();
    std::vector<double> terms;
    terms.reserve(neg.size());
    for (std::size_t j : neg) terms.push_back(beta * (delta[j] - delta[pos]));
    const double z = -logsumexp(terms);
    diag.z = {z};
    diag.sigma_z = {sigmoid(z)};
    diag.loss = -log_sigmoid(z);
    require_finite(diag.loss, ex, "S-DPO loss");
    total += diag.loss;
    ++used;
    report.per_example.push_back(std::move(diag));
  }
  report.loss = used == 0 ? 0.0 : total / static_cast<double>(used);
  return report;
}

LossReport sft_loss(const Policy& theta, std::span<const RankedExample> batch) {
  if (batch.empty()) throw ValidationError("sft_loss: empty batch");
  LossReport report;
  double total = 0.0;
  for (const auto& ex : batch) {
    ExampleDiagnostics diag;
    diag.prompt_id = ex.prompt_id;
    const auto lp = theta.log_probs(ex);
    report.policy_eval_count += 1;
    diag.loss = -lp[ex.target_perm[0]];
    require_finite(diag.loss, ex, "SFT loss");
    total += diag.loss;
    report.per_example.push_back(std::move(diag));
  }
  report.loss = total / static_cast<double>(batch.size());
  return report;
}

std::string LossReport::to_json() const {
  nlohmann::json j;
  j["loss"] = loss;
  j["policy_eval_count"] = policy_eval_count;
  j["skipped"] = skipped;
  auto& arr = j["per_example"] = nlohmann::json::array();
  for (const auto& d : per_example) {
    nlohmann::json e;
    e["prompt_id"] = d.prompt_id;
    e["loss"] = d.loss;
    e["weights"] = d.weights;
    e["z"] = d.z;
    e["sigma_z"] = d.sigma_z;
    e["rho"] = d.rho;
    e["degenerate"] = d.degenerate;
    arr.push_back(std::move(e));
  }
  return j.dump();
}

}  // namespace irpo
