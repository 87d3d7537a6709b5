#include "irpo/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <numeric>
#include <sstream>

#include "irpo/evalmetrics.hpp"
#include "irpo/gradient.hpp"
#include "irpo/numeric.hpp"
#include "irpo/objective.hpp"

namespace irpo {

Method parse_method(const std::string& name) {
  if (name == "irpo") return Method::kIrpo;
  if (name == "dpo") return Method::kDpo;
  if (name == "sdpo" || name == "s-dpo") return Method::kSdpo;
  if (name == "sft") return Method::kSft;
  if (name == "reinforce") return Method::kReinforce;
  if (name == "iterative_irpo") return Method::kIterativeIrpo;
  throw ConfigError("unknown method '" + name + "'");
}

std::string method_name(Method method) {
  switch (method) {
    case Method::kIrpo: return "irpo";
    case Method::kDpo: return "dpo";
    case Method::kSdpo: return "sdpo";
    case Method::kSft: return "sft";
    case Method::kReinforce: return "reinforce";
    case Method::kIterativeIrpo: return "iterative_irpo";
  }
  return "?";
}

bool is_online(Method method) { return method == Method::kReinforce || method == Method::kIterativeIrpo; }

void TrainConfig::check() const {
  if (!(beta > 0.0)) throw ConfigError("beta must be > 0");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(clip_L > 0.0)) throw ConfigError("clip_L must be > 0");
  if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (eval_ks.empty()) throw ConfigError("eval_ks must not be empty");
  for (std::size_t k : eval_ks) {
    if (k < 1) throw ConfigError("eval_ks entries must be >= 1");
  }
  gain.check();
}

std::string TrainTrace::csv_header() const {
  std::string h = "step,loss";
  for (std::size_t k : ks) h += ",ndcg@" + std::to_string(k);
  for (std::size_t k : ks) h += ",recall@" + std::to_string(k);
  return h;
}

std::string TrainTrace::to_csv() const {
  std::ostringstream os;
  os << csv_header() << '\n';
  char buf[64];
  for (const auto& r : records) {
    os << r.step;
    std::snprintf(buf, sizeof buf, ",%.12g", r.loss);
    os << buf;
    for (double v : r.ndcg) {
      std::snprintf(buf, sizeof buf, ",%.12g", v);
      os << buf;
    }
    for (double v : r.recall) {
      std::snprintf(buf, sizeof buf, ",%.12g", v);
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

Policy initial_policy(const TrainConfig& config, std::span<const RankedExample> train,
                      std::span<const RankedExample> eval) {
  if (config.policy == PolicyKind::kTabular) {
    std::vector<RankedExample> all(train.begin(), train.end());
    all.insert(all.end(), eval.begin(), eval.end());
    return Policy::tabular(all);
  }
  if (train.empty()) throw ValidationError("initial_policy: empty training set");
  const std::size_t d = train.front().feature_dim();
  if (d == 0) throw ValidationError("linear policy needs candidate features");
  return Policy::linear(d);
}

// ---------------------------------------------------------------------------
// Plackett-Luce

std::vector<std::size_t> sample_ranking_pl(std::span<const double> scores, std::mt19937_64& rng) {
  std::vector<std::size_t> remaining(scores.size());
  std::iota(remaining.begin(), remaining.end(), std::size_t{0});
  std::vector<std::size_t> ranking;
  ranking.reserve(scores.size());
  std::vector<double> s;
  while (!remaining.empty()) {
    s.clear();
    for (std::size_t j : remaining) s.push_back(scores[j]);
    const auto probs = softmax(s);
    const std::size_t pick = sample_index(probs, rng);
    ranking.push_back(remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return ranking;
}

std::vector<std::size_t> sample_ranking_pl(const Policy& policy, const RankedExample& example, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample_ranking_pl(policy.scores(example), rng);
}

double pl_log_prob(std::span<const double> scores, std::span<const std::size_t> ranking) {
  double total = 0.0;
  std::vector<double> s;
  for (std::size_t t = 0; t < ranking.size(); ++t) {
    s.clear();
    for (std::size_t u = t; u < ranking.size(); ++u) s.push_back(scores[ranking[u]]);
    total += scores[ranking[t]] - logsumexp(s);
  }
  return total;
}

std::vector<double> pl_log_prob_score_grad(std::span<const double> scores, std::span<const std::size_t> ranking) {
  std::vector<double> grad(scores.size(), 0.0);
  std::vector<double> s;
  for (std::size_t t = 0; t < ranking.size(); ++t) {
    s.clear();
    for (std::size_t u = t; u < ranking.size(); ++u) s.push_back(scores[ranking[u]]);
    const auto p = softmax(s);
    grad[ranking[t]] += 1.0;
    for (std::size_t u = t; u < ranking.size(); ++u) grad[ranking[u]] -= p[u - t];
  }
  return grad;
}

RankedExample relabel(const RankedExample& example, std::span<const std::size_t> ranking) {
  RankedExample out;
  out.prompt_id = example.prompt_id;
  out.candidates.reserve(ranking.size());
  out.relevance.reserve(ranking.size());
  for (std::size_t j : ranking) {
    out.candidates.push_back(example.candidates[j]);
    out.relevance.push_back(example.relevance[j]);
  }
  out.target_perm = derive_target_perm(out.relevance);
  return out;
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

TraceRecord make_record(std::size_t step, double loss, const Policy& policy, std::span<const RankedExample> eval,
                        const std::vector<std::size_t>& ks) {
  TraceRecord rec;
  rec.step = step;
  rec.loss = loss;
  if (!eval.empty()) {
    const auto m = evaluate(policy, eval, ks);
    for (std::size_t k : ks) {
      rec.ndcg.push_back(m.mean_ndcg.at(k));
      rec.recall.push_back(m.mean_recall.at(k));
    }
  } else {
    rec.ndcg.assign(ks.size(), 0.0);
    rec.recall.assign(ks.size(), 0.0);
  }
  return rec;
}

LossReport offline_loss(const TrainConfig& c, const Policy& theta, const Policy& ref,
                        std::span<const RankedExample> batch) {
  switch (c.method) {
    case Method::kIrpo: return irpo_loss(theta, ref, batch, c.gain, c.beta);
    case Method::kDpo: return dpo_loss(theta, ref, batch, c.beta);
    case Method::kSdpo: return sdpo_loss(theta, ref, batch, c.beta);
    case Method::kSft: return sft_loss(theta, batch);
    default: throw ConfigError("method '" + method_name(c.method) + "' is not an offline objective");
  }
}

GradientVector offline_grad(const TrainConfig& c, const Policy& theta, const Policy& ref,
                            std::span<const RankedExample> batch) {
  switch (c.method) {
    case Method::kIrpo: return irpo_grad(theta, ref, batch, c.gain, c.beta);
    case Method::kDpo: return dpo_grad(theta, ref, batch, c.beta);
    case Method::kSdpo: return sdpo_grad(theta, ref, batch, c.beta);
    case Method::kSft: return sft_grad(theta, batch);
    default: throw ConfigError("method '" + method_name(c.method) + "' is not an offline objective");
  }
}

// theta -= lr * clip(grad). Returns false (leaving theta untouched) when the
// step would produce non-finite parameters.
bool apply_update(Policy& theta, const std::vector<double>& grad, double lr, double clip_L) {
  const double norm = l2_norm(grad);
  if (!std::isfinite(norm)) return false;
  const double scale = norm > clip_L ? clip_L / norm : 1.0;
  std::vector<double> next(theta.params().begin(), theta.params().end());
  for (std::size_t k = 0; k < next.size(); ++k) next[k] -= lr * scale * grad[k];
  if (!all_finite(next)) return false;
  std::copy(next.begin(), next.end(), theta.mutable_params().begin());
  return true;
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch) { return (n + batch - 1) / batch; }

// Mini-batch order for one epoch, deterministic in (seed, epoch).
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 1000 + epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<RankedExample> gather(std::span<const RankedExample> data, const std::vector<std::size_t>& order,
                                  std::size_t begin, std::size_t end) {
  std::vector<RankedExample> out;
  out.reserve(end - begin);
  for (std::size_t k = begin; k < end; ++k) out.push_back(data[order[k]]);
  return out;
}

void require_data(std::span<const RankedExample> train) {
  if (train.empty()) throw ValidationError("training set is empty");
}

}  // namespace

TrainResult train_offline(const TrainConfig& config, const Policy& init, std::span<const RankedExample> train,
                          std::span<const RankedExample> eval) {
  config.check();
  require_data(train);
  if (is_online(config.method)) throw ConfigError("train_offline: method must be irpo, dpo, sdpo or sft");

  TrainResult result;
  result.policy = init;
  result.reference = init;
  result.trace.ks = config.eval_ks;
  const Policy& ref = result.reference;
  Policy& theta = result.policy;

  auto record = [&](std::size_t step) {
    const double loss = offline_loss(config, theta, ref, train).loss;
    result.trace.records.push_back(make_record(step, loss, theta, eval, config.eval_ks));
  };

  try {
    record(0);
  } catch (const NumericalError& e) {
    result.diverged = true;
    result.message = e.what();
    return result;
  }
  const std::size_t per_epoch = steps_per_epoch(train.size(), config.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(train.size(), config.seed, epoch);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      const auto batch = gather(train, order, begin, end);
      try {
        const auto report = offline_loss(config, theta, ref, batch);
        const auto grad = offline_grad(config, theta, ref, batch);
        result.policy_eval_count += report.policy_eval_count;
        result.examples_processed += batch.size();
        if (!apply_update(theta, grad.values, config.learning_rate, config.clip_L)) {
          throw NumericalError("update at step " + std::to_string(step + 1) + " is non-finite");
        }
        ++step;
        result.steps = step;
        if (step % config.eval_every == 0) record(step);
      } catch (const NumericalError& e) {
        // theta still holds the last finite parameters.
        result.diverged = true;
        result.message = e.what();
        return result;
      }
    }
  }
  if (result.trace.records.back().step != step) {
    try {
      record(step);
    } catch (const NumericalError& e) {
      result.diverged = true;
      result.message = e.what();
    }
  }
  return result;
}

TrainResult train_offline(const TrainConfig& config, std::span<const RankedExample> train,
                          std::span<const RankedExample> eval) {
  return train_offline(config, initial_policy(config, train, eval), train, eval);
}

namespace {

// Shared skeleton of the on-policy loops. `step_fn` fills the gradient for one
// batch of prompts and returns the batch loss it reports in the trace.
template <class StepFn>
TrainResult run_online(const TrainConfig& config, const Policy& init, std::span<const RankedExample> prompts,
                       std::span<const RankedExample> eval, StepFn&& step_fn) {
  config.check();
  require_data(prompts);
  TrainResult result;
  result.policy = init;
  result.reference = init;
  result.trace.ks = config.eval_ks;
  Policy& theta = result.policy;

  double last_loss = 0.0;
  result.trace.records.push_back(make_record(0, last_loss, theta, eval, config.eval_ks));
  const std::size_t per_epoch = steps_per_epoch(prompts.size(), config.batch_size);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = epoch_order(prompts.size(), config.seed, epoch);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(prompts.size(), begin + config.batch_size);
      const auto batch = gather(prompts, order, begin, end);
      std::mt19937_64 rng(mix_seed(config.seed, 1u << 20 | step));
      try {
        std::vector<double> grad(theta.num_params(), 0.0);
        last_loss = step_fn(result, batch, rng, grad);
        if (!std::isfinite(last_loss)) throw NumericalError("non-finite loss at step " + std::to_string(step + 1));
        result.examples_processed += batch.size();
        if (!apply_update(theta, grad, config.learning_rate, config.clip_L)) {
          throw NumericalError("update at step " + std::to_string(step + 1) + " is non-finite");
        }
      } catch (const NumericalError& e) {
        result.diverged = true;
        result.message = e.what();
        return result;
      }
      ++step;
      result.steps = step;
      if (step % config.eval_every == 0) {
        result.trace.records.push_back(make_record(step, last_loss, theta, eval, config.eval_ks));
      }
    }
  }
  if (result.trace.records.back().step != step) {
    result.trace.records.push_back(make_record(step, last_loss, theta, eval, config.eval_ks));
  }
  return result;
}

}  // namespace

TrainResult train_iterative_irpo(const TrainConfig& config, const Policy& init,
                                 std::span<const RankedExample> prompts, std::span<const RankedExample> eval) {
  return run_online(config, init, prompts, eval,
                    [&](TrainResult& result, const std::vector<RankedExample>& batch, std::mt19937_64& rng,
                        std::vector<double>& grad) {
                      if (config.refresh_reference) result.reference = result.policy;
                      std::vector<RankedExample> sampled;
                      sampled.reserve(batch.size());
                      for (const auto& ex : batch) {
                        const auto ranking = sample_ranking_pl(result.policy.scores(ex), rng);
                        sampled.push_back(relabel(ex, ranking));
                      }
                      const auto report = irpo_loss(result.policy, result.reference, sampled, config.gain, config.beta);
                      result.policy_eval_count += report.policy_eval_count;
                      grad = irpo_grad(result.policy, result.reference, sampled, config.gain, config.beta).values;
                      return report.loss;
                    });
}

TrainResult train_iterative_irpo(const TrainConfig& config, std::span<const RankedExample> prompts,
                                 std::span<const RankedExample> eval) {
  return train_iterative_irpo(config, initial_policy(config, prompts, eval), prompts, eval);
}

TrainResult train_reinforce(const TrainConfig& config, const Policy& init, std::span<const RankedExample> prompts,
                            std::span<const RankedExample> eval) {
  std::deque<double> window;
  double window_sum = 0.0;
  return run_online(config, init, prompts, eval,
                    [&](TrainResult& result, const std::vector<RankedExample>& batch, std::mt19937_64& rng,
                        std::vector<double>& grad) {
                      const double baseline =
                          window.empty() ? 0.0 : window_sum / static_cast<double>(window.size());
                      const double scale = 1.0 / static_cast<double>(batch.size());
                      std::vector<double> rewards;
                      rewards.reserve(batch.size());
                      for (const auto& ex : batch) {
                        const auto scores = result.policy.scores(ex);
                        result.policy_eval_count += ex.size();
                        const auto ranking = sample_ranking_pl(scores, rng);
                        const double reward = ndcg_at_k(ranking, ex.relevance, ex.size());
                        rewards.push_back(reward);
                        const double advantage = reward - baseline;
                        if (advantage == 0.0) continue;
                        // Minimise -(R - b) log P(ranking).
                        auto coef = pl_log_prob_score_grad(scores, ranking);
                        for (auto& c : coef) c *= -advantage * scale;
                        result.policy.accumulate_score_grad(ex, coef, grad);
                      }
                      double mean_reward = 0.0;
                      for (double r : rewards) {
                        mean_reward += r;
                        window.push_back(r);
                        window_sum += r;
                        if (window.size() > config.baseline_window) {
                          window_sum -= window.front();
                          window.pop_front();
                        }
                      }
                      return -mean_reward / static_cast<double>(rewards.size());
                    });
}

TrainResult train_reinforce(const TrainConfig& config, std::span<const RankedExample> prompts,
                            std::span<const RankedExample> eval) {
  return train_reinforce(config, initial_policy(config, prompts, eval), prompts, eval);
}

TrainResult train(const TrainConfig& config, std::span<const RankedExample> train_set,
                  std::span<const RankedExample> eval_set) {
  switch (config.method) {
    case Method::kIterativeIrpo: return train_iterative_irpo(config, train_set, eval_set);
    case Method::kReinforce: return train_reinforce(config, train_set, eval_set);
    default: return train_offline(config, train_set, eval_set);
  }
}

}  // namespace irpo
