#include "irpo/datamodel.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "irpo/numeric.hpp"
#include "json.hpp"

namespace irpo {

using nlohmann::json;

namespace {

std::string table_key(const std::string& prompt_id, const std::string& item_id) {
  std::string key;
  key.reserve(prompt_id.size() + item_id.size() + 1);
  key += prompt_id;
  key += '\x1f';
  key += item_id;
  return key;
}

[[noreturn]] void invalid(const RankedExample& example, const std::string& what) {
  throw ValidationError("prompt '" + example.prompt_id + "': " + what);
}

}  // namespace

std::vector<int> RankedExample::ranked_relevance() const {
  std::vector<int> out(target_perm.size());
  for (std::size_t i = 0; i < target_perm.size(); ++i) out[i] = relevance[target_perm[i]];
  return out;
}

std::size_t RankedExample::feature_dim() const {
  return candidates.empty() ? 0 : candidates.front().features.size();
}

std::vector<std::size_t> derive_target_perm(std::span<const int> relevance) {
  std::vector<std::size_t> perm(relevance.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::stable_sort(perm.begin(), perm.end(),
                   [&](std::size_t a, std::size_t b) { return relevance[a] > relevance[b]; });
  return perm;
}

void validate(const RankedExample& example) {
  const std::size_t n = example.candidates.size();
  if (n == 0) invalid(example, "candidate list is empty");
  if (example.relevance.size() != n) invalid(example, "relevance length differs from candidate count");
  for (int y : example.relevance) {
    if (y < 0) invalid(example, "relevance grades must be non-negative");
  }
  std::set<std::string> ids;
  for (const auto& c : example.candidates) {
    if (!ids.insert(c.item_id).second) invalid(example, "duplicate item_id '" + c.item_id + "'");
  }
  const std::size_t d = example.candidates.front().features.size();
  for (const auto& c : example.candidates) {
    if (c.features.size() != d) invalid(example, "feature vectors differ in dimension");
    if (!all_finite(c.features)) invalid(example, "non-finite feature value");
  }
  if (example.target_perm.size() != n) invalid(example, "target_perm is not a permutation of the candidates");
  std::vector<bool> seen(n, false);
  for (std::size_t idx : example.target_perm) {
    if (idx >= n || seen[idx]) invalid(example, "target_perm is not a permutation of the candidates");
    seen[idx] = true;
  }
  for (std::size_t i = 1; i < n; ++i) {
    if (example.relevance_at_rank(i) > example.relevance_at_rank(i - 1)) {
      invalid(example, "relevance is not non-increasing along target_perm");
    }
  }
}

// ---------------------------------------------------------------------------
// Policy

Policy Policy::tabular(std::span<const RankedExample> examples, double init) {
  Policy p;
  p.kind_ = PolicyKind::kTabular;
  for (const auto& ex : examples) {
    for (const auto& c : ex.candidates) {
      const std::string key = table_key(ex.prompt_id, c.item_id);
      if (p.index_.emplace(key, p.keys_.size()).second) {
        p.keys_.emplace_back(ex.prompt_id, c.item_id);
      }
    }
  }
  p.params_.assign(p.keys_.size(), init);
  return p;
}

Policy Policy::linear(std::size_t dim, double init) {
  Policy p;
  p.kind_ = PolicyKind::kLinear;
  p.params_.assign(dim, init);
  return p;
}

void Policy::rebuild_index() {
  index_.clear();
  for (std::size_t k = 0; k < keys_.size(); ++k) {
    index_.emplace(table_key(keys_[k].first, keys_[k].second), k);
  }
}

std::size_t Policy::tabular_index(const std::string& prompt_id, const std::string& item_id) const {
  auto it = index_.find(table_key(prompt_id, item_id));
  if (it == index_.end()) {
    throw ValidationError("tabular policy has no logit for (prompt '" + prompt_id + "', item '" +
                          item_id + "')");
  }
  return it->second;
}

std::vector<double> Policy::scores(const RankedExample& example) const {
  std::vector<double> s(example.size());
  if (kind_ == PolicyKind::kTabular) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      s[j] = params_[tabular_index(example.prompt_id, example.candidates[j].item_id)];
    }
    return s;
  }
  for (std::size_t j = 0; j < s.size(); ++j) {
    const auto& f = example.candidates[j].features;
    if (f.size() != params_.size()) {
      if (f.empty()) {
        throw ValidationError("linear policy needs features (prompt '" + example.prompt_id + "')");
      }
      throw ValidationError("feature dimension " + std::to_string(f.size()) +
                            " does not match linear policy dimension " +
                            std::to_string(params_.size()) + " (prompt '" + example.prompt_id + "')");
    }
    s[j] = std::inner_product(f.begin(), f.end(), params_.begin(), 0.0);
  }
  return s;
}

std::vector<double> Policy::log_probs(const RankedExample& example) const {
  return log_softmax(scores(example));
}

void Policy::accumulate_score_grad(const RankedExample& example, std::span<const double> coef,
                                   std::span<double> grad) const {
  for (std::size_t j = 0; j < example.size(); ++j) {
    if (coef[j] == 0.0) continue;
    if (kind_ == PolicyKind::kTabular) {
      grad[tabular_index(example.prompt_id, example.candidates[j].item_id)] += coef[j];
    } else {
      const auto& f = example.candidates[j].features;
      for (std::size_t k = 0; k < f.size(); ++k) grad[k] += coef[j] * f[k];
    }
  }
}

std::string Policy::to_json() const {
  json j;
  j["kind"] = kind_ == PolicyKind::kTabular ? "tabular" : "linear";
  j["params"] = params_;
  if (kind_ == PolicyKind::kTabular) {
    json keys = json::array();
    for (const auto& [prompt, item] : keys_) keys.push_back({prompt, item});
    j["keys"] = std::move(keys);
  }
  return j.dump();
}

Policy Policy::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy snapshot: ") + e.what());
  }
  Policy p;
  try {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "tabular") {
      p.kind_ = PolicyKind::kTabular;
    } else if (kind == "linear") {
      p.kind_ = PolicyKind::kLinear;
    } else {
      throw ParseError("policy snapshot: unknown kind '" + kind + "'");
    }
    p.params_ = j.at("params").get<std::vector<double>>();
    if (p.kind_ == PolicyKind::kTabular) {
      for (const auto& key : j.at("keys")) {
        p.keys_.emplace_back(key.at(0).get<std::string>(), key.at(1).get<std::string>());
      }
      if (p.keys_.size() != p.params_.size()) throw ParseError("policy snapshot: keys/params size mismatch");
      p.rebuild_index();
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("policy snapshot: ") + e.what());
  }
  if (!all_finite(p.params_)) throw ValidationError("policy snapshot has non-finite parameters");
  return p;
}

double log_prob(const Policy& policy, const RankedExample& example, std::size_t j) {
  if (j >= example.size()) throw ValidationError("candidate index out of range");
  return policy.log_probs(example)[j];
}

// ---------------------------------------------------------------------------
// JSONL

std::vector<RankedExample> parse_jsonl(std::istream& in) {
  std::vector<RankedExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no) + ": ";
    RankedExample ex;
    try {
      const json j = json::parse(line);
      ex.prompt_id = j.at("prompt_id").get<std::string>();
      for (const auto& c : j.at("candidates")) {
        CandidateItem item;
        item.item_id = c.at("item_id").get<std::string>();
        if (c.contains("features") && !c["features"].is_null()) {
          item.features = c["features"].get<std::vector<double>>();
        }
        ex.candidates.push_back(std::move(item));
      }
      ex.relevance = j.at("relevance").get<std::vector<int>>();
      if (j.contains("target_perm") && !j["target_perm"].is_null()) {
        for (long long v : j["target_perm"].get<std::vector<long long>>()) {
          if (v < 1) throw ValidationError("prompt '" + ex.prompt_id + "': target_perm is 1-based");
          ex.target_perm.push_back(static_cast<std::size_t>(v - 1));
        }
      } else {
        ex.target_perm = derive_target_perm(ex.relevance);
      }
    } catch (const json::exception& e) {
      throw ParseError(where + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    try {
      validate(ex);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<RankedExample> ingest_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return parse_jsonl(in);
}

std::string to_jsonl_line(const RankedExample& example) {
  json j;
  j["prompt_id"] = example.prompt_id;
  json cands = json::array();
  for (const auto& c : example.candidates) {
    json item;
    item["item_id"] = c.item_id;
    if (!c.features.empty()) item["features"] = c.features;
    cands.push_back(std::move(item));
  }
  j["candidates"] = std::move(cands);
  j["relevance"] = example.relevance;
  std::vector<std::size_t> one_based(example.target_perm);
  for (auto& v : one_based) ++v;
  j["target_perm"] = one_based;
  return j.dump();
}

void write_jsonl(const std::filesystem::path& path, std::span<const RankedExample> examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  for (const auto& ex : examples) out << to_jsonl_line(ex) << '\n';
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Synthesis

namespace {

std::vector<double> gaussian_vector(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(d);
  for (auto& x : v) x = normal(rng);
  return v;
}

void normalize(std::vector<double>& v) {
  const double norm = l2_norm(v);
  if (norm > 0.0) {
    for (auto& x : v) x /= norm;
  }
}

// One unit direction per positive grade, orthonormal when d allows it.
std::map<int, std::vector<double>> grade_directions(const SynthConfig& config, std::mt19937_64& rng) {
  std::map<int, std::vector<double>> dirs;
  const std::size_t d = config.feature_dim;
  if (d == 0) return dirs;
  std::vector<int> grades;
  for (const auto& [g, count] : config.grade_counts) {
    if (g > 0) grades.push_back(g);
  }
  std::sort(grades.begin(), grades.end());
  const bool orthogonal = grades.size() <= d;
  std::vector<std::vector<double>> basis;
  for (int g : grades) {
    std::vector<double> v;
    if (orthogonal || basis.empty()) {
      v = gaussian_vector(d, rng);
      for (const auto& b : basis) {
        const double dot = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
        for (std::size_t k = 0; k < d; ++k) v[k] -= dot * b[k];
      }
      normalize(v);
      basis.push_back(v);
    } else {
      v = basis.front();
    }
    dirs[g] = v;
  }
  return dirs;
}

std::vector<RankedExample> draw_examples(const SynthConfig& config, std::size_t count,
                                         const std::string& prefix,
                                         const std::map<int, std::vector<double>>& dirs,
                                         std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<int> grades;
  for (const auto& [g, c] : config.grade_counts) grades.insert(grades.end(), c, g);
  std::vector<RankedExample> out;
  out.reserve(count);
  for (std::size_t p = 0; p < count; ++p) {
    RankedExample ex;
    ex.prompt_id = prefix + std::to_string(p);
    std::vector<int> order(grades);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t j = 0; j < order.size(); ++j) {
      CandidateItem item;
      item.item_id = ex.prompt_id + "_c" + std::to_string(j);
      if (config.feature_dim > 0) {
        item.features.assign(config.feature_dim, 0.0);
        const int g = order[j];
        if (g > 0) {
          const auto& u = dirs.at(g);
          for (std::size_t k = 0; k < config.feature_dim; ++k) {
            item.features[k] = static_cast<double>(g) * config.separation * u[k];
          }
        }
        for (auto& x : item.features) x += config.feature_noise * normal(rng);
      }
      ex.candidates.push_back(std::move(item));
    }
    ex.relevance = order;
    ex.target_perm = derive_target_perm(ex.relevance);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace

SynthDataset synthesize(const SynthConfig& config, std::uint64_t seed) {
  if (config.num_prompts < 1) throw ValidationError("synth: num_prompts must be >= 1");
  if (config.num_candidates < 2) throw ValidationError("synth: num_candidates must be >= 2");
  if (config.feature_noise < 0.0) throw ValidationError("synth: feature_noise must be >= 0");
  std::size_t total = 0;
  for (const auto& [g, c] : config.grade_counts) {
    if (g < 0) throw ValidationError("synth: grades must be non-negative");
    total += c;
  }
  if (total != config.num_candidates) {
    throw ValidationError("synth: grade multiset has " + std::to_string(total) + " entries, expected " +
                          std::to_string(config.num_candidates));
  }

  std::mt19937_64 structure_rng(mix_seed(seed, 0));
  const auto dirs = grade_directions(config, structure_rng);

  SynthDataset ds;
  ds.planted_weights.assign(config.feature_dim, 0.0);
  for (const auto& [g, u] : dirs) {
    for (std::size_t k = 0; k < u.size(); ++k) ds.planted_weights[k] += u[k];
  }
  std::mt19937_64 train_rng(mix_seed(seed, 1));
  ds.train = draw_examples(config, config.num_prompts, "p", dirs, train_rng);
  std::mt19937_64 eval_rng(mix_seed(seed, 2));
  ds.eval = draw_examples(config, config.num_eval_prompts, "e", dirs, eval_rng);
  return ds;
}

std::string grade_histogram(const SynthConfig& config) {
  std::ostringstream os;
  bool first = true;
  for (const auto& [g, c] : config.grade_counts) {
    if (!first) os << ' ';
    os << g << ':' << c;
    first = false;
  }
  return os.str();
}

}  // namespace irpo
