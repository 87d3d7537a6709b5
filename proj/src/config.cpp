#include "irpo/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace irpo {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::string unquote(const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

bool is_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-' || c == '@';
}

[[noreturn]] void fail(std::size_t line, const std::string& what) {
  throw ConfigError("config line " + std::to_string(line) + ": " + what);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
  KeyValueConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::size_t pos = 0;
    auto skip_space = [&] {
      while (pos < raw.size() && std::isspace(static_cast<unsigned char>(raw[pos]))) ++pos;
    };
    auto at_end = [&] { return pos >= raw.size() || raw[pos] == '#'; };
    skip_space();
    while (!at_end()) {
      const std::size_t key_begin = pos;
      while (pos < raw.size() && is_key_char(raw[pos])) ++pos;
      const std::string key = raw.substr(key_begin, pos - key_begin);
      if (key.empty()) fail(line_no, "expected a key");
      skip_space();
      if (pos >= raw.size() || raw[pos] != '=') fail(line_no, "expected '=' after '" + key + "'");
      ++pos;
      skip_space();
      std::string value;
      if (pos < raw.size() && raw[pos] == '"') {
        const std::size_t close = raw.find('"', pos + 1);
        if (close == std::string::npos) fail(line_no, "unterminated string for '" + key + "'");
        value = raw.substr(pos, close - pos + 1);
        pos = close + 1;
      } else if (pos < raw.size() && raw[pos] == '[') {
        const std::size_t close = raw.find(']', pos + 1);
        if (close == std::string::npos) fail(line_no, "unterminated list for '" + key + "'");
        value = raw.substr(pos, close - pos + 1);
        pos = close + 1;
      } else {
        const std::size_t begin = pos;
        while (pos < raw.size() && raw[pos] != ',' && raw[pos] != '#') ++pos;
        value = trim(std::string_view(raw).substr(begin, pos - begin));
      }
      if (value.empty()) fail(line_no, "missing value for '" + key + "'");
      cfg.values_[key] = value;
      skip_space();
      if (pos < raw.size() && raw[pos] == ',') {
        ++pos;
        skip_space();
        if (at_end()) fail(line_no, "trailing ','");
      } else if (!at_end()) {
        fail(line_no, "unexpected text after value of '" + key + "'");
      }
    }
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const std::string* KeyValueConfig::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  used_.insert(key);
  return &it->second;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  return v ? unquote(*v) : fallback;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  const std::string s = unquote(*v);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) throw ConfigError("'" + key + "' is not a number: " + s);
  return out;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  const std::string s = unquote(*v);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("'" + key + "' is not a non-negative integer: " + s);
  }
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  const std::string s = unquote(*v);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("'" + key + "' is not a boolean: " + s);
}

std::vector<std::string> KeyValueConfig::get_list(const std::string& key,
                                                  const std::vector<std::string>& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  std::string s = *v;
  if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> KeyValueConfig::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_) {
    if (!used_.count(k)) out.push_back(k);
  }
  return out;
}

SynthConfig parse_grades(SynthConfig config, const std::string& text) {
  config.grade_counts.clear();
  std::string s = trim(text);
  const bool explicit_list = !s.empty() && s.front() == '[';
  if (explicit_list) {
    s = s.substr(1, s.size() - 2);
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      int grade = 0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), grade);
      if (ec != std::errc() || ptr != item.data() + item.size()) throw ConfigError("grades: bad entry '" + item + "'");
      config.grade_counts[grade] += 1;
    }
  } else {
    std::stringstream ss(s);
    std::string token;
    while (ss >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) throw ConfigError("grades: expected grade:count, got '" + token + "'");
      try {
        config.grade_counts[std::stoi(token.substr(0, colon))] += std::stoul(token.substr(colon + 1));
      } catch (const std::logic_error&) {
        throw ConfigError("grades: bad token '" + token + "'");
      }
    }
  }
  if (config.grade_counts.empty()) throw ConfigError("grades: empty grade multiset");
  return config;
}

RunConfig RunConfig::from(const KeyValueConfig& kv, const std::filesystem::path& base_dir) {
  RunConfig rc;
  auto resolve = [&](const std::string& p) -> std::filesystem::path {
    if (p.empty()) return {};
    std::filesystem::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
  };
  auto input_path = [&](const std::string& key) -> std::filesystem::path {
    auto p = resolve(kv.get_string(key, ""));
    if (!p.empty() && !std::filesystem::exists(p)) {
      throw ConfigError("'" + key + "' refers to a missing file: " + p.string());
    }
    return p;
  };

  rc.seed = kv.get_uint("seed", 0);

  auto& s = rc.synth;
  s.num_prompts = kv.get_uint("num_prompts", s.num_prompts);
  s.num_eval_prompts = kv.get_uint("eval_prompts", 100);
  s.num_candidates = kv.get_uint("num_candidates", s.num_candidates);
  if (kv.has("grades")) s = parse_grades(s, kv.get_string("grades", ""));
  s.feature_dim = kv.get_uint("feature_dim", s.feature_dim);
  s.feature_noise = kv.get_double("feature_noise", s.feature_noise);
  s.separation = kv.get_double("separation", s.separation);

  auto& t = rc.train;
  t.method = parse_method(kv.get_string("method", "irpo"));
  const std::string policy = kv.get_string("policy", "linear");
  if (policy == "linear") {
    t.policy = PolicyKind::kLinear;
  } else if (policy == "tabular") {
    t.policy = PolicyKind::kTabular;
  } else {
    throw ConfigError("policy must be 'linear' or 'tabular'");
  }
  t.beta = kv.get_double("beta", t.beta);
  t.learning_rate = kv.get_double("learning_rate", t.learning_rate);
  t.epochs = kv.get_uint("epochs", t.epochs);
  t.batch_size = kv.get_uint("batch_size", t.batch_size);
  t.gain = GainScheme::parse(kv.get_string("gain", "ndcg"), kv.get_uint("k", 1), kv.get_double("lambda", 0.5),
                             kv.get_string("mrr_variant", "first") == "all");
  t.clip_L = kv.get_double("clip_L", t.clip_L);
  t.eval_every = kv.get_uint("eval_every", t.eval_every);
  if (kv.has("eval_ks")) {
    t.eval_ks.clear();
    for (const auto& k : kv.get_list("eval_ks", {})) {
      std::size_t v = 0;
      auto [ptr, ec] = std::from_chars(k.data(), k.data() + k.size(), v);
      if (ec != std::errc() || ptr != k.data() + k.size()) throw ConfigError("eval_ks: bad entry '" + k + "'");
      t.eval_ks.push_back(v);
    }
  }
  t.refresh_reference = kv.get_bool("refresh_reference", t.refresh_reference);
  t.baseline_window = kv.get_uint("baseline_window", t.baseline_window);
  t.seed = rc.seed;
  t.check();

  for (const auto& m : kv.get_list("methods", {})) rc.methods.push_back(parse_method(m));

  auto& c = rc.check;
  c.examples = kv.get_uint("check_examples", c.examples);
  c.candidates = kv.get_uint("check_candidates", c.candidates);
  c.fd_step = kv.get_double("fd_step", c.fd_step);
  c.tolerance = kv.get_double("tolerance", c.tolerance);
  c.inject_gradient_sign = kv.get_double("inject_gradient_sign", c.inject_gradient_sign);
  c.rank = kv.get_uint("rank", c.rank);
  c.samples = kv.get_uint("samples", c.samples);
  c.repetitions = kv.get_uint("repetitions", c.repetitions);
  c.deviation_samples = kv.get_uint("deviation_samples", c.deviation_samples);
  c.slack = kv.get_double("slack", c.slack);
  if (c.candidates < 1 || c.examples < 1) throw ConfigError("check_examples and check_candidates must be >= 1");
  if (c.rank < 1 || c.rank > c.candidates) throw ConfigError("rank must be in [1, check_candidates]");

  rc.train_path = input_path("train_path");
  rc.eval_path = input_path("eval_path");
  rc.policy_path = input_path("policy_path");
  rc.out_dir = kv.get_string("out_dir", "out");
  rc.record_wall_time = kv.get_bool("record_wall_time", rc.record_wall_time);
  return rc;
}

}  // namespace irpo
