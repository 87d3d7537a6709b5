#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "irpo/datamodel.hpp"
#include "irpo/trainer.hpp"

namespace irpo {

// Flat `key = value` file. Values are bare tokens, "quoted strings" or
// [bracketed, lists]; several assignments may share a line separated by
// commas, and `#` starts a comment.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::string_view text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  // Elements of a bracketed list, or a single bare value as a one-element list.
  std::vector<std::string> get_list(const std::string& key, const std::vector<std::string>& fallback) const;

  std::vector<std::string> unused_keys() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
  const std::string* find(const std::string& key) const;
};

struct CheckConfig {
  std::size_t examples = 3;
  std::size_t candidates = 6;
  double fd_step = 1e-5;
  double tolerance = 1e-6;
  double inject_gradient_sign = 1.0;  // test fixture: -1 flips the analytic gradient
  std::size_t rank = 1;               // 1-based rank for the estimator check
  std::size_t samples = 100000;
  std::size_t repetitions = 200;
  std::size_t deviation_samples = 0;  // 0 means n * n
  double slack = 0.1;
};

struct RunConfig {
  SynthConfig synth;
  std::uint64_t seed = 0;
  TrainConfig train;
  std::vector<Method> methods;
  CheckConfig check;
  std::filesystem::path train_path;   // empty: synthesize
  std::filesystem::path eval_path;
  std::filesystem::path policy_path;
  std::filesystem::path out_dir = "out";
  bool record_wall_time = true;

  // Relative input paths resolve against `base_dir` and must exist; out_dir is
  // taken relative to the working directory.
  static RunConfig from(const KeyValueConfig& kv, const std::filesystem::path& base_dir = {});
};

SynthConfig parse_grades(SynthConfig config, const std::string& text);

}  // namespace irpo
