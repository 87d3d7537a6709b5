#include "irpo/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "irpo/config.hpp"
#include "irpo/evalmetrics.hpp"
#include "irpo/gradient.hpp"
#include "irpo/instances.hpp"
#include "irpo/log.hpp"
#include "irpo/numeric.hpp"
#include "irpo/objective.hpp"
#include "json.hpp"

namespace irpo {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

RunConfig load_config(const Options& opt) {
  KeyValueConfig kv;
  fs::path base;
  if (!opt.config_path.empty()) {
    kv = KeyValueConfig::load(opt.config_path);
    base = fs::path(opt.config_path).parent_path();
  }
  if (opt.seed_given) kv.set("seed", std::to_string(opt.seed));
  RunConfig rc = RunConfig::from(kv, base);
  if (!opt.out_dir.empty()) rc.out_dir = opt.out_dir;
  for (const auto& k : kv.unused_keys()) log(LogLevel::kWarn, "unused config key '" + k + "'");
  return rc;
}

fs::path ensure_out_dir(const RunConfig& rc) {
  std::error_code ec;
  fs::create_directories(rc.out_dir, ec);
  if (ec || !fs::is_directory(rc.out_dir)) throw Error("cannot create output directory '" + rc.out_dir.string() + "'");
  return rc.out_dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Datasets {
  std::vector<RankedExample> train;
  std::vector<RankedExample> eval;
};

// Dataset files when configured, otherwise the synthetic task for rc.seed.
Datasets load_datasets(const RunConfig& rc) {
  Datasets d;
  if (!rc.train_path.empty()) {
    d.train = ingest_jsonl(rc.train_path);
  }
  if (!rc.eval_path.empty()) {
    d.eval = ingest_jsonl(rc.eval_path);
  }
  if (rc.train_path.empty()) {
    auto synth = synthesize(rc.synth, rc.seed);
    d.train = std::move(synth.train);
    if (rc.eval_path.empty()) d.eval = std::move(synth.eval);
  }
  if (d.eval.empty()) {
    log(LogLevel::kInfo, "no evaluation set; scoring on the training set");
    d.eval = d.train;
  }
  return d;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

int cmd_generate(const RunConfig& rc, std::ostream& out) {
  const auto dir = ensure_out_dir(rc);
  const auto ds = synthesize(rc.synth, rc.seed);
  write_jsonl(dir / "train.jsonl", ds.train);
  if (!ds.eval.empty()) write_jsonl(dir / "eval.jsonl", ds.eval);
  out << "examples: " << ds.train.size() << '\n';
  out << "eval_examples: " << ds.eval.size() << '\n';
  out << "candidates: " << rc.synth.num_candidates << '\n';
  out << "grade_histogram: " << grade_histogram(rc.synth) << '\n';
  out << "wrote " << (dir / "train.jsonl").string() << '\n';
  return kExitOk;
}

int cmd_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  const auto dir = ensure_out_dir(rc);
  const auto data = load_datasets(rc);
  const auto result = train(rc.train, data.train, data.eval);
  write_text(dir / "trace.csv", result.trace.to_csv());
  write_text(dir / "policy.json", result.policy.to_json() + "\n");
  if (result.diverged) {
    err << "training diverged: " << result.message << " (last finite policy written to policy.json)\n";
    return kExitDiverged;
  }
  const auto& last = result.trace.records.back();
  out << "method: " << method_name(rc.train.method) << '\n';
  out << "steps: " << result.steps << '\n';
  out << "final_loss: " << fmt(last.loss) << '\n';
  for (std::size_t i = 0; i < result.trace.ks.size(); ++i) {
    out << "ndcg@" << result.trace.ks[i] << ": " << fmt(last.ndcg[i]) << '\n';
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& rc, std::ostream& out) {
  if (rc.policy_path.empty()) throw ConfigError("eval needs policy_path");
  const auto dir = ensure_out_dir(rc);
  const auto policy = Policy::from_json(read_text(rc.policy_path));
  const auto data = load_datasets(rc);
  const auto m = evaluate(policy, data.eval, rc.train.eval_ks);
  std::ostringstream csv;
  csv << "k,ndcg,recall\n";
  nlohmann::json j;
  j["examples"] = m.num_examples;
  j["degenerate"] = m.degenerate;
  for (std::size_t k : m.ks) {
    csv << k << ',' << fmt(m.mean_ndcg.at(k)) << ',' << fmt(m.mean_recall.at(k)) << '\n';
    j["ndcg@" + std::to_string(k)] = m.mean_ndcg.at(k);
    j["recall@" + std::to_string(k)] = m.mean_recall.at(k);
  }
  write_text(dir / "metrics.csv", csv.str());
  out << j.dump(2) << '\n';
  return kExitOk;
}

int cmd_compare(const RunConfig& rc, std::ostream& out) {
  if (rc.methods.empty()) throw ConfigError("compare needs a non-empty 'methods' list");
  const auto dir = ensure_out_dir(rc);
  const auto data = load_datasets(rc);
  std::ostringstream csv;
  csv << "method";
  for (std::size_t k : rc.train.eval_ks) csv << ",ndcg@" << k;
  for (std::size_t k : rc.train.eval_ks) csv << ",recall@" << k;
  csv << ",policy_eval_count,evals_per_example_step,wall_time_s,status\n";
  for (Method m : rc.methods) {
    TrainConfig tc = rc.train;
    tc.method = m;
    const auto start = std::chrono::steady_clock::now();
    const auto result = train(tc, data.train, data.eval);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto metrics = evaluate(result.policy, data.eval, tc.eval_ks);
    csv << method_name(m);
    for (std::size_t k : tc.eval_ks) csv << ',' << fmt(metrics.mean_ndcg.at(k));
    for (std::size_t k : tc.eval_ks) csv << ',' << fmt(metrics.mean_recall.at(k));
    csv << ',' << result.policy_eval_count << ',' << fmt(result.evals_per_example());
    csv << ',' << (rc.record_wall_time ? fmt(secs) : std::string("0"));
    csv << ',' << (result.diverged ? "diverged" : "ok") << '\n';
    log(LogLevel::kInfo, method_name(m) + " finished in " + fmt(secs) + " s");
  }
  write_text(dir / "compare.csv", csv.str());
  out << csv.str();
  return kExitOk;
}

int cmd_gradcheck(const RunConfig& rc, std::ostream& out) {
  const auto& c = rc.check;
  const auto inst = random_tabular_instance(rc.seed, c.examples, c.candidates);
  const double beta = rc.train.beta;
  const auto& gain = rc.train.gain;
  using Loss = std::function<double(const Policy&)>;
  using Grad = std::function<GradientVector(const Policy&)>;
  const std::vector<std::tuple<std::string, Loss, Grad>> objectives = {
      {"irpo", [&](const Policy& p) { return irpo_loss(p, inst.ref, inst.examples, gain, beta).loss; },
       [&](const Policy& p) { return irpo_grad(p, inst.ref, inst.examples, gain, beta); }},
      {"dpo", [&](const Policy& p) { return dpo_loss(p, inst.ref, inst.examples, beta).loss; },
       [&](const Policy& p) { return dpo_grad(p, inst.ref, inst.examples, beta); }},
      {"sdpo", [&](const Policy& p) { return sdpo_loss(p, inst.ref, inst.examples, beta).loss; },
       [&](const Policy& p) { return sdpo_grad(p, inst.ref, inst.examples, beta); }},
      {"sft", [&](const Policy& p) { return sft_loss(p, inst.examples).loss; },
       [&](const Policy& p) { return sft_grad(p, inst.examples); }},
  };
  nlohmann::json report;
  double worst = 0.0;
  for (const auto& [name, loss, grad] : objectives) {
    auto analytic = grad(inst.theta).values;
    for (auto& v : analytic) v *= c.inject_gradient_sign;
    const auto numeric = finite_difference(loss, inst.theta, c.fd_step);
    const auto r = compare_gradients(analytic, numeric);
    report["objectives"][name] = {{"max_rel_err", r.max_rel_err}, {"checked", r.checked}};
    worst = std::max(worst, r.max_rel_err);
  }
  const bool pass = worst < c.tolerance;
  report["max_rel_err"] = worst;
  report["tolerance"] = c.tolerance;
  report["fd_step"] = c.fd_step;
  report["pass"] = pass;
  out << report.dump(2) << '\n';
  return pass ? kExitOk : kExitCheckFailed;
}

int cmd_estimator_check(const RunConfig& rc, std::ostream& out) {
  const auto& c = rc.check;
  const auto inst = random_tabular_instance(rc.seed, 1, c.candidates);
  const auto& ex = inst.examples.front();
  const std::size_t rank = c.rank - 1;
  const auto report = sampled_grad(inst.theta, inst.ref, ex, rank, rc.train.beta, c.samples,
                                   mix_seed(rc.seed, 11), rc.train.clip_L);
  auto j = nlohmann::json::parse(report.to_json());
  bool pass = report.max_abs_dev <= report.bound;
  if (c.repetitions > 0) {
    const std::size_t m = c.deviation_samples > 0 ? c.deviation_samples : ex.size() * ex.size();
    const auto study = deviation_study(inst.theta, inst.ref, ex, rank, rc.train.beta, m, c.repetitions,
                                       mix_seed(rc.seed, 12), rc.train.clip_L);
    j["deviation"] = {{"repetitions", study.repetitions},
                      {"samples", study.samples},
                      {"mean_l2_dev", study.mean_l2_dev},
                      {"bound_with_slack", study.bound * (1.0 + c.slack)}};
    pass = pass && study.mean_l2_dev <= study.bound * (1.0 + c.slack);
  }
  j["pass"] = pass;
  out << j.dump(2) << '\n';
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Listwise preference optimization toolkit", "irpo"};
  app.require_subcommand(1);
  Options opt;
  std::map<std::string, CLI::App*> subs;
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "write a synthetic JSONL dataset"},
      {"train", "train one method and write trace.csv and policy.json"},
      {"eval", "score a policy snapshot on a dataset"},
      {"compare", "train every configured method on the same data"},
      {"gradcheck", "compare analytic gradients with central finite differences"},
      {"estimator-check", "check the sampled importance-weight gradient estimator"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", opt.config_path, "key = value configuration file");
    sub->add_option("--out", opt.out_dir, "output directory (overrides out_dir)");
    sub->add_option("--seed", opt.seed, "random seed (overrides seed)");
    subs[name] = sub;
  }

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << '\n';
    return kExitConfigError;
  }

  std::string chosen;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) {
      chosen = name;
      opt.seed_given = sub->count("--seed") > 0;
    }
  }

  try {
    const RunConfig rc = load_config(opt);
    if (chosen == "generate") return cmd_generate(rc, out);
    if (chosen == "train") return cmd_train(rc, out, err);
    if (chosen == "eval") return cmd_eval(rc, out);
    if (chosen == "compare") return cmd_compare(rc, out);
    if (chosen == "gradcheck") return cmd_gradcheck(rc, out);
    if (chosen == "estimator-check") return cmd_estimator_check(rc, out);
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
  return kExitConfigError;
}

}  // namespace irpo
