// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "irpo/cli.hpp"
#include "irpo/gradient.hpp"
#include "irpo/instances.hpp"
#include "irpo/objective.hpp"
#include "irpo/trainer.hpp"

namespace fs = std::filesystem;
using namespace irpo;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / "irpo_acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// compare.csv -> method -> column -> value
std::map<std::string, std::map<std::string, double>> read_compare(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  std::map<std::string, std::map<std::string, double>> rows;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell, method;
    std::getline(ss, method, ',');
    for (std::size_t c = 1; std::getline(ss, cell, ','); ++c) {
      if (header[c] == "status") {
        rows[method][header[c]] = cell == "ok" ? 1.0 : 0.0;
      } else {
        rows[method][header[c]] = std::stod(cell);
      }
    }
  }
  return rows;
}

// Averages compare.csv metrics over seeds.
std::map<std::string, std::map<std::string, double>> compare_over_seeds(const std::string& config, int seeds,
                                                                        const std::string& tag) {
  std::map<std::string, std::map<std::string, double>> mean;
  for (int s = 0; s < seeds; ++s) {
    const auto dir = scratch(tag + "_" + std::to_string(s));
    std::ostringstream out, err;
    const int code = run_cli({"compare", "--config", config, "--out", dir.string(), "--seed", std::to_string(s)}, out, err);
    if (code != 0) throw std::runtime_error("compare exited " + std::to_string(code) + ": " + err.str());
    for (const auto& [method, cols] : read_compare(dir / "compare.csv")) {
      for (const auto& [col, v] : cols) mean[method][col] += v / seeds;
    }
  }
  return mean;
}

double naive_irpo_loss(const Policy& theta, const Policy& ref, const std::vector<RankedExample>& batch,
                       const GainScheme& scheme, double beta) {
  double total = 0.0;
  for (const auto& ex : batch) {
    const std::size_t n = ex.size();
    const auto st = theta.scores(ex);
    const auto sr = ref.scores(ex);
    double zt = 0.0, zr = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      zt += std::exp(st[j]);
      zr += std::exp(sr[j]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = ex.target_perm[i];
      const double ratio_t = (std::exp(st[t]) / zt) / (std::exp(sr[t]) / zr);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double ratio_j = (std::exp(st[j]) / zt) / (std::exp(sr[j]) / zr);
        s += std::pow(ratio_j / ratio_t, beta);
      }
      const double z = -std::log(s);
      total += weight(scheme, ex, i + 1) * std::log(1.0 + std::exp(-z));
    }
  }
  return total / static_cast<double>(batch.size());
}

const std::string kSource = IRPO_SOURCE_DIR;

}  // namespace

int main() {
  criterion(1, "irpo_grad matches central finite differences", [] {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const std::size_t n = 2 + seed % 7;
      const auto inst = random_tabular_instance(seed, 3, n);
      const auto scheme = GainScheme::ndcg();
      const auto g = irpo_grad(inst.theta, inst.ref, inst.examples, scheme, 1.0);
      const auto fd = finite_difference(
          [&](const Policy& p) { return irpo_loss(p, inst.ref, inst.examples, scheme, 1.0).loss; }, inst.theta, 1e-5);
      worst = std::max(worst, compare_gradients(g.values, fd, 1e-8).max_rel_err);
    }
    return Outcome{worst < 1e-6, "10 instances, n=2..8, max per-coordinate rel err " + num(worst) + " < 1e-6"};
  });

  criterion(2, "importance weights are normalised", [] {
    double worst = 0.0;
    std::size_t rows = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      const auto inst = random_tabular_instance(seed, 1, 1 + seed % 8, 3.0);
      const auto& ex = inst.examples[0];
      for (std::size_t i = 0; i < ex.size(); ++i) {
        double s = 0.0;
        for (double v : importance_weights(inst.theta, inst.ref, ex, i, 1.0)) s += v;
        worst = std::max(worst, std::abs(s - 1.0));
        ++rows;
      }
    }
    return Outcome{worst <= 1e-9, std::to_string(rows) + " rows over 1000 instances, max |sum - 1| " + num(worst)};
  });

  criterion(3, "sampled estimator is unbiased at m = 1e5", [] {
    const auto inst = random_tabular_instance(0, 1, 6);
    const auto r = sampled_grad(inst.theta, inst.ref, inst.examples[0], 0, 1.0, 100000, 1);
    double scale = 0.0, strict = 0.0;
    for (std::size_t k = 0; k < r.g_exact.size(); ++k) {
      scale = std::max(scale, std::abs(r.g_exact[k]));
      if (std::abs(r.g_exact[k]) > 1e-8) {
        strict = std::max(strict, std::abs(r.g_sampled_mean[k] - r.g_exact[k]) / std::abs(r.g_exact[k]));
      }
    }
    const double rel = r.max_abs_dev / scale;
    return Outcome{rel < 0.01, "n=6, worst coordinate error / max|g_exact| = " + num(rel) +
                                   " < 0.01 (unnormalised per-coordinate: " + num(strict) + ")"};
  });

  criterion(4, "mean deviation within clip_L * sqrt(rho_max / n) * 1.1", [] {
    const auto inst = random_tabular_instance(0, 1, 6);
    const std::size_t n = inst.examples[0].size();
    const double clip_L = 10.0;
    const auto s = deviation_study(inst.theta, inst.ref, inst.examples[0], 0, 1.0, n * n, 200, 2, clip_L);
    const bool pass = clip_L >= s.true_max_norm && s.mean_l2_dev <= s.bound * 1.1;
    return Outcome{pass, "200 runs, m=n^2=" + std::to_string(n * n) + ", clip_L=10 >= " + num(s.true_max_norm) +
                             ", E|g_hat - g| = " + num(s.mean_l2_dev) + " <= " + num(s.bound * 1.1)};
  });

  criterion(5, "irpo_loss equals a naive double loop", [] {
    double worst = 0.0;
    static const GainScheme schemes[] = {GainScheme::ndcg(), GainScheme::map(), GainScheme::edcg(),
                                         GainScheme::precision_at_k(2)};
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      const auto inst = random_tabular_instance(1000 + seed, 2, 1 + seed % 6);
      const auto& scheme = schemes[seed % 4];
      const double fast = irpo_loss(inst.theta, inst.ref, inst.examples, scheme, 1.0).loss;
      worst = std::max(worst, std::abs(fast - naive_irpo_loss(inst.theta, inst.ref, inst.examples, scheme, 1.0)));
    }
    return Outcome{worst <= 1e-9, "100 instances, n<=6, max |diff| " + num(worst)};
  });

  criterion(6, "uniform policy gives n log(1 + n)", [] {
    double worst = 0.0;
    for (std::size_t n = 1; n <= 20; ++n) {
      RankedExample ex;
      ex.prompt_id = "u";
      for (std::size_t j = 0; j < n; ++j) ex.candidates.push_back({"c" + std::to_string(j), {}});
      ex.relevance.assign(n, 1);
      ex.target_perm = derive_target_perm(ex.relevance);
      const std::vector<RankedExample> batch{ex};
      const auto p = Policy::tabular(batch);
      const double loss = irpo_loss(p, p, batch, GainScheme::precision_at_k(n), 1.0).loss;
      worst = std::max(worst, std::abs(loss - static_cast<double>(n) * std::log(1.0 + static_cast<double>(n))));
    }
    return Outcome{worst <= 1e-9, "n=1..20 with unit weights, max |diff| " + num(worst)};
  });

  criterion(7, "IRPO beats DPO and SFT on NDCG@5 (5 seeds)", [] {
    const auto m = compare_over_seeds(kSource + "/configs/standard.cfg", 5, "c7");
    const double irpo = m.at("irpo").at("ndcg@5");
    const double dpo = m.at("dpo").at("ndcg@5");
    const double sft = m.at("sft").at("ndcg@5");
    const double sdpo = m.at("sdpo").at("ndcg@5");
    const bool pass = irpo >= dpo + 0.03 && irpo >= sft + 0.03;
    return Outcome{pass, "NDCG@5 irpo " + num(irpo) + ", dpo " + num(dpo) + ", sft " + num(sft) + " (sdpo " +
                             num(sdpo) + "); need margin >= 0.03"};
  });

  criterion(8, "Iterative IRPO beats REINFORCE on NDCG@1 (5 seeds)", [] {
    const auto m = compare_over_seeds(kSource + "/configs/online.cfg", 5, "c8");
    const double it = m.at("iterative_irpo").at("ndcg@1");
    const double rf = m.at("reinforce").at("ndcg@1");
    return Outcome{it >= rf + 0.02, "NDCG@1 iterative_irpo " + num(it) + ", reinforce " + num(rf) +
                                         ", margin " + num(it - rf) + " >= 0.02"};
  });

  criterion(9, "policy evaluations per list: n for IRPO, 2 x pairs for DPO", [] {
    SynthConfig cfg;
    cfg.num_prompts = 200;
    const auto data = synthesize(cfg, 0);
    TrainConfig tc;
    tc.epochs = 1;
    tc.batch_size = 200;
    tc.eval_ks = {1};
    tc.method = Method::kIrpo;
    const auto irpo = train(tc, data.train, data.train);
    tc.method = Method::kDpo;
    const auto dpo = train(tc, data.train, data.train);
    const bool pass = irpo.policy_eval_count == 200 * 20 && dpo.policy_eval_count == 200 * 28 &&
                      irpo.evals_per_example() == 20.0 && dpo.evals_per_example() == 28.0;
    return Outcome{pass, "n=20, 14 negatives: irpo " + num(irpo.evals_per_example()) + " (" +
                             std::to_string(irpo.policy_eval_count) + " total), dpo " + num(dpo.evals_per_example()) +
                             " (" + std::to_string(dpo.policy_eval_count) + " total)"};
  });

  criterion(10, "weight tables for all 7 gain schemes", [] {
    const std::vector<int> y{2, 2, 1, 1, 0, 0};
    struct Row {
      GainScheme scheme;
      std::vector<double> expect;
    };
    const std::vector<Row> table = {
        {GainScheme::ndcg(), {3.0, 1.8927892607143724, 0.5, 0.43067655807339306, 0.0, 0.0}},
        {GainScheme::precision_at_k(3), {1.0, 1.0, 1.0, 0.0, 0.0, 0.0}},
        {GainScheme::map(), {0.75, 0.75, 0.25, 0.25, 0.0, 0.0}},
        {GainScheme::mrr(), {1.0, 0.0, 0.0, 0.0, 0.0, 0.0}},
        {GainScheme::edcg(0.5),
         {1.8195919791379003, 1.103638323514327, 0.22313016014842985, 0.1353352832366127, 0.0, 0.0}},
        {GainScheme::abl_position_only(),
         {1.4426950408889634, 0.9102392266268373, 0.7213475204444817, 0.6213349345596119, 0.5581106265512472,
          0.5138983423697507}},
        {GainScheme::abl_linear_discount(), {3.0, 1.5, 0.3333333333333333, 0.25, 0.0, 0.0}},
    };
    std::size_t checked = 0, wrong = 0;
    double worst = 0.0;
    for (const auto& row : table) {
      for (std::size_t i = 0; i < row.expect.size(); ++i) {
        const double got = weight(row.scheme, y, i + 1);
        const double err = std::abs(got - row.expect[i]);
        worst = std::max(worst, err);
        if (err > 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(row.expect[i]))) ++wrong;
        ++checked;
      }
    }
    return Outcome{wrong == 0, std::to_string(checked) + " values over 7 schemes, " + std::to_string(wrong) +
                                   " mismatches, max |diff| " + num(worst)};
  });

  criterion(11, "Plackett-Luce frequencies for uniform n = 3", [] {
    std::mt19937_64 rng(2024);
    const std::vector<double> scores(3, 0.0);
    std::map<std::vector<std::size_t>, int> counts;
    const int draws = 100000;
    for (int d = 0; d < draws; ++d) ++counts[sample_ranking_pl(scores, rng)];
    double worst = 0.0;
    for (const auto& [perm, c] : counts) worst = std::max(worst, std::abs(c / double(draws) - 1.0 / 6.0));
    return Outcome{counts.size() == 6 && worst <= 0.01, std::to_string(counts.size()) +
                                                            " permutations seen, max |freq - 1/6| " + num(worst)};
  });

  criterion(12, "train is byte-reproducible", [] {
    const auto a = scratch("c12a");
    const auto b = scratch("c12b");
    const std::string cfg = kSource + "/configs/standard.cfg";
    std::ostringstream out, err;
    const int ca = run_cli({"train", "--config", cfg, "--out", a.string(), "--seed", "7"}, out, err);
    const int cb = run_cli({"train", "--config", cfg, "--out", b.string(), "--seed", "7"}, out, err);
    const auto ta = slurp(a / "trace.csv");
    const auto tb = slurp(b / "trace.csv");
    const bool pass = ca == 0 && cb == 0 && !ta.empty() && ta == tb;
    return Outcome{pass, "two runs, seed 7: " + std::to_string(ta.size()) + " bytes, " +
                             (ta == tb ? "identical" : "different")};
  });

  fs::remove_all(fs::temp_directory_path() / "irpo_acceptance");
  std::printf("%s: %d of 12 criteria failed\n", failures == 0 ? "ALL PASS" : "FAILURES", failures);
  return failures == 0 ? 0 : 1;
}
