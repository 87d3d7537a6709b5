#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "irpo/instances.hpp"
#include "irpo/numeric.hpp"
#include "irpo/objective.hpp"

namespace irpo {
namespace {

RankedExample make_example(const std::vector<int>& relevance, const std::string& prompt = "x") {
  RankedExample ex;
  ex.prompt_id = prompt;
  for (std::size_t j = 0; j < relevance.size(); ++j) ex.candidates.push_back({"e" + std::to_string(j), {}});
  ex.relevance = relevance;
  ex.target_perm = derive_target_perm(relevance);
  return ex;
}

// Tabular theta with the given logits against an all-zero reference, so that
// Delta_j equals logits_j up to a shared constant.
struct Pair {
  Policy theta;
  Policy ref;
};
Pair with_logits(const RankedExample& ex, const std::vector<double>& logits) {
  Pair p{Policy::tabular(std::vector<RankedExample>{ex}), Policy::tabular(std::vector<RankedExample>{ex})};
  for (std::size_t j = 0; j < logits.size(); ++j) {
    p.theta.mutable_params()[p.theta.tabular_index(ex.prompt_id, ex.candidates[j].item_id)] = logits[j];
  }
  return p;
}

// Direct transcription: explicit exp/log, no stabilisation.
double naive_irpo_loss(const Policy& theta, const Policy& ref, const std::vector<RankedExample>& batch,
                       const GainScheme& scheme, double beta) {
  double total = 0.0;
  for (const auto& ex : batch) {
    const std::size_t n = ex.size();
    std::vector<double> pt(n), pr(n);
    double zt = 0.0, zr = 0.0;
    const auto st = theta.scores(ex);
    const auto sr = ref.scores(ex);
    for (std::size_t j = 0; j < n; ++j) {
      zt += std::exp(st[j]);
      zr += std::exp(sr[j]);
    }
    for (std::size_t j = 0; j < n; ++j) {
      pt[j] = std::exp(st[j]) / zt;
      pr[j] = std::exp(sr[j]) / zr;
    }
    double ex_loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = ex.target_perm[i];
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        s += std::exp(beta * (std::log(pt[j] / pr[j]) - std::log(pt[t] / pr[t])));
      }
      const double z = -std::log(s);
      ex_loss += weight(scheme, ex, i + 1) * -std::log(1.0 / (1.0 + std::exp(-z)));
    }
    total += ex_loss;
  }
  return total / static_cast<double>(batch.size());
}

TEST(MarginZ, UniformCaseIsMinusLogN) {
  const auto ex = make_example({2, 1, 0, 0});
  const auto p = with_logits(ex, {0, 0, 0, 0});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(margin_z(p.theta, p.ref, ex, i, 1.0), -1.3862943611198906, 1e-12);
}

TEST(MarginZ, SingleCandidateIsZero) {
  const auto ex = make_example({1});
  const auto p = with_logits(ex, {3.0});
  EXPECT_DOUBLE_EQ(margin_z(p.theta, p.ref, ex, 0, 1.0), 0.0);
}

TEST(MarginZ, TwoCandidates) {
  const auto ex = make_example({1, 0});
  const auto p = with_logits(ex, {1.0, 0.0});
  EXPECT_NEAR(margin_z(p.theta, p.ref, ex, 0, 1.0), -0.31326168751822286, 1e-12);
}

TEST(IrpoLoss, UniformUnitWeightsClosedForm) {
  const auto ex = make_example({1, 1, 1, 1});
  const auto p = with_logits(ex, {0, 0, 0, 0});
  const auto r = irpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, GainScheme::precision_at_k(4), 1.0);
  EXPECT_NEAR(r.loss, 6.437751649736401, 1e-9);
  EXPECT_EQ(r.policy_eval_count, 4u);
}

TEST(IrpoLoss, ZeroWeightsGiveZeroLoss) {
  const auto ex = make_example({0, 0, 0});
  const auto p = with_logits(ex, {0.3, -1.0, 2.0});
  EXPECT_EQ(irpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, GainScheme::ndcg(), 1.0).loss, 0.0);
}

TEST(IrpoLoss, MatchesNaiveDoubleLoop) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_tabular_instance(seed, 3, 2 + seed % 5);
    for (const auto& scheme : {GainScheme::ndcg(), GainScheme::edcg(), GainScheme::map()}) {
      const double beta = 0.5 + 0.1 * static_cast<double>(seed % 7);
      EXPECT_NEAR(irpo_loss(inst.theta, inst.ref, inst.examples, scheme, beta).loss,
                  naive_irpo_loss(inst.theta, inst.ref, inst.examples, scheme, beta), 1e-9);
    }
  }
}

TEST(IrpoLoss, DiagnosticsInvariants) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto inst = random_tabular_instance(seed, 2, 1 + seed % 8, 3.0);
    const auto r = irpo_loss(inst.theta, inst.ref, inst.examples, GainScheme::ndcg(), 1.0);
    for (const auto& d : r.per_example) {
      for (std::size_t i = 0; i < d.z.size(); ++i) {
        EXPECT_LE(d.z[i], 0.0);
        EXPECT_LE(d.sigma_z[i], 0.5);
        double row = 0.0;
        for (double v : d.rho[i]) {
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
          row += v;
        }
        EXPECT_NEAR(row, 1.0, 1e-9);
      }
    }
  }
}

TEST(IrpoLoss, InvariantToSharedShiftOfLogRatios) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 2 + trial % 7;
    std::vector<double> delta(n);
    for (auto& v : delta) v = normal(rng);
    std::vector<double> shifted(delta);
    for (auto& v : shifted) v += 5.0;
    double a = 0.0, b = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double w = 1.0 / std::log2(2.0 + static_cast<double>(t));
      a -= w * log_sigmoid(margin_z(delta, t, 1.0));
      b -= w * log_sigmoid(margin_z(shifted, t, 1.0));
    }
    EXPECT_LT(std::abs(a - b), 1e-9);
  }
}

TEST(IrpoLoss, RaisingTargetLogRatioLowersRankTerm) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + trial % 7;
    std::vector<double> delta(n);
    for (auto& v : delta) v = normal(rng);
    const std::size_t t = static_cast<std::size_t>(trial) % n;
    const double before = -log_sigmoid(margin_z(delta, t, 1.0));
    delta[t] += 1e-3;
    const double after = -log_sigmoid(margin_z(delta, t, 1.0));
    EXPECT_LT(after, before);
  }
}

TEST(IrpoLoss, RejectsBadInput) {
  const auto ex = make_example({1, 0});
  const auto p = with_logits(ex, {0, 0});
  EXPECT_THROW(irpo_loss(p.theta, p.ref, std::vector<RankedExample>{}, GainScheme::ndcg(), 1.0), ValidationError);
  EXPECT_THROW(irpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, GainScheme::ndcg(), 0.0), ValidationError);
}

TEST(IrpoLoss, NonFiniteReportsPrompt) {
  const auto ex = make_example({1, 0}, "blowup");
  auto p = with_logits(ex, {0, 0});
  p.theta.mutable_params()[0] = std::numeric_limits<double>::infinity();
  try {
    irpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, GainScheme::ndcg(), 1.0);
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("blowup"), std::string::npos);
  }
}

TEST(DpoLoss, PairValues) {
  EXPECT_NEAR(dpo_pair_loss(0.4, 0.4, 1.0), 0.6931471805599453, 1e-15);
  EXPECT_LT(dpo_pair_loss(50.0, -50.0, 1.0), 1e-40);
  EXPECT_NEAR(dpo_pair_loss(1.0, 0.0, 1.0), 0.31326168751822286, 1e-12);
}

TEST(DpoLoss, ThroughPoliciesAndCounter) {
  // Top item plus three zero-relevance negatives.
  const auto ex = make_example({1, 0, 0, 0});
  const auto p = with_logits(ex, {1.0, 0.0, 0.0, 0.0});
  const auto r = dpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, 1.0);
  EXPECT_NEAR(r.loss, 0.31326168751822286, 1e-12);
  EXPECT_EQ(r.policy_eval_count, 6u);
  EXPECT_EQ(make_pairs(std::vector<RankedExample>{ex}).size(), 3u);
}

TEST(DpoLoss, SkipsListsWithoutPairs) {
  const auto no_neg = make_example({2, 1});
  const auto no_pos = make_example({0, 0}, "y");
  const std::vector<RankedExample> batch{no_neg, no_pos};
  auto theta = Policy::tabular(batch);
  const auto r = dpo_loss(theta, theta, batch, 1.0);
  EXPECT_EQ(r.skipped, 2u);
  EXPECT_EQ(r.loss, 0.0);
}

TEST(SdpoLoss, ClosedForms) {
  const auto one = make_example({1, 0});
  const auto p1 = with_logits(one, {0.0, 0.0});
  EXPECT_NEAR(sdpo_loss(p1.theta, p1.ref, std::vector<RankedExample>{one}, 1.0).loss, 0.6931471805599453, 1e-12);

  const auto three = make_example({1, 0, 0, 0});
  const auto p3 = with_logits(three, {0.0, 0.0, 0.0, 0.0});
  // -log sigma(-log 3) = log 4.
  EXPECT_NEAR(sdpo_loss(p3.theta, p3.ref, std::vector<RankedExample>{three}, 1.0).loss, 1.3862943611198906, 1e-12);

  const auto p_gap = with_logits(one, {1.0, 0.0});
  const std::vector<RankedExample> b{one};
  EXPECT_NEAR(sdpo_loss(p_gap.theta, p_gap.ref, b, 1.0).loss, dpo_loss(p_gap.theta, p_gap.ref, b, 1.0).loss, 1e-12);
  EXPECT_NEAR(sdpo_loss(p_gap.theta, p_gap.ref, b, 1.0).loss, 0.31326168751822286, 1e-12);
}

TEST(SdpoLoss, ExcludesPositiveFromSum) {
  // Only grade-1 items besides the top: no negatives, so the list is skipped.
  const auto ex = make_example({2, 1, 1});
  const auto p = with_logits(ex, {0, 0, 0});
  const auto r = sdpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, 1.0);
  EXPECT_EQ(r.skipped, 1u);
}

TEST(SftLoss, Values) {
  const auto ex = make_example({1, 0, 0, 0});
  const auto uniform = with_logits(ex, {0, 0, 0, 0});
  EXPECT_NEAR(sft_loss(uniform.theta, std::vector<RankedExample>{ex}).loss, 1.3862943611198906, 1e-12);
  const auto peaked = with_logits(ex, {20, 0, 0, 0});
  EXPECT_LT(sft_loss(peaked.theta, std::vector<RankedExample>{ex}).loss, 1e-6);
  const auto ex3 = make_example({1, 0, 0});
  const auto p = with_logits(ex3, {2, 0, 0});
  EXPECT_NEAR(sft_loss(p.theta, std::vector<RankedExample>{ex3}).loss, 0.2395447662218845, 1e-12);
}

TEST(LossReport, SerialisesDiagnostics) {
  const auto ex = make_example({1, 0});
  const auto p = with_logits(ex, {0.5, 0});
  const auto json = irpo_loss(p.theta, p.ref, std::vector<RankedExample>{ex}, GainScheme::ndcg(), 1.0).to_json();
  EXPECT_NE(json.find("\"rho\""), std::string::npos);
  EXPECT_NE(json.find("\"policy_eval_count\":2"), std::string::npos);
}

}  // namespace
}  // namespace irpo
