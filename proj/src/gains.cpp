#include "irpo/gains.hpp"

#include <algorithm>
#include <cmath>

namespace irpo {

namespace {

double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

std::size_t relevant_count(const std::vector<int>& ranked) {
  return static_cast<std::size_t>(std::count_if(ranked.begin(), ranked.end(), [](int y) { return y >= 1; }));
}

}  // namespace

GainScheme GainScheme::precision_at_k(std::size_t k) {
  GainScheme s{GainKind::kPrecisionAtK};
  s.k = k;
  s.check();
  return s;
}

GainScheme GainScheme::mrr(bool all_relevant) {
  GainScheme s{GainKind::kMrr};
  s.mrr_all_relevant = all_relevant;
  return s;
}

GainScheme GainScheme::edcg(double lambda) {
  GainScheme s{GainKind::kEdcg};
  s.lambda = lambda;
  s.check();
  return s;
}

void GainScheme::check() const {
  if (kind == GainKind::kPrecisionAtK && k < 1) throw ConfigError("precision_at_k needs k >= 1");
  if (kind == GainKind::kEdcg && !(lambda > 0.0)) throw ConfigError("edcg needs lambda > 0");
}

GainScheme GainScheme::parse(const std::string& name, std::size_t k, double lambda, bool mrr_all_relevant) {
  GainScheme s;
  if (name == "ndcg") {
    s.kind = GainKind::kNdcg;
  } else if (name == "precision_at_k" || name == "p@k") {
    s.kind = GainKind::kPrecisionAtK;
  } else if (name == "map") {
    s.kind = GainKind::kMap;
  } else if (name == "mrr") {
    s.kind = GainKind::kMrr;
  } else if (name == "edcg") {
    s.kind = GainKind::kEdcg;
  } else if (name == "abl1" || name == "abl_position_only") {
    s.kind = GainKind::kAblPositionOnly;
  } else if (name == "abl2" || name == "abl_linear_discount") {
    s.kind = GainKind::kAblLinearDiscount;
  } else {
    throw ConfigError("unknown gain scheme '" + name + "'");
  }
  s.k = k;
  s.lambda = lambda;
  s.mrr_all_relevant = mrr_all_relevant;
  s.check();
  return s;
}

std::string GainScheme::name() const {
  switch (kind) {
    case GainKind::kNdcg: return "ndcg";
    case GainKind::kPrecisionAtK: return "precision_at_k";
    case GainKind::kMap: return "map";
    case GainKind::kMrr: return "mrr";
    case GainKind::kEdcg: return "edcg";
    case GainKind::kAblPositionOnly: return "abl_position_only";
    case GainKind::kAblLinearDiscount: return "abl_linear_discount";
  }
  return "?";
}

double weight(const GainScheme& scheme, const std::vector<int>& ranked, std::size_t rank) {
  if (rank < 1 || rank > ranked.size()) throw ValidationError("rank out of range");
  const int y = ranked[rank - 1];
  const double i = static_cast<double>(rank);
  switch (scheme.kind) {
    case GainKind::kNdcg:
      return gain(y) / std::log2(1.0 + i);
    case GainKind::kPrecisionAtK:
      return (rank <= scheme.k && y >= 1) ? 1.0 : 0.0;
    case GainKind::kMap: {
      const std::size_t rel = relevant_count(ranked);
      return rel == 0 ? 0.0 : gain(y) / static_cast<double>(rel);
    }
    case GainKind::kMrr: {
      if (y < 1) return 0.0;
      if (!scheme.mrr_all_relevant) {
        const auto first = std::find_if(ranked.begin(), ranked.end(), [](int v) { return v >= 1; });
        if (static_cast<std::size_t>(first - ranked.begin()) != rank - 1) return 0.0;
      }
      return 1.0 / std::max(i, 1.0);
    }
    case GainKind::kEdcg:
      return gain(y) / std::exp(scheme.lambda * i);
    case GainKind::kAblPositionOnly:
      return 1.0 / std::log(1.0 + i);
    case GainKind::kAblLinearDiscount:
      return gain(y) / i;
  }
  return 0.0;
}

double weight(const GainScheme& scheme, const RankedExample& example, std::size_t rank) {
  return weight(scheme, example.ranked_relevance(), rank);
}

RankWeights rank_weights(const GainScheme& scheme, const RankedExample& example) {
  const auto ranked = example.ranked_relevance();
  RankWeights out;
  out.w.resize(ranked.size());
  for (std::size_t r = 0; r < ranked.size(); ++r) out.w[r] = weight(scheme, ranked, r + 1);
  out.degenerate = scheme.kind == GainKind::kMap && relevant_count(ranked) == 0;
  return out;
}

}  // namespace irpo
