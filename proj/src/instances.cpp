#include "irpo/instances.hpp"

#include <random>

#include "irpo/numeric.hpp"

namespace irpo {

TabularInstance random_tabular_instance(std::uint64_t seed, std::size_t examples, std::size_t n, double scale,
                                        int max_grade) {
  std::mt19937_64 rng(mix_seed(seed, 7));
  std::uniform_int_distribution<int> grade(0, max_grade);
  std::normal_distribution<double> normal(0.0, scale);
  TabularInstance inst;
  for (std::size_t e = 0; e < examples; ++e) {
    RankedExample ex;
    ex.prompt_id = "q" + std::to_string(e);
    for (std::size_t j = 0; j < n; ++j) {
      ex.candidates.push_back({"i" + std::to_string(j), {}});
      ex.relevance.push_back(grade(rng));
    }
    ex.target_perm = derive_target_perm(ex.relevance);
    inst.examples.push_back(std::move(ex));
  }
  inst.theta = Policy::tabular(inst.examples);
  inst.ref = Policy::tabular(inst.examples);
  for (auto& v : inst.theta.mutable_params()) v = normal(rng);
  for (auto& v : inst.ref.mutable_params()) v = normal(rng);
  return inst;
}

}  // namespace irpo
