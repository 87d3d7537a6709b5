#pragma once

#include <cstdint>
#include <vector>

#include "irpo/datamodel.hpp"

namespace irpo {

// A random tabular problem: `examples` lists of `n` candidates with grades
// drawn from {0, 1, 2}, plus independent N(0, scale^2) logits for the trained
// and reference policies.
struct TabularInstance {
  std::vector<RankedExample> examples;
  Policy theta;
  Policy ref;
};

TabularInstance random_tabular_instance(std::uint64_t seed, std::size_t examples, std::size_t n,
                                        double scale = 1.0, int max_grade = 2);

}  // namespace irpo
