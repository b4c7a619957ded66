#pragma once

#include <vector>

#include "sddp/cuts.hpp"

namespace sddp::testing {

// Minimum-cost partial assignment between two cut sets by exhaustive search
// over every injective mapping of the smaller set into the larger, under the
// squared Euclidean (beta, alpha) metric. Factorial cost; keep sets tiny.
double brute_force_emd(const std::vector<Cut>& a, const std::vector<Cut>& b);

// Minimum-cost perfect matching of a square cost matrix by enumerating all
// permutations.
double brute_force_assignment(const Eigen::MatrixXd& cost);

}  // namespace sddp::testing
