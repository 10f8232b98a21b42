#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "stmmot/tensor.hpp"

namespace stmmot {

/// A partial bijection between rows (queries) and columns (ground truths).
struct Assignment {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  ///< sorted by row
    std::vector<std::size_t> unmatched_rows;
    std::vector<std::size_t> unmatched_cols;
};

/// Minimum-cost maximum matching on a rectangular [n, m] cost matrix
/// (Kuhn-Munkres with row potentials, O(n^2 m)). Exactly min(n, m) pairs.
Assignment hungarian(const Tensor& cost);

double assignment_cost(const Tensor& cost, const Assignment& a);

}  // namespace stmmot
