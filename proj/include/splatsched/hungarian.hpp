#pragma once

#include <cstdint>
#include <vector>

namespace splatsched {

/// Dense square cost matrix, row-major.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<std::int64_t> cost;

  std::int64_t operator()(std::size_t r, std::size_t c) const { return cost[r * n + c]; }
};

/// Minimum-cost perfect matching (Kuhn-Munkres with potentials, O(n^3)).
/// Returns the column assigned to each row. Rows are inserted in index order
/// and ties resolve to the lowest column, so results are deterministic.
std::vector<std::size_t> solve_assignment(const CostMatrix& m);

}  // namespace splatsched
