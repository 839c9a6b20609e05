#include "splatsched/hungarian.hpp"

#include <limits>

#include "splatsched/error.hpp"

namespace splatsched {

std::vector<std::size_t> solve_assignment(const CostMatrix& m) {
  const std::size_t n = m.n;
  if (m.cost.size() != n * n) throw ParameterError("cost", "matrix is not n x n");
  if (n == 0) return {};
  constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

  // 1-based: column 0 is the virtual start of each augmenting path.
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0), min_slack(n + 1);
  std::vector<std::size_t> row_of(n + 1, 0), prev(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t row = 1; row <= n; ++row) {
    row_of[0] = row;
    std::size_t col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t r = row_of[col0];
      std::int64_t delta = kInf;
      std::size_t col1 = 0;
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        const std::int64_t reduced = m(r - 1, c - 1) - u[r] - v[c];
        if (reduced < min_slack[c]) {
          min_slack[c] = reduced;
          prev[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[row_of[c]] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (row_of[col0] != 0);
    // Flip the augmenting path.
    do {
      const std::size_t col1 = prev[col0];
      row_of[col0] = row_of[col1];
      col0 = col1;
    } while (col0 != 0);
  }

  std::vector<std::size_t> col_of_row(n);
  for (std::size_t c = 1; c <= n; ++c) col_of_row[row_of[c] - 1] = c - 1;
  return col_of_row;
}

}  // namespace splatsched
