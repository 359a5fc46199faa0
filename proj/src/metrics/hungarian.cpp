#include <algorithm>
#include <limits>

#include "qens/errors.hpp"
#include "qens/metrics.hpp"

namespace qens {

// Shortest augmenting path with row/column potentials; 1-based internally,
// index 0 is the virtual source column.
Assignment hungarian_assign(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw ValidationError("assignment cost matrix has non-finite entries");
  const int rows = static_cast<int>(cost.rows());
  const int cols = static_cast<int>(cost.cols());
  Assignment result;
  result.row_to_col.assign(rows, -1);
  if (rows == 0 || cols == 0) return result;

  const int n = std::max(rows, cols);
  auto at = [&](int r, int c) { return (r < rows && c < cols) ? cost(r, c) : 0.0; };
  constexpr double kInf = std::numeric_limits<double>::infinity();

  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);  // match[col] = row
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = at(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  for (int j = 1; j <= n; ++j) {
    const int r = match[j] - 1;
    const int c = j - 1;
    if (r < rows && c < cols) {
      result.row_to_col[r] = c;
      result.total_cost += cost(r, c);
    }
  }
  return result;
}

}  // namespace qens
