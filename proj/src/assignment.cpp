#include <limits>
#include <vector>

#include "hmme/diversity.hpp"
#include "hmme/error.hpp"

namespace hmme {

// Shortest-augmenting-path Hungarian method with row/column potentials.
// Indices are 1-based internally; slot 0 is the virtual source column.
std::vector<std::size_t> solve_assignment(const Matrix& cost) {
  const auto rows = static_cast<std::size_t>(cost.rows());
  const auto cols = static_cast<std::size_t>(cost.cols());
  if (rows == 0 || rows > cols) throw ParameterError("solve_assignment needs 0 < rows <= cols");
  if (!cost.allFinite()) throw ParameterError("solve_assignment: non-finite cost");

  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(rows + 1, 0.0);
  std::vector<double> v(cols + 1, 0.0);
  std::vector<std::size_t> owner(cols + 1, 0);  // row matched to column j
  std::vector<std::size_t> way(cols + 1, 0);

  for (std::size_t i = 1; i <= rows; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(cols + 1, kInf);
    std::vector<bool> used(cols + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = owner[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double reduced = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) -
                               u[i0] - v[j];
        if (reduced < minv[j]) {
          minv[j] = reduced;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> assignment(rows);
  for (std::size_t j = 1; j <= cols; ++j)
    if (owner[j] != 0) assignment[owner[j] - 1] = j - 1;
  return assignment;
}

}  // namespace hmme
