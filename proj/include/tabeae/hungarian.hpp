#pragma once

// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
// row/column potentials, O(n^3)).

#include <cmath>
#include <limits>
#include <vector>

#include "tabeae/autograd.hpp"
#include "tabeae/error.hpp"

namespace tabeae {

struct Matching {
  std::vector<int> row_to_col;
  double total_cost = 0.0;
};

inline Matching hungarian(const ag::Matrix& cost) {
  const auto n = static_cast<int>(cost.rows());
  if (cost.cols() != cost.rows()) {
    throw Error("hungarian: cost matrix is " + std::to_string(cost.rows()) + "x" + std::to_string(cost.cols()) +
                ", expected square");
  }
  for (Eigen::Index i = 0; i < cost.size(); ++i) {
    if (!std::isfinite(cost.data()[i])) throw Error("hungarian: cost matrix has a non-finite entry");
  }
  Matching out;
  if (n == 0) return out;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is a virtual column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) out.row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  for (int i = 0; i < n; ++i) out.total_cost += cost(i, out.row_to_col[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace tabeae
