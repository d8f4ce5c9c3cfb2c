// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace l2i {

/// Minimum-cost one-to-one assignment (Hungarian method with row potentials,
/// shortest augmenting paths, O(n^3)).
///
/// `cost` is rows x cols with rows <= cols; every row is assigned a distinct
/// column. Returns the column chosen for each row. Rectangular problems with
/// more rows than columns must be padded by the caller.
///
/// Rows are inserted in index order and the column scan keeps the lowest
/// index on exact ties, so the result is deterministic for a given matrix.
template <typename Derived>
std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixBase<Derived>& cost) {
  using Scalar = typename Derived::Scalar;
  // Potentials accumulate many differences; keep them in extended precision.
  using Acc = std::conditional_t<std::is_floating_point_v<Scalar>, long double, Scalar>;

  const Eigen::Index rows = cost.rows();
  const Eigen::Index cols = cost.cols();
  if (rows > cols) throw std::invalid_argument("solve_assignment requires rows <= cols");
  if (rows == 0) return {};

  const Acc inf = std::numeric_limits<Acc>::has_infinity ? std::numeric_limits<Acc>::infinity()
                                                         : std::numeric_limits<Acc>::max();
  // 1-based bookkeeping; index 0 is the virtual root of each augmenting tree.
  std::vector<Acc> u(static_cast<std::size_t>(rows + 1), Acc(0));
  std::vector<Acc> v(static_cast<std::size_t>(cols + 1), Acc(0));
  std::vector<Eigen::Index> row_of(static_cast<std::size_t>(cols + 1), 0);
  std::vector<Eigen::Index> way(static_cast<std::size_t>(cols + 1), 0);

  for (Eigen::Index i = 1; i <= rows; ++i) {
    row_of[0] = i;
    Eigen::Index j0 = 0;
    std::vector<Acc> minv(static_cast<std::size_t>(cols + 1), inf);
    std::vector<char> used(static_cast<std::size_t>(cols + 1), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = row_of[j0];
      Acc delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const Acc cur = static_cast<Acc>(cost(i0 - 1, j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Eigen::Index j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[row_of[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      row_of[j0] = row_of[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Eigen::Index> col_of(static_cast<std::size_t>(rows), -1);
  for (Eigen::Index j = 1; j <= cols; ++j) {
    if (row_of[j] != 0) col_of[static_cast<std::size_t>(row_of[j] - 1)] = j - 1;
  }
  return col_of;
}

}  // namespace l2i
