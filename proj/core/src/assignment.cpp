// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#include "pcmot/assignment.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace pcmot {
namespace {

// Shortest augmenting path with row/column potentials; requires
// cost.rows() <= cost.cols(). Returns the column of every row.
std::vector<int> hungarian_wide(const Eigen::MatrixXd& cost) {
    const int n = static_cast<int>(cost.rows());
    const int m = static_cast<int>(cost.cols());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, inf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = inf;
            int j1 = 0;
            for (int j = 1; j <= m; ++j) {
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
            for (int j = 0; j <= m; ++j) {
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
    std::vector<int> row_to_col(static_cast<std::size_t>(n), -1);
    for (int j = 1; j <= m; ++j) {
        if (p[j] != 0) row_to_col[static_cast<std::size_t>(p[j] - 1)] = j - 1;
    }
    return row_to_col;
}

}  // namespace

Assignment solve_min_assignment(const Eigen::MatrixXd& cost) {
    if (!cost.allFinite()) throw ShapeError("assignment cost matrix has non-finite entries");
    Assignment result;
    const auto rows = cost.rows();
    const auto cols = cost.cols();
    result.row_to_col.assign(static_cast<std::size_t>(rows), -1);
    if (rows == 0 || cols == 0) return result;
    if (rows <= cols) {
        result.row_to_col = hungarian_wide(cost);
    } else {
        const auto col_to_row = hungarian_wide(cost.transpose());
        for (std::size_t j = 0; j < col_to_row.size(); ++j) {
            result.row_to_col[static_cast<std::size_t>(col_to_row[j])] = static_cast<int>(j);
        }
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
        const int j = result.row_to_col[static_cast<std::size_t>(i)];
        if (j >= 0) result.total += cost(i, j);
    }
    return result;
}

Assignment solve_max_assignment(const Eigen::MatrixXd& score) {
    Assignment result = solve_min_assignment(-score);
    result.total = -result.total;
    return result;
}

Assignment solve_greedy_assignment(const Eigen::MatrixXd& score) {
    Assignment result;
    const auto rows = score.rows();
    const auto cols = score.cols();
    result.row_to_col.assign(static_cast<std::size_t>(rows), -1);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(rows * cols));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    // Row-major flat index; ties resolve to the lower index.
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return score(a / cols, a % cols) > score(b / cols, b % cols);
    });
    std::vector<char> col_used(static_cast<std::size_t>(cols), 0);
    for (const auto flat : order) {
        const auto i = flat / cols;
        const auto j = flat % cols;
        if (result.row_to_col[static_cast<std::size_t>(i)] >= 0 || col_used[static_cast<std::size_t>(j)]) {
            continue;
        }
        result.row_to_col[static_cast<std::size_t>(i)] = static_cast<int>(j);
        col_used[static_cast<std::size_t>(j)] = 1;
        result.total += score(i, j);
    }
    return result;
}

}  // namespace pcmot
