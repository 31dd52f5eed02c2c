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

#pragma once

#include <Eigen/Core>

#include <vector>

namespace pcmot {

// Result of a rectangular assignment: row_to_col[i] is the column assigned to
// row i, or -1 when the row is unassigned (more rows than columns).
struct Assignment {
    std::vector<int> row_to_col;
    double total = 0.0;
};

// Exact rectangular linear assignment maximizing the summed score
// (shortest augmenting path with potentials, O(n^2 m)). Every row is
// assigned when rows <= cols, every column otherwise.
Assignment solve_max_assignment(const Eigen::MatrixXd& score);

// Same problem, minimizing the summed cost.
Assignment solve_min_assignment(const Eigen::MatrixXd& cost);

// Greedy baseline: repeatedly takes the highest remaining score.
Assignment solve_greedy_assignment(const Eigen::MatrixXd& score);

}  // namespace pcmot
