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

#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace pcmot::ad {

using Matrix = Eigen::MatrixXd;

// Handle to a node on a Tape. Only meaningful for the tape that created it.
struct Var {
    static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
    std::size_t id = npos;
    bool valid() const noexcept { return id != npos; }
};

// Minimal reverse-mode tape over dense matrices. Every operation evaluates
// eagerly, records a backward closure, and throws NumericalError naming the
// operation if it produces a non-finite value. Vectors are 1 x n rows and
// scalars are 1 x 1.
//
// The association-specific operations (match_block, masked_vecmat,
// normalize_or_null, column_floor_mean, ...) are fused so that a clip with
// thousands of frame pairs stays at a few nodes per pair.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;
    Tape(Tape&&) = default;
    Tape& operator=(Tape&&) = default;

    Var constant(Matrix value, const char* name = "constant");
    Var parameter(Matrix value, const char* name = "parameter");
    Var scalar_constant(double value) { return constant(Matrix::Constant(1, 1, value)); }

    const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
    double scalar(Var v) const;
    // Gradient accumulated by the last backward(); zeros if the node was not
    // reached.
    Matrix grad(Var v) const;
    bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
    const char* name(Var v) const { return nodes_.at(v.id).name; }
    std::size_t size() const noexcept { return nodes_.size(); }

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var scale(Var a, double factor);
    Var matmul(Var a, Var b);     // a * b
    Var matmul_nt(Var a, Var b);  // a * b^T
    Var add_row_broadcast(Var a, Var row);
    Var tanh(Var a);
    Var vstack(std::span<const Var> parts);
    Var gram(Var h);  // h * h^T
    Var row_softmax(Var logits);
    Var row(Var a, Eigen::Index index);
    Var sum(Var a);
    Var add_all(std::span<const Var> scalars);
    Var mean_all(std::span<const Var> scalars);

    // Match probabilities from a Gram matrix of embedding dot products:
    // real source rows are softmax(gram[src_rows, dst_cols]); a final row is
    // appended, one-hot on the last destination column (the null object).
    Var match_block(Var gram, std::span<const int> src_rows, std::span<const int> dst_cols);

    // Same layout from explicit logits (real rows only).
    Var match_from_logits(Var logits);

    // q (1 x n) times (mask .* p) (n x m); mask is a fixed 0/1 matrix.
    Var masked_vecmat(Var q, Var p, const Matrix& mask);

    // v / sum(v). When the mass is zero (or underflows) the result is a
    // constant one-hot on null_col and *degenerate is set.
    Var normalize_or_null(Var v, Eigen::Index null_col, bool* degenerate);

    // Mean of equally shaped rows.
    Var mean_rows(std::span<const Var> rows);

    // Shannon entropy (natural log) of a 1 x n probability row, 0 log 0 = 0.
    Var entropy(Var p);

    // (1/cols) sum_j max(1, sum_i p[i,j]) over the leading rows x cols block.
    Var column_floor_mean(Var p, Eigen::Index rows, Eigen::Index cols);

    // mean over the leading rows x cols block of (forward[i,j] - backward[j,i])^2.
    Var transpose_sq_diff_mean(Var forward, Var backward, Eigen::Index rows,
                               Eigen::Index cols);

    // mean over the leading rows x cols block of (a[i,j] - b[i,j])^2.
    Var sq_diff_mean(Var a, Var b, Eigen::Index rows, Eigen::Index cols);

    // Reverse sweep from a 1 x 1 node; clears previous gradients first.
    void backward(Var loss);

private:
    using BackwardFn = std::function<void(Tape&, std::size_t)>;

    struct Node {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
        const char* name = "";
        bool requires_grad = false;
    };

    Var push(Matrix value, const char* name, bool requires_grad, BackwardFn backward);
    Matrix& grad_buffer(std::size_t id);
    void accumulate(std::size_t id, const Matrix& delta);
    bool needs(Var v) const { return nodes_[v.id].requires_grad; }

    std::vector<Node> nodes_;
};

}  // namespace pcmot::ad
