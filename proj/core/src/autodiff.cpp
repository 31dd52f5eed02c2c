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

#include "pcmot/autodiff.hpp"

#include "pcmot/error.hpp"

#include <cmath>
#include <string>

namespace pcmot::ad {
namespace {

void require_shape(bool ok, const char* op, const std::string& detail) {
    if (!ok) throw ShapeError(std::string(op) + ": " + detail);
}

std::string dims(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Var Tape::push(Matrix value, const char* name, bool requires_grad, BackwardFn backward) {
    if (!value.allFinite()) {
        throw NumericalError(std::string("non-finite value produced by ") + name);
    }
    Node node;
    node.value = std::move(value);
    node.name = name;
    node.requires_grad = requires_grad;
    if (requires_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var{nodes_.size() - 1};
}

Matrix& Tape::grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

void Tape::accumulate(std::size_t id, const Matrix& delta) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
        n.grad = delta;
    } else {
        n.grad += delta;
    }
}

Var Tape::constant(Matrix value, const char* name) {
    return push(std::move(value), name, false, nullptr);
}

Var Tape::parameter(Matrix value, const char* name) {
    return push(std::move(value), name, true, [](Tape&, std::size_t) {});
}

double Tape::scalar(Var v) const {
    const Matrix& m = value(v);
    require_shape(m.rows() == 1 && m.cols() == 1, "scalar", "node is " + dims(m));
    return m(0, 0);
}

Matrix Tape::grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
}

Var Tape::add(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), "add", dims(av) + " + " + dims(bv));
    return push(av + bv, "add", needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        t.accumulate(a.id, g);
        t.accumulate(b.id, g);
    });
}

Var Tape::sub(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), "sub", dims(av) + " - " + dims(bv));
    return push(av - bv, "sub", needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad;
        t.accumulate(a.id, g);
        t.accumulate(b.id, -g);
    });
}

Var Tape::scale(Var a, double factor) {
    return push(value(a) * factor, "scale", needs(a), [a, factor](Tape& t, std::size_t self) {
        t.accumulate(a.id, t.nodes_[self].grad * factor);
    });
}

Var Tape::matmul(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(av.cols() == bv.rows(), "matmul", dims(av) + " * " + dims(bv));
    return push(av * bv, "matmul", needs(a) || needs(b), [a, b](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        if (t.needs(a)) t.accumulate(a.id, g * t.value(b).transpose());
        if (t.needs(b)) t.accumulate(b.id, t.value(a).transpose() * g);
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(av.cols() == bv.cols(), "matmul_nt", dims(av) + " * " + dims(bv) + "^T");
    return push(av * bv.transpose(), "matmul_nt", needs(a) || needs(b),
                [a, b](Tape& t, std::size_t self) {
                    const Matrix& g = t.nodes_[self].grad;
                    if (t.needs(a)) t.accumulate(a.id, g * t.value(b));
                    if (t.needs(b)) t.accumulate(b.id, g.transpose() * t.value(a));
                });
}

Var Tape::add_row_broadcast(Var a, Var row) {
    const Matrix& av = value(a);
    const Matrix& rv = value(row);
    require_shape(rv.rows() == 1 && rv.cols() == av.cols(), "add_row_broadcast",
                  dims(av) + " + " + dims(rv));
    Matrix out = av;
    out.rowwise() += rv.row(0);
    return push(std::move(out), "add_row_broadcast", needs(a) || needs(row),
                [a, row](Tape& t, std::size_t self) {
                    const Matrix g = t.nodes_[self].grad;
                    t.accumulate(a.id, g);
                    t.accumulate(row.id, g.colwise().sum());
                });
}

Var Tape::tanh(Var a) {
    Matrix out = value(a).array().tanh().matrix();
    return push(std::move(out), "tanh", needs(a), [a](Tape& t, std::size_t self) {
        const Matrix& y = t.nodes_[self].value;
        const Matrix& g = t.nodes_[self].grad;
        t.accumulate(a.id, (g.array() * (1.0 - y.array().square())).matrix());
    });
}

Var Tape::vstack(std::span<const Var> parts) {
    require_shape(!parts.empty(), "vstack", "no inputs");
    const Eigen::Index cols = value(parts[0]).cols();
    Eigen::Index rows = 0;
    bool any = false;
    for (const Var p : parts) {
        require_shape(value(p).cols() == cols, "vstack", "column mismatch");
        rows += value(p).rows();
        any = any || needs(p);
    }
    Matrix out(rows, cols);
    Eigen::Index r = 0;
    for (const Var p : parts) {
        out.middleRows(r, value(p).rows()) = value(p);
        r += value(p).rows();
    }
    std::vector<Var> inputs(parts.begin(), parts.end());
    return push(std::move(out), "vstack", any, [inputs](Tape& t, std::size_t self) {
        Eigen::Index r0 = 0;
        for (const Var p : inputs) {
            const Eigen::Index n = t.value(p).rows();
            if (t.needs(p)) t.accumulate(p.id, t.nodes_[self].grad.middleRows(r0, n));
            r0 += n;
        }
    });
}

Var Tape::gram(Var h) {
    const Matrix& hv = value(h);
    Matrix out = hv * hv.transpose();
    return push(std::move(out), "gram", needs(h), [h](Tape& t, std::size_t self) {
        const Matrix& g = t.nodes_[self].grad;
        t.accumulate(h.id, (g + g.transpose()) * t.value(h));
    });
}

namespace {

// Row softmax with the max-shift; rows of length 0 are left empty.
Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double m = logits.row(i).maxCoeff();
        out.row(i) = (logits.row(i).array() - m).exp().matrix();
        out.row(i) /= out.row(i).sum();
    }
    return out;
}

// d logits for y = softmax(x) row-wise: y .* (g - rowsum(g .* y)).
Matrix softmax_backward(const Matrix& y, const Matrix& g) {
    Matrix dx(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        const double dot = (g.row(i).array() * y.row(i).array()).sum();
        dx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
    }
    return dx;
}

}  // namespace

Var Tape::row_softmax(Var logits) {
    require_shape(value(logits).cols() > 0, "row_softmax", "no columns");
    return push(softmax_rows(value(logits)), "row_softmax", needs(logits),
                [logits](Tape& t, std::size_t self) {
                    t.accumulate(logits.id,
                                 softmax_backward(t.nodes_[self].value, t.nodes_[self].grad));
                });
}

Var Tape::row(Var a, Eigen::Index index) {
    const Matrix& av = value(a);
    require_shape(index >= 0 && index < av.rows(), "row", "index out of range for " + dims(av));
    return push(av.row(index), "row", needs(a), [a, index](Tape& t, std::size_t self) {
        t.grad_buffer(a.id).row(index) += t.nodes_[self].grad.row(0);
    });
}

Var Tape::sum(Var a) {
    return push(Matrix::Constant(1, 1, value(a).sum()), "sum", needs(a),
                [a](Tape& t, std::size_t self) {
                    const Matrix& av = t.value(a);
                    t.accumulate(a.id, Matrix::Constant(av.rows(), av.cols(), t.nodes_[self].grad(0, 0)));
                });
}

Var Tape::add_all(std::span<const Var> scalars) {
    double total = 0.0;
    bool any = false;
    for (const Var s : scalars) {
        total += scalar(s);
        any = any || needs(s);
    }
    std::vector<Var> inputs(scalars.begin(), scalars.end());
    return push(Matrix::Constant(1, 1, total), "add_all", any, [inputs](Tape& t, std::size_t self) {
        const double g = t.nodes_[self].grad(0, 0);
        for (const Var s : inputs) {
            if (t.needs(s)) t.grad_buffer(s.id)(0, 0) += g;
        }
    });
}

Var Tape::mean_all(std::span<const Var> scalars) {
    require_shape(!scalars.empty(), "mean_all", "no inputs");
    return scale(add_all(scalars), 1.0 / static_cast<double>(scalars.size()));
}

Var Tape::match_block(Var gram, std::span<const int> src_rows, std::span<const int> dst_cols) {
    const Matrix& G = value(gram);
    const auto n = static_cast<Eigen::Index>(src_rows.size());
    const auto m = static_cast<Eigen::Index>(dst_cols.size());
    require_shape(m >= 1, "match_block", "destination must include the null column");
    Matrix logits(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) logits(i, j) = G(src_rows[i], dst_cols[j]);
    }
    Matrix P(n + 1, m);
    P.topRows(n) = softmax_rows(logits);
    P.row(n).setZero();
    P(n, m - 1) = 1.0;
    std::vector<int> rows(src_rows.begin(), src_rows.end());
    std::vector<int> cols(dst_cols.begin(), dst_cols.end());
    return push(std::move(P), "match_block", needs(gram),
                [gram, rows = std::move(rows), cols = std::move(cols)](Tape& t, std::size_t self) {
                    const Matrix& y = t.nodes_[self].value;
                    const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
                    const Matrix dlogits =
                        softmax_backward(y.topRows(nr), t.nodes_[self].grad.topRows(nr));
                    Matrix& dG = t.grad_buffer(gram.id);
                    for (Eigen::Index i = 0; i < nr; ++i) {
                        for (std::size_t j = 0; j < cols.size(); ++j) {
                            dG(rows[static_cast<std::size_t>(i)], cols[j]) +=
                                dlogits(i, static_cast<Eigen::Index>(j));
                        }
                    }
                });
}

Var Tape::match_from_logits(Var logits) {
    const Matrix& L = value(logits);
    const Eigen::Index n = L.rows();
    const Eigen::Index m = L.cols();
    require_shape(m >= 1, "match_from_logits", "destination must include the null column");
    Matrix P(n + 1, m);
    P.topRows(n) = softmax_rows(L);
    P.row(n).setZero();
    P(n, m - 1) = 1.0;
    return push(std::move(P), "match_from_logits", needs(logits), [logits](Tape& t, std::size_t self) {
        const Eigen::Index nr = t.value(logits).rows();
        t.accumulate(logits.id, softmax_backward(t.nodes_[self].value.topRows(nr),
                                                 t.nodes_[self].grad.topRows(nr)));
    });
}

Var Tape::masked_vecmat(Var q, Var p, const Matrix& mask) {
    const Matrix& qv = value(q);
    const Matrix& pv = value(p);
    require_shape(qv.rows() == 1 && qv.cols() == pv.rows(), "masked_vecmat",
                  dims(qv) + " * " + dims(pv));
    require_shape(mask.rows() == pv.rows() && mask.cols() == pv.cols(), "masked_vecmat",
                  "mask " + dims(mask) + " vs " + dims(pv));
    Matrix masked = mask.cwiseProduct(pv);
    Matrix out = qv * masked;
    return push(std::move(out), "masked_vecmat", needs(q) || needs(p),
                [q, p, masked = std::move(masked), mask](Tape& t, std::size_t self) {
                    const Matrix& g = t.nodes_[self].grad;
                    if (t.needs(q)) t.accumulate(q.id, g * masked.transpose());
                    if (t.needs(p)) {
                        t.accumulate(p.id, mask.cwiseProduct(t.value(q).transpose() * g));
                    }
                });
}

Var Tape::normalize_or_null(Var v, Eigen::Index null_col, bool* degenerate) {
    const Matrix& vv = value(v);
    require_shape(vv.rows() == 1 && null_col >= 0 && null_col < vv.cols(), "normalize_or_null",
                  "expects a row containing the null column");
    const double total = vv.sum();
    if (!(total > 1e-300)) {
        if (degenerate) *degenerate = true;
        Matrix onehot = Matrix::Zero(1, vv.cols());
        onehot(0, null_col) = 1.0;
        return constant(std::move(onehot), "normalize_or_null");
    }
    if (degenerate) *degenerate = false;
    return push(vv / total, "normalize_or_null", needs(v), [v, total](Tape& t, std::size_t self) {
        const Matrix& y = t.nodes_[self].value;
        const Matrix& g = t.nodes_[self].grad;
        const double dot = (g.array() * y.array()).sum();
        t.accumulate(v.id, ((g.array() - dot) / total).matrix());
    });
}

Var Tape::mean_rows(std::span<const Var> rows) {
    require_shape(!rows.empty(), "mean_rows", "no inputs");
    Matrix out = Matrix::Zero(value(rows[0]).rows(), value(rows[0]).cols());
    bool any = false;
    for (const Var r : rows) {
        require_shape(value(r).rows() == out.rows() && value(r).cols() == out.cols(), "mean_rows",
                      "shape mismatch");
        out += value(r);
        any = any || needs(r);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    out *= inv;
    std::vector<Var> inputs(rows.begin(), rows.end());
    return push(std::move(out), "mean_rows", any, [inputs, inv](Tape& t, std::size_t self) {
        const Matrix g = t.nodes_[self].grad * inv;
        for (const Var r : inputs) t.accumulate(r.id, g);
    });
}

Var Tape::entropy(Var p) {
    const Matrix& pv = value(p);
    require_shape(pv.rows() == 1, "entropy", "expects a row, got " + dims(pv));
    double h = 0.0;
    for (Eigen::Index j = 0; j < pv.cols(); ++j) {
        const double x = pv(0, j);
        if (x > 0.0) h -= x * std::log(x);
    }
    return push(Matrix::Constant(1, 1, h), "entropy", needs(p), [p](Tape& t, std::size_t self) {
        const Matrix& pv = t.value(p);
        const double g = t.nodes_[self].grad(0, 0);
        Matrix d = Matrix::Zero(1, pv.cols());
        // Structural zeros (masked or unreachable entries) get a zero subgradient.
        for (Eigen::Index j = 0; j < pv.cols(); ++j) {
            if (pv(0, j) > 0.0) d(0, j) = -g * (std::log(pv(0, j)) + 1.0);
        }
        t.accumulate(p.id, d);
    });
}

Var Tape::column_floor_mean(Var p, Eigen::Index rows, Eigen::Index cols) {
    const Matrix& pv = value(p);
    require_shape(rows <= pv.rows() && cols <= pv.cols() && cols > 0, "column_floor_mean",
                  "block exceeds " + dims(pv));
    const Eigen::RowVectorXd colsum = pv.topLeftCorner(rows, cols).colwise().sum();
    double total = 0.0;
    for (Eigen::Index j = 0; j < cols; ++j) total += std::max(1.0, colsum[j]);
    return push(Matrix::Constant(1, 1, total / static_cast<double>(cols)), "column_floor_mean",
                needs(p), [p, rows, cols, colsum](Tape& t, std::size_t self) {
                    const double g = t.nodes_[self].grad(0, 0) / static_cast<double>(cols);
                    Matrix& dp = t.grad_buffer(p.id);
                    for (Eigen::Index j = 0; j < cols; ++j) {
                        if (colsum[j] > 1.0) dp.col(j).head(rows).array() += g;
                    }
                });
}

Var Tape::transpose_sq_diff_mean(Var forward, Var backward, Eigen::Index rows, Eigen::Index cols) {
    const Matrix& f = value(forward);
    const Matrix& b = value(backward);
    require_shape(rows > 0 && cols > 0 && rows <= f.rows() && cols <= f.cols() &&
                      cols <= b.rows() && rows <= b.cols(),
                  "transpose_sq_diff_mean", dims(f) + " vs " + dims(b));
    const Matrix diff = f.topLeftCorner(rows, cols) - b.topLeftCorner(cols, rows).transpose();
    const double n = static_cast<double>(rows * cols);
    return push(Matrix::Constant(1, 1, diff.squaredNorm() / n), "transpose_sq_diff_mean",
                needs(forward) || needs(backward),
                [forward, backward, rows, cols, diff, n](Tape& t, std::size_t self) {
                    const Matrix d = diff * (2.0 * t.nodes_[self].grad(0, 0) / n);
                    if (t.needs(forward)) t.grad_buffer(forward.id).topLeftCorner(rows, cols) += d;
                    if (t.needs(backward)) {
                        t.grad_buffer(backward.id).topLeftCorner(cols, rows) -= d.transpose();
                    }
                });
}

Var Tape::sq_diff_mean(Var a, Var b, Eigen::Index rows, Eigen::Index cols) {
    const Matrix& av = value(a);
    const Matrix& bv = value(b);
    require_shape(rows > 0 && cols > 0 && rows <= av.rows() && cols <= av.cols() &&
                      rows <= bv.rows() && cols <= bv.cols(),
                  "sq_diff_mean", dims(av) + " vs " + dims(bv));
    const Matrix diff = av.topLeftCorner(rows, cols) - bv.topLeftCorner(rows, cols);
    const double n = static_cast<double>(rows * cols);
    return push(Matrix::Constant(1, 1, diff.squaredNorm() / n), "sq_diff_mean",
                needs(a) || needs(b), [a, b, rows, cols, diff, n](Tape& t, std::size_t self) {
                    const Matrix d = diff * (2.0 * t.nodes_[self].grad(0, 0) / n);
                    if (t.needs(a)) t.grad_buffer(a.id).topLeftCorner(rows, cols) += d;
                    if (t.needs(b)) t.grad_buffer(b.id).topLeftCorner(rows, cols) -= d;
                });
}

void Tape::backward(Var loss) {
    const Matrix& lv = value(loss);
    require_shape(lv.rows() == 1 && lv.cols() == 1, "backward", "loss must be 1x1, got " + dims(lv));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[loss.id].requires_grad) return;
    nodes_[loss.id].grad = Matrix::Constant(1, 1, 1.0);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (!n.grad.allFinite()) {
            throw NumericalError(std::string("non-finite gradient at ") + n.name);
        }
        if (n.backward) n.backward(*this, i);
    }
}

}  // namespace pcmot::ad
