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

#include "pcmot_test.hpp"

#include <gtest/gtest.h>

#include <array>

using namespace pcmot;
using pcmot::ad::Matrix;
using pcmot::ad::Tape;
using pcmot::ad::Var;

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Reduces a matrix node to a scalar with fixed random weights so every entry
// of the gradient is exercised.
Var weigh(Tape& t, Var x, std::uint64_t seed) {
    Rng rng(seed);
    const auto rows = static_cast<int>(t.value(x).rows());
    const auto cols = static_cast<int>(t.value(x).cols());
    const Var left = t.constant(support::random_vector(rng, rows).transpose());
    const Var right = t.constant(support::random_vector(rng, cols));
    return t.matmul(t.matmul(left, x), right);
}

void check_gradient(const std::vector<Matrix>& inputs, const Builder& build, double tol = 1e-6) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.parameter(m));
    const Var out = build(tape, vars);
    const Var loss = weigh(tape, out, 99);
    tape.backward(loss);

    std::vector<double> analytic;
    std::vector<double> flat;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Matrix g = tape.grad(vars[k]);
        for (Eigen::Index i = 0; i < g.size(); ++i) {
            analytic.push_back(g.data()[i]);
            flat.push_back(inputs[k].data()[i]);
        }
    }
    auto eval = [&](const std::vector<double>& x) {
        Tape t;
        std::vector<Var> vs;
        std::size_t at = 0;
        for (const auto& m : inputs) {
            Matrix copy = m;
            for (Eigen::Index i = 0; i < copy.size(); ++i) copy.data()[i] = x[at++];
            vs.push_back(t.constant(copy));
        }
        return t.scalar(weigh(t, build(t, vs), 99));
    };
    const auto numeric = support::numeric_gradient(eval, flat);
    EXPECT_LT(support::relative_error(analytic, numeric), tol);
}

Matrix rnd(int r, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Rng rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
    return m;
}

}  // namespace

TEST(AutodiffGradient, ElementwiseAndLinear) {
    check_gradient({rnd(3, 4, 1), rnd(3, 4, 2)}, [](Tape& t, const auto& v) { return t.add(v[0], v[1]); });
    check_gradient({rnd(3, 4, 1), rnd(3, 4, 2)}, [](Tape& t, const auto& v) { return t.sub(v[0], v[1]); });
    check_gradient({rnd(3, 4, 1)}, [](Tape& t, const auto& v) { return t.scale(v[0], -2.5); });
    check_gradient({rnd(3, 4, 1)}, [](Tape& t, const auto& v) { return t.tanh(v[0]); });
    check_gradient({rnd(2, 3, 1), rnd(3, 4, 2)}, [](Tape& t, const auto& v) { return t.matmul(v[0], v[1]); });
    check_gradient({rnd(2, 3, 1), rnd(4, 3, 2)}, [](Tape& t, const auto& v) { return t.matmul_nt(v[0], v[1]); });
    check_gradient({rnd(5, 3, 1), rnd(1, 3, 2)},
                   [](Tape& t, const auto& v) { return t.add_row_broadcast(v[0], v[1]); });
}

TEST(AutodiffGradient, StructuralOps) {
    check_gradient({rnd(2, 3, 1), rnd(1, 3, 2), rnd(3, 3, 3)}, [](Tape& t, const auto& v) {
        return t.vstack(std::vector<Var>{v[0], v[1], v[2]});
    });
    check_gradient({rnd(4, 3, 1)}, [](Tape& t, const auto& v) { return t.gram(v[0]); });
    check_gradient({rnd(4, 3, 1)}, [](Tape& t, const auto& v) { return t.row(v[0], 2); });
    check_gradient({rnd(4, 3, 1)}, [](Tape& t, const auto& v) { return t.sum(v[0]); });
    check_gradient({rnd(1, 1, 1), rnd(1, 1, 2), rnd(1, 1, 3)}, [](Tape& t, const auto& v) {
        return t.add_all(std::vector<Var>{v[0], v[1], v[2]});
    });
    check_gradient({rnd(1, 1, 1), rnd(1, 1, 2)},
                   [](Tape& t, const auto& v) { return t.mean_all(std::vector<Var>{v[0], v[1]}); });
    check_gradient({rnd(1, 4, 1), rnd(1, 4, 2), rnd(1, 4, 3)}, [](Tape& t, const auto& v) {
        return t.mean_rows(std::vector<Var>{v[0], v[1], v[2]});
    });
}

TEST(AutodiffGradient, Softmaxes) {
    check_gradient({rnd(3, 5, 1, -3, 3)}, [](Tape& t, const auto& v) { return t.row_softmax(v[0]); });
    check_gradient({rnd(3, 5, 1, -3, 3)}, [](Tape& t, const auto& v) { return t.match_from_logits(v[0]); });
    check_gradient({rnd(6, 3, 4)}, [](Tape& t, const auto& v) {
        const std::array<int, 2> rows{0, 2};
        const std::array<int, 4> cols{3, 1, 4, 5};
        return t.match_block(t.gram(v[0]), rows, cols);
    });
}

TEST(AutodiffGradient, Propagation) {
    Matrix mask = Matrix::Ones(3, 4);
    mask(0, 1) = 0.0;
    mask(1, 2) = 0.0;
    check_gradient({rnd(1, 3, 1, 0.1, 1), rnd(3, 4, 2, 0.1, 1)}, [mask](Tape& t, const auto& v) {
        return t.masked_vecmat(v[0], v[1], mask);
    });
    check_gradient({rnd(1, 4, 3, 0.1, 1)}, [](Tape& t, const auto& v) {
        bool degenerate = false;
        return t.normalize_or_null(v[0], 3, &degenerate);
    });
    check_gradient({rnd(1, 4, 3, 0.1, 1)}, [](Tape& t, const auto& v) {
        bool degenerate = false;
        return t.entropy(t.normalize_or_null(v[0], 3, &degenerate));
    });
}

TEST(AutodiffGradient, LossReductions) {
    // Column sums straddle the floor of one on purpose.
    Matrix p = rnd(4, 4, 5, 0.0, 0.9);
    check_gradient({p}, [](Tape& t, const auto& v) { return t.column_floor_mean(v[0], 3, 3); });
    check_gradient({rnd(4, 3, 1), rnd(3, 4, 2)},
                   [](Tape& t, const auto& v) { return t.transpose_sq_diff_mean(v[0], v[1], 3, 2); });
    check_gradient({rnd(4, 3, 1), rnd(4, 3, 2)},
                   [](Tape& t, const auto& v) { return t.sq_diff_mean(v[0], v[1], 3, 2); });
}

TEST(Autodiff, ForwardValues) {
    Tape t;
    Matrix logits(1, 2);
    logits << 0.0, std::log(3.0);
    const Matrix p = t.value(t.row_softmax(t.constant(logits)));
    EXPECT_NEAR(p(0, 0), 0.25, 1e-15);
    EXPECT_NEAR(p(0, 1), 0.75, 1e-15);

    Matrix q(1, 2);
    q << 0.5, 0.5;
    EXPECT_NEAR(t.scalar(t.entropy(t.constant(q))), std::log(2.0), 1e-15);
    Matrix onehot(1, 3);
    onehot << 0.0, 1.0, 0.0;
    EXPECT_EQ(t.scalar(t.entropy(t.constant(onehot))), 0.0);

    Matrix cols(2, 3);
    cols << 0.9, 0.1, 0.0,  //
        0.7, 0.3, 0.0;
    EXPECT_NEAR(t.scalar(t.column_floor_mean(t.constant(cols), 2, 2)), (1.6 + 1.0) / 2.0, 1e-15);
}

TEST(Autodiff, NormalizeFallsBackToNullOnZeroMass) {
    Tape t;
    const Var v = t.parameter(Matrix::Zero(1, 3));
    bool degenerate = false;
    const Var out = t.normalize_or_null(v, 2, &degenerate);
    EXPECT_TRUE(degenerate);
    EXPECT_EQ(t.value(out), (Matrix(1, 3) << 0, 0, 1).finished());
    EXPECT_FALSE(t.requires_grad(out));
}

TEST(Autodiff, UnreachedParameterHasZeroGradient) {
    Tape t;
    const Var a = t.parameter(rnd(2, 2, 1));
    const Var b = t.parameter(rnd(2, 2, 2));
    t.backward(t.sum(t.tanh(a)));
    EXPECT_EQ(t.grad(b), Matrix::Zero(2, 2));
    EXPECT_NE(t.grad(a), Matrix::Zero(2, 2));
}

TEST(Autodiff, DoublingTheLossDoublesGradients) {
    Tape t;
    const Var a = t.parameter(rnd(3, 3, 1));
    const Var l = t.sum(t.gram(a));
    t.backward(l);
    const Matrix g1 = t.grad(a);
    t.backward(t.scale(l, 2.0));
    EXPECT_EQ(t.grad(a), 2.0 * g1);
}

TEST(Autodiff, NonFiniteValueNamesTheOperation) {
    Tape t;
    const Var a = t.parameter(Matrix::Constant(1, 1, 1e200));
    try {
        t.gram(a);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("gram"), std::string::npos);
    }
}

TEST(Autodiff, ShapeMismatchesRejected) {
    Tape t;
    const Var a = t.parameter(rnd(2, 3, 1));
    const Var b = t.parameter(rnd(2, 2, 2));
    EXPECT_THROW(t.add(a, b), ShapeError);
    EXPECT_THROW(t.matmul(a, b), ShapeError);
    EXPECT_THROW(t.backward(a), ShapeError);
}
