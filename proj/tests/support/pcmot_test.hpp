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

// Shared fixtures and brute-force oracles for the test suite. The oracles are
// written independently of the library code they check.

#pragma once

#include "pcmot/geometry.hpp"
#include "pcmot/model.hpp"
#include "pcmot/random.hpp"
#include "pcmot/types.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <vector>

namespace pcmot::support {

inline Box random_box(Rng& rng, double width = 640.0, double height = 480.0) {
    std::uniform_real_distribution<double> x(0.0, width - 60.0);
    std::uniform_real_distribution<double> y(0.0, height - 90.0);
    std::uniform_real_distribution<double> w(10.0, 60.0);
    std::uniform_real_distribution<double> h(20.0, 90.0);
    std::uniform_real_distribution<double> c(0.0, 1.0);
    const double l = x(rng);
    const double t = y(rng);
    return make_box(l, t, l + w(rng), t + h(rng), c(rng));
}

inline Eigen::VectorXd random_vector(Rng& rng, int dim, double scale = 1.0) {
    std::normal_distribution<double> n(0.0, scale);
    Eigen::VectorXd v(dim);
    for (int k = 0; k < dim; ++k) v[k] = n(rng);
    return v;
}

inline FrameObjects random_frame(Rng& rng, int frame, int reals, int dim) {
    std::vector<Detection> dets;
    for (int i = 0; i < reals; ++i) dets.push_back(Detection::real(frame, random_box(rng), random_vector(rng, dim)));
    return FrameObjects(frame, std::move(dets));
}

// Identities drifting slowly across the arena with per-frame dropouts, so IoU
// chains and occlusion gaps both occur.
inline Clip tracking_clip(Rng& rng, int frames, int identities, int dim, double dropout = 0.1,
                          double appearance_noise = 0.05) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    struct Walker {
        double x, y, vx, vy, w, h;
        Eigen::VectorXd look;
    };
    std::vector<Walker> ws;
    for (int k = 0; k < identities; ++k) {
        ws.push_back({40 + 500 * u(rng), 40 + 340 * u(rng), 2 * n(rng), 2 * n(rng), 20 + 20 * u(rng),
                      40 + 40 * u(rng), random_vector(rng, dim)});
    }
    std::vector<FrameObjects> out;
    for (int t = 1; t <= frames; ++t) {
        std::vector<Detection> dets;
        for (int k = 0; k < identities; ++k) {
            auto& w = ws[static_cast<std::size_t>(k)];
            w.x += w.vx;
            w.y += w.vy;
            if (u(rng) < dropout) continue;
            Eigen::VectorXd look = w.look;
            for (int d = 0; d < dim; ++d) look[d] += appearance_noise * n(rng);
            dets.push_back(Detection::real(t, make_box(w.x, w.y, w.x + w.w, w.y + w.h, 0.5 + 0.5 * u(rng)),
                                           look, k + 1));
        }
        std::shuffle(dets.begin(), dets.end(), rng);
        out.emplace_back(t, std::move(dets));
    }
    return Clip(std::move(out));
}

inline ModelParams small_model(std::uint64_t seed, int appearance_dim = 3, int hidden = 6, int embedding = 4) {
    ModelConfig c;
    c.appearance_dim = appearance_dim;
    c.hidden_dim = hidden;
    c.embedding_dim = embedding;
    c.seed = seed;
    return ModelParams::initialize(c);
}

// Saturated two-layer model that maps one-hot appearance codes to orthogonal
// embeddings with squared norm 40: same-code match rows are one-hot to within
// e^-40. Box inputs are ignored.
inline ModelParams identity_model(int codes, int block = 40) {
    ModelParams p = small_model(0, codes, codes * block, codes * block);
    p.layers[0].weight.setZero();
    p.layers[0].bias.setZero();
    for (int i = 0; i < codes; ++i) {
        for (int b = 0; b < block; ++b) p.layers[0].weight(i * block + b, i) = 30.0;
    }
    p.layers[1].weight = 30.0 * Eigen::MatrixXd::Identity(codes * block, codes * block);
    p.layers[1].bias.setZero();
    p.null_embedding.setZero();
    return p;
}

inline Eigen::VectorXd one_hot(int dim, int k) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(dim);
    v[k] = 1.0;
    return v;
}

// Real rows softmax-like random, null row one-hot on the null column.
inline Eigen::MatrixXd random_match(Rng& rng, int real_rows, int real_cols) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(real_rows + 1, real_cols + 1);
    for (int i = 0; i < real_rows; ++i) {
        for (int j = 0; j <= real_cols; ++j) P(i, j) = u(rng);
        P.row(i) /= P.row(i).sum();
    }
    P(real_rows, real_cols) = 1.0;
    return P;
}

inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        diff += (a[k] - b[k]) * (a[k] - b[k]);
        na += a[k] * a[k];
        nb += b[k] * b[k];
    }
    const double scale = std::max({std::sqrt(na), std::sqrt(nb), 1e-8});
    return std::sqrt(diff) / scale;
}

// Central differences of f over every entry of x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double saved = x[k];
        x[k] = saved + h;
        const double up = f(x);
        x[k] = saved - h;
        const double down = f(x);
        x[k] = saved;
        g[k] = (up - down) / (2.0 * h);
    }
    return g;
}

namespace oracle {

// Sum over every object chain (u_0 = query, u_1, ..., u_K) of the product of
// masked hop probabilities, normalized once at the end.
inline Eigen::RowVectorXd chain_sum(int query, const std::vector<Eigen::MatrixXd>& P,
                                    const std::vector<Eigen::MatrixXd>& C) {
    const auto hops = P.size();
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(P.back().cols());
    std::vector<int> chain(hops + 1, 0);
    chain[0] = query;
    std::function<void(std::size_t, double)> walk = [&](std::size_t k, double weight) {
        if (k == hops) {
            acc[chain[hops]] += weight;
            return;
        }
        for (int v = 0; v < P[k].cols(); ++v) {
            const double w = P[k](chain[k], v) * C[k](chain[k], v);
            if (w == 0.0) continue;
            chain[k + 1] = v;
            walk(k + 1, weight * w);
        }
    };
    walk(0, 1.0);
    return acc / acc.sum();
}

// Every subset of the intermediate frames whose longest skipped run is at
// most max_skip (negative: unlimited).
inline std::vector<std::vector<int>> admissible_paths(int t_s, int t_e, int max_skip) {
    const int K = t_e - t_s - 1;
    std::vector<std::vector<int>> out;
    for (long long mask = 0; mask < (1LL << K); ++mask) {
        std::vector<int> frames{t_s};
        for (int k = 0; k < K; ++k) {
            if (mask & (1LL << k)) frames.push_back(t_s + 1 + k);
        }
        frames.push_back(t_e);
        int worst = 0;
        for (std::size_t i = 1; i < frames.size(); ++i) worst = std::max(worst, frames[i] - frames[i - 1] - 1);
        if (max_skip < 0 || worst <= max_skip) out.push_back(frames);
    }
    return out;
}

// Best total over all partial injections rows -> cols (rows <= cols assigns
// every row; otherwise every column).
inline double best_assignment(const Eigen::MatrixXd& score) {
    const int r = static_cast<int>(score.rows());
    const int c = static_cast<int>(score.cols());
    std::vector<int> idx(static_cast<std::size_t>(std::max(r, c)));
    std::iota(idx.begin(), idx.end(), 0);
    double best = -1e300;
    do {
        double total = 0.0;
        for (int i = 0; i < std::min(r, c); ++i) {
            total += r <= c ? score(i, idx[static_cast<std::size_t>(i)]) : score(idx[static_cast<std::size_t>(i)], i);
        }
        best = std::max(best, total);
    } while (std::next_permutation(idx.begin(), idx.end()));
    return best;
}

// IDTP by trying every one-to-one mapping of gt ids to predicted ids.
inline long long best_idtp(const Eigen::MatrixXd& overlap) {
    const int g = static_cast<int>(overlap.rows());
    const int p = static_cast<int>(overlap.cols());
    long long best = 0;
    std::vector<char> used(static_cast<std::size_t>(p), 0);
    std::function<void(int, long long)> go = [&](int i, long long total) {
        if (i == g) {
            best = std::max(best, total);
            return;
        }
        go(i + 1, total);  // gt i unmapped
        for (int j = 0; j < p; ++j) {
            if (used[static_cast<std::size_t>(j)]) continue;
            used[static_cast<std::size_t>(j)] = 1;
            go(i + 1, total + static_cast<long long>(overlap(i, j)));
            used[static_cast<std::size_t>(j)] = 0;
        }
    };
    go(0, 0);
    return best;
}

}  // namespace oracle

}  // namespace pcmot::support
