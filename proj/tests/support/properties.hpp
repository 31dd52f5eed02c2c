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

#include "pcmot/assignment.hpp"
#include "pcmot/mot_io.hpp"
#include "pcmot/pathloss.hpp"
#include "pcmot/track.hpp"

#include "pcmot_test.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace pcmot::support {

struct PropertyResult {
    std::string name;
    int cases = 0;
    int failures = 0;
    std::string first_failure;

    bool ok() const { return failures == 0; }
};

// Runs check(rng, case) for every case; check returns an empty string on
// success or a description of the violation.
inline PropertyResult run_property(const std::string& name, int cases, std::uint64_t seed,
                                   const std::function<std::string(Rng&, int)>& check) {
    PropertyResult r{name, cases, 0, {}};
    for (int k = 0; k < cases; ++k) {
        Rng rng(derive_seed(seed, name + "-" + std::to_string(k)));
        std::string why;
        try {
            why = check(rng, k);
        } catch (const std::exception& e) {
            why = std::string("threw: ") + e.what();
        }
        if (!why.empty()) {
            if (r.failures == 0) r.first_failure = "case " + std::to_string(k) + ": " + why;
            ++r.failures;
        }
    }
    return r;
}

inline int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

inline PropertyResult row_stochasticity(int cases, std::uint64_t seed) {
    return run_property("row_stochasticity", cases, seed, [](Rng& rng, int) -> std::string {
        const int dim = uniform_int(rng, 1, 4);
        const ModelParams p = small_model(rng(), dim, uniform_int(rng, 2, 8), uniform_int(rng, 1, 6));
        const auto a = embed_frame(p, random_frame(rng, 1, uniform_int(rng, 0, 8), dim));
        const auto b = embed_frame(p, random_frame(rng, 2, uniform_int(rng, 0, 8), dim));
        const MatchMatrix m = match_matrix(a, b);
        for (Eigen::Index i = 0; i < m.P.rows(); ++i) {
            if (std::abs(m.P.row(i).sum() - 1.0) > 1e-12) return "row sum off";
            if ((m.P.row(i).array() < 0.0).any()) return "negative entry";
        }
        const Eigen::Index n = m.P.rows() - 1;
        for (Eigen::Index j = 0; j + 1 < m.P.cols(); ++j) {
            if (m.P(n, j) != 0.0) return "null row reaches a real object";
        }
        return {};
    });
}

inline PropertyResult distribution_normalization(int cases, std::uint64_t seed) {
    return run_property("distribution_normalization", cases, seed, [](Rng& rng, int) -> std::string {
        const int frames = uniform_int(rng, 2, 7);
        std::vector<int> reals;
        reals.push_back(uniform_int(rng, 1, 6));
        for (int t = 1; t < frames; ++t) reals.push_back(uniform_int(rng, 0, 6));
        std::bernoulli_distribution keep(0.5);
        std::vector<MatchMatrix> hops;
        std::vector<SpatialMask> masks;
        Path path;
        for (int t = 0; t < frames; ++t) path.frames.push_back(t + 1);
        for (int k = 0; k + 1 < frames; ++k) {
            const int r = reals[static_cast<std::size_t>(k)], c = reals[static_cast<std::size_t>(k + 1)];
            hops.push_back({k + 1, k + 2, random_match(rng, r, c)});
            SpatialMask m{k + 1, k + 2, Eigen::MatrixXd::Ones(r + 1, c + 1)};
            for (int i = 0; i < r; ++i) {
                for (int j = 0; j < c; ++j) m.allowed(i, j) = keep(rng) ? 1.0 : 0.0;
            }
            masks.push_back(std::move(m));
        }
        const auto q = path_distribution({1, uniform_int(rng, 0, reals[0] - 1)}, path, hops, masks);
        if (q.q.size() != reals.back() + 1) return "wrong length";
        if ((q.q.array() < 0.0).any()) return "negative mass";
        if (std::abs(q.q.sum() - 1.0) > 1e-12) return "sum " + std::to_string(q.q.sum());
        return {};
    });
}

inline PropertyResult one_to_one_floor(int cases, std::uint64_t seed) {
    return run_property("one_to_one_floor", cases, seed, [](Rng& rng, int) -> std::string {
        std::vector<MatchMatrix> ms;
        const int n = uniform_int(rng, 1, 4);
        for (int k = 0; k < n; ++k) ms.push_back({1, 2, random_match(rng, uniform_int(rng, 0, 8), uniform_int(rng, 1, 8))});
        const double v = one_to_one_loss(ms);
        if (!(v >= 1.0 - 1e-15)) return "value " + std::to_string(v) + " below 1";
        return {};
    });
}

inline PropertyResult bidirectional_symmetry(int cases, std::uint64_t seed) {
    return run_property("bidirectional_symmetry", cases, seed, [](Rng& rng, int) -> std::string {
        const int r = uniform_int(rng, 1, 8), c = uniform_int(rng, 1, 8);
        const Eigen::MatrixXd F = random_match(rng, r, c);
        Eigen::MatrixXd B = Eigen::MatrixXd::Zero(c + 1, r + 1);
        B.topLeftCorner(c, r) = F.topLeftCorner(r, c).transpose();
        B(c, r) = 1.0;
        const std::vector<DirectionalPair> sym{{{1, 2, F}, {2, 1, B}}};
        if (bidirectional_loss(sym) != 0.0) return "nonzero at symmetry";
        const std::vector<DirectionalPair> other{{{1, 2, F}, {2, 1, random_match(rng, c, r)}}};
        if (!(bidirectional_loss(other) >= 0.0)) return "negative";
        return {};
    });
}

namespace detail {

inline std::vector<FrameObjects> wandering_frames(Rng& rng, int frames, int dim) {
    std::vector<FrameObjects> out;
    const int ids = uniform_int(rng, 1, 6);
    std::vector<Box> boxes;
    for (int k = 0; k < ids; ++k) boxes.push_back(random_box(rng));
    std::normal_distribution<double> step(0.0, 6.0);
    std::bernoulli_distribution show(0.8);
    for (int t = 1; t <= frames; ++t) {
        std::vector<Detection> dets;
        for (auto& b : boxes) {
            const double dx = step(rng), dy = step(rng);
            b = make_box(b.left + dx, b.top + dy, b.right + dx, b.bottom + dy, b.confidence);
            if (show(rng)) dets.push_back(Detection::real(t, b, random_vector(rng, dim)));
        }
        if (show(rng)) dets.push_back(Detection::real(t, random_box(rng), random_vector(rng, dim)));
        out.emplace_back(t, std::move(dets));
    }
    return out;
}

}  // namespace detail

inline PropertyResult assignment_uniqueness(int cases, std::uint64_t seed) {
    return run_property("assignment_uniqueness", cases, seed, [](Rng& rng, int k) -> std::string {
        // Solver level: a random rectangle.
        const int r = uniform_int(rng, 1, 7), c = uniform_int(rng, 1, 7);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Eigen::MatrixXd score(r, c);
        for (int i = 0; i < r; ++i) {
            for (int j = 0; j < c; ++j) score(i, j) = u(rng);
        }
        const Assignment a = solve_max_assignment(score);
        std::set<int> cols;
        int assigned = 0;
        for (int j : a.row_to_col) {
            if (j < 0) continue;
            ++assigned;
            if (!cols.insert(j).second) return "column used twice";
        }
        if (assigned != std::min(r, c)) return "not maximal";
        // Tracker level: detections and tracklets pair at most once per frame.
        TrackerConfig tc;
        tc.blend_weight = k % 2 == 0 ? 0.0 : 0.5;
        const ModelParams p = small_model(rng(), 2);
        Tracker tracker(tc.blend_weight > 0 ? &p : nullptr, tc);
        for (const auto& f : detail::wandering_frames(rng, 6, 2)) {
            const auto recs = tracker.step(f);
            if (recs.size() != f.real_count()) return "detection left unassigned";
            std::set<int> ids, dets;
            for (const auto& rec : recs) {
                if (!ids.insert(rec.track_id).second) return "track used twice in a frame";
                if (!dets.insert(rec.detection_index).second) return "detection used twice";
            }
        }
        return {};
    });
}

inline PropertyResult id_non_reuse(int cases, std::uint64_t seed) {
    return run_property("id_non_reuse", cases, seed, [](Rng& rng, int k) -> std::string {
        TrackerConfig tc;
        tc.blend_weight = k % 2 == 0 ? 0.0 : 0.5;
        tc.buffer_frames = uniform_int(rng, 0, 3);
        const ModelParams p = small_model(rng(), 2);
        const auto frames = detail::wandering_frames(rng, 10, 2);
        const auto result = run_tracker(frames, tc.blend_weight > 0 ? &p : nullptr, tc);
        std::set<int> seen;
        int last_new = 0;
        for (const auto& rec : result.log) {
            if (rec.new_track) {
                if (seen.count(rec.track_id)) return "id " + std::to_string(rec.track_id) + " reissued";
                if (rec.track_id <= last_new) return "ids not increasing";
                last_new = rec.track_id;
            } else if (!seen.count(rec.track_id)) {
                return "continued an unknown id";
            }
            seen.insert(rec.track_id);
        }
        return {};
    });
}

inline PropertyResult mot_round_trip(int cases, std::uint64_t seed) {
    return run_property("mot_round_trip", cases, seed, [](Rng& rng, int) -> std::string {
        std::vector<MotRecord> records;
        const int n = uniform_int(rng, 0, 30);
        const int dim = uniform_int(rng, 0, 3);
        for (int k = 0; k < n; ++k) {
            MotRecord m;
            m.frame = uniform_int(rng, 1, 50);
            m.id = uniform_int(rng, -1, 20);
            m.box = random_box(rng);
            m.appearance = random_vector(rng, dim);
            records.push_back(m);
        }
        std::stringstream buf;
        write_mot(buf, records);
        const auto back = read_mot_records(buf);
        if (back.size() != records.size()) return "record count changed";
        for (std::size_t k = 0; k < back.size(); ++k) {
            const auto& a = records[k];
            const auto& b = back[k];
            if (a.frame != b.frame || a.id != b.id) return "frame or id changed";
            if (std::abs(a.box.left - b.box.left) > 0.005 + 1e-9 || std::abs(a.box.top - b.box.top) > 0.005 + 1e-9 ||
                std::abs(a.box.right - b.box.right) > 0.01 + 1e-9 ||
                std::abs(a.box.bottom - b.box.bottom) > 0.01 + 1e-9) {
                return "box moved";
            }
            if (b.appearance.size() != a.appearance.size()) return "appearance length changed";
            if (dim > 0 && (a.appearance - b.appearance).cwiseAbs().maxCoeff() > 1e-5 * (1 + a.appearance.cwiseAbs().maxCoeff())) {
                return "appearance changed";
            }
        }
        std::stringstream again;
        write_mot(again, back);
        if (again.str() != buf.str()) return "second write differs";
        return {};
    });
}

inline std::vector<PropertyResult> invariant_suite(int cases, std::uint64_t seed) {
    return {row_stochasticity(cases, seed),      distribution_normalization(cases, seed),
            one_to_one_floor(cases, seed),       bidirectional_symmetry(cases, seed),
            assignment_uniqueness(cases, seed),  id_non_reuse(cases, seed),
            mot_round_trip(cases, seed)};
}

}  // namespace pcmot::support
