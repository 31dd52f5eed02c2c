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

#include "pcmot/eval.hpp"

#include "pcmot/assignment.hpp"
#include "pcmot/error.hpp"
#include "pcmot/geometry.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>

namespace pcmot::eval {

namespace {

struct FrameBoxes {
    std::vector<int> ids;
    std::vector<Box> boxes;
};

std::map<int, FrameBoxes> by_frame(std::span<const MotRecord> records) {
    std::map<int, FrameBoxes> frames;
    for (const auto& r : records) {
        auto& f = frames[r.frame];
        f.ids.push_back(r.id);
        f.boxes.push_back(r.box);
    }
    return frames;
}

std::map<int, int> index_ids(std::span<const MotRecord> records) {
    std::map<int, int> index;
    for (const auto& r : records) index.emplace(r.id, 0);
    int k = 0;
    for (auto& [id, slot] : index) slot = k++;
    return index;
}

int count_switches(const std::map<int, FrameBoxes>& gt, const std::map<int, FrameBoxes>& pred,
                   double iou_threshold) {
    std::map<int, int> current;  // gt id -> pred id matched in the previous frame it was matched
    std::map<int, int> last;     // gt id -> last matched pred id
    int switches = 0;
    for (const auto& [frame, g] : gt) {
        const auto it = pred.find(frame);
        if (it == pred.end()) {
            current.clear();
            continue;
        }
        const FrameBoxes& p = it->second;
        std::vector<char> g_used(g.ids.size(), 0);
        std::vector<char> p_used(p.ids.size(), 0);
        std::map<int, int> matched;
        // Keep correspondences from the previous frame while they still overlap.
        for (std::size_t i = 0; i < g.ids.size(); ++i) {
            const auto prev = current.find(g.ids[i]);
            if (prev == current.end()) continue;
            for (std::size_t j = 0; j < p.ids.size(); ++j) {
                if (p_used[j] || p.ids[j] != prev->second) continue;
                if (iou(g.boxes[i], p.boxes[j]) >= iou_threshold) {
                    g_used[i] = p_used[j] = 1;
                    matched[g.ids[i]] = p.ids[j];
                }
                break;
            }
        }
        std::vector<std::size_t> gi, pj;
        for (std::size_t i = 0; i < g.ids.size(); ++i) {
            if (!g_used[i]) gi.push_back(i);
        }
        for (std::size_t j = 0; j < p.ids.size(); ++j) {
            if (!p_used[j]) pj.push_back(j);
        }
        if (!gi.empty() && !pj.empty()) {
            Eigen::MatrixXd score(static_cast<Eigen::Index>(gi.size()), static_cast<Eigen::Index>(pj.size()));
            for (std::size_t a = 0; a < gi.size(); ++a) {
                for (std::size_t b = 0; b < pj.size(); ++b) {
                    const double v = iou(g.boxes[gi[a]], p.boxes[pj[b]]);
                    score(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = v >= iou_threshold ? v : 0.0;
                }
            }
            const Assignment asg = solve_max_assignment(score);
            for (std::size_t a = 0; a < gi.size(); ++a) {
                const int b = asg.row_to_col[a];
                if (b < 0 || score(static_cast<Eigen::Index>(a), b) <= 0.0) continue;
                matched[g.ids[gi[a]]] = p.ids[pj[static_cast<std::size_t>(b)]];
            }
        }
        for (const auto& [gid, pid] : matched) {
            const auto prev = last.find(gid);
            if (prev != last.end() && prev->second != pid) ++switches;
            last[gid] = pid;
        }
        current = std::move(matched);
    }
    return switches;
}

}  // namespace

IdMetrics id_metrics(std::span<const MotRecord> gt, std::span<const MotRecord> pred, double iou_threshold) {
    const auto gt_frames = by_frame(gt);
    const auto pred_frames = by_frame(pred);
    if (!pred_frames.empty()) {
        if (gt_frames.empty()) throw ShapeError("id_metrics: predictions given for an empty ground truth");
        const int lo = gt_frames.begin()->first;
        const int hi = gt_frames.rbegin()->first;
        if (pred_frames.begin()->first < lo || pred_frames.rbegin()->first > hi) {
            throw ShapeError("id_metrics: prediction frames outside ground truth range " + std::to_string(lo) +
                             ".." + std::to_string(hi));
        }
    }
    const auto gt_index = index_ids(gt);
    const auto pred_index = index_ids(pred);

    IdMetrics m;
    Eigen::MatrixXd overlap = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(gt_index.size()),
                                                    static_cast<Eigen::Index>(pred_index.size()));
    for (const auto& [frame, g] : gt_frames) {
        const auto it = pred_frames.find(frame);
        if (it == pred_frames.end()) continue;
        const FrameBoxes& p = it->second;
        for (std::size_t i = 0; i < g.ids.size(); ++i) {
            for (std::size_t j = 0; j < p.ids.size(); ++j) {
                if (iou(g.boxes[i], p.boxes[j]) >= iou_threshold) {
                    overlap(gt_index.at(g.ids[i]), pred_index.at(p.ids[j])) += 1.0;
                }
            }
        }
    }
    long long idtp = 0;
    if (overlap.rows() > 0 && overlap.cols() > 0) {
        const Assignment a = solve_max_assignment(overlap);
        for (std::size_t i = 0; i < a.row_to_col.size(); ++i) {
            if (a.row_to_col[i] >= 0) idtp += static_cast<long long>(overlap(static_cast<Eigen::Index>(i), a.row_to_col[i]));
        }
    }
    m.idtp = idtp;
    m.idfn = static_cast<long long>(gt.size()) - idtp;
    m.idfp = static_cast<long long>(pred.size()) - idtp;
    const double denom = static_cast<double>(gt.size() + pred.size());
    m.idf1 = denom > 0.0 ? 2.0 * static_cast<double>(idtp) / denom : 1.0;
    m.idsw = count_switches(gt_frames, pred_frames, iou_threshold);
    return m;
}

IdMetrics idf1(const sim::Scene& gt, std::span<const MotRecord> pred) {
    const auto records = clip_records(gt.clip, true, false);
    return id_metrics(records, pred);
}

std::string DistanceBucket::label() const { return std::to_string(lo) + "-" + std::to_string(hi); }

std::vector<DistanceBucket> default_buckets() { return {{1, 4}, {5, 8}, {9, 16}, {17, 32}, {33, 48}}; }

Matcher model_matcher(const ModelParams& params) {
    return [&params](const FrameObjects& src, const FrameObjects& dst) {
        return match_matrix(embed_frame(params, src), embed_frame(params, dst)).P;
    };
}

namespace {

std::vector<BucketAccuracy> accuracy_from(const Clip& clip, std::span<const DistanceBucket> buckets,
                                          const std::function<Eigen::MatrixXd(std::size_t, std::size_t)>& match) {
    int max_d = 0;
    for (const auto& b : buckets) {
        if (b.lo < 1 || b.hi < b.lo) throw ConfigError("invalid distance bucket " + b.label());
        max_d = std::max(max_d, b.hi);
    }
    std::vector<BucketAccuracy> acc;
    for (const auto& b : buckets) acc.push_back({b, 0, 0});
    const std::size_t T = clip.length();
    for (std::size_t t = 0; t < T; ++t) {
        if (clip[t].real_count() == 0) continue;
        for (std::size_t r = t + 1; r < T && r - t <= static_cast<std::size_t>(max_d); ++r) {
            const int d = static_cast<int>(r - t);
            std::vector<std::size_t> hit_buckets;
            for (std::size_t k = 0; k < buckets.size(); ++k) {
                if (d >= buckets[k].lo && d <= buckets[k].hi) hit_buckets.push_back(k);
            }
            if (hit_buckets.empty()) continue;
            const Eigen::MatrixXd P = match(t, r);
            for (std::size_t i = 0; i < clip[t].real_count(); ++i) {
                const auto& id = clip[t][i].gt_identity;
                if (!id) continue;
                std::size_t target = clip[r].null_index();
                for (std::size_t j = 0; j < clip[r].real_count(); ++j) {
                    if (clip[r][j].gt_identity == id) {
                        target = j;
                        break;
                    }
                }
                Eigen::Index best = 0;
                P.row(static_cast<Eigen::Index>(i)).maxCoeff(&best);
                const bool hit = static_cast<std::size_t>(best) == target;
                for (const auto k : hit_buckets) {
                    acc[k].total += 1;
                    acc[k].hits += hit ? 1 : 0;
                }
            }
        }
    }
    std::erase_if(acc, [](const BucketAccuracy& a) { return a.total == 0; });
    return acc;
}

}  // namespace

std::vector<BucketAccuracy> match_accuracy_by_distance(const Matcher& matcher, const Clip& gt_clip,
                                                       std::span<const DistanceBucket> buckets) {
    return accuracy_from(gt_clip, buckets, [&](std::size_t t, std::size_t r) {
        Eigen::MatrixXd P = matcher(gt_clip[t], gt_clip[r]);
        if (P.rows() != static_cast<Eigen::Index>(gt_clip[t].size()) ||
            P.cols() != static_cast<Eigen::Index>(gt_clip[r].size())) {
            throw ShapeError("matcher returned a matrix of the wrong shape");
        }
        return P;
    });
}

std::vector<BucketAccuracy> match_accuracy_by_distance(const ModelParams& params, const Clip& gt_clip,
                                                       std::span<const DistanceBucket> buckets) {
    std::vector<EmbeddingMatrix> embeddings;
    embeddings.reserve(gt_clip.length());
    for (const auto& frame : gt_clip.frames()) embeddings.push_back(embed_frame(params, frame));
    return accuracy_from(gt_clip, buckets,
                         [&](std::size_t t, std::size_t r) { return match_matrix(embeddings[t], embeddings[r]).P; });
}

OcclusionSweep occlusion_sweep(const ModelParams& params, const sim::Scene& scene, std::span<const int> L_values,
                               const TrackerConfig& tracker) {
    TrackerConfig baseline = tracker;
    baseline.blend_weight = 0.0;
    OcclusionSweep sweep;
    for (const int L : L_values) {
        const sim::Scene extended = sim::extend_occlusions(scene, L);
        const auto& frames = extended.clip.frames();
        const auto gt = clip_records(extended.clip, true, false);
        const TrackResult learned = run_tracker(frames, &params, tracker);
        const TrackResult plain = run_tracker(frames, nullptr, baseline);
        sweep.learned.push_back({L, id_metrics(gt, learned.tracks)});
        sweep.baseline.push_back({L, id_metrics(gt, plain.tracks)});
    }
    return sweep;
}

std::vector<int> default_occlusion_lengths() { return {0, 10, 20, 30, 40, 50, 60}; }

namespace {

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void EvalReport::write_csv(std::ostream& out) const {
    out << "metric,key,value\n";
    if (ids) {
        out << "idf1,all," << fmt(ids->idf1) << "\n";
        out << "idsw,all," << ids->idsw << "\n";
        out << "idtp,all," << ids->idtp << "\n";
        out << "idfp,all," << ids->idfp << "\n";
        out << "idfn,all," << ids->idfn << "\n";
    }
    for (const auto& a : accuracy) {
        out << "match_accuracy," << a.bucket.label() << "," << fmt(a.percent()) << "\n";
        out << "match_pairs," << a.bucket.label() << "," << a.total << "\n";
    }
    for (const auto& [L, v] : idf1_by_L) out << "idf1_by_L," << L << "," << fmt(v) << "\n";
    for (const auto& [L, v] : baseline_idf1_by_L) out << "baseline_idf1_by_L," << L << "," << fmt(v) << "\n";
}

void EvalReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_csv(out);
    if (!out) throw IoError("failed writing " + path.string());
}

void EvalReport::print_summary(std::ostream& out) const {
    char buf[128];
    if (ids) {
        std::snprintf(buf, sizeof(buf), "IDF1 %.4f  IDsw %d  (IDTP %lld, IDFP %lld, IDFN %lld)\n", ids->idf1,
                      ids->idsw, ids->idtp, ids->idfp, ids->idfn);
        out << buf;
    }
    if (!accuracy.empty()) {
        out << "matching accuracy by distance\n";
        for (const auto& a : accuracy) {
            std::snprintf(buf, sizeof(buf), "  %-6s %6.2f%%  (%lld pairs)\n", a.bucket.label().c_str(), a.percent(),
                          a.total);
            out << buf;
        }
    }
    if (!idf1_by_L.empty()) {
        out << "IDF1 by minimal occlusion length\n";
        out << "  L      learned  baseline\n";
        for (const auto& [L, v] : idf1_by_L) {
            const auto b = baseline_idf1_by_L.find(L);
            if (b == baseline_idf1_by_L.end()) {
                std::snprintf(buf, sizeof(buf), "  %-5d  %7.4f  %8s\n", L, v, "-");
            } else {
                std::snprintf(buf, sizeof(buf), "  %-5d  %7.4f  %8.4f\n", L, v, b->second);
            }
            out << buf;
        }
    }
}

}  // namespace pcmot::eval
