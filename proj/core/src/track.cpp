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

#include "pcmot/track.hpp"

#include "pcmot/assignment.hpp"
#include "pcmot/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace pcmot {

namespace {

// Largest frame gap (current - last seen) at which the IoU term still applies.
constexpr int kMotionGap = 2;

}  // namespace

void TrackerConfig::validate() const {
    if (history < 1) throw ConfigError("invalid tracker config 'history': must be >= 1");
    if (buffer_frames < 0) throw ConfigError("invalid tracker config 'buffer_frames': must be >= 0");
    if (!(blend_weight >= 0.0 && blend_weight <= 1.0)) {
        throw ConfigError("invalid tracker config 'blend_weight': must be in [0, 1]");
    }
    if (!(prob_floor > 0.0 && prob_floor < 1.0)) {
        throw ConfigError("invalid tracker config 'prob_floor': must be in (0, 1)");
    }
    if (!std::isfinite(new_track_threshold)) {
        throw ConfigError("invalid tracker config 'new_track_threshold': must be finite");
    }
}

TrackerConfig TrackerConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, TrackerConfig{}); }

TrackerConfig TrackerConfig::from_config(const KeyValueConfig& kv, const TrackerConfig& d) {
    TrackerConfig c = d;
    c.history = static_cast<int>(kv.get_int("history", d.history));
    c.buffer_frames = static_cast<int>(kv.get_int("buffer_frames", d.buffer_frames));
    c.new_track_threshold = kv.get_double("new_track_threshold", d.new_track_threshold);
    c.blend_weight = kv.get_double("blend_weight", d.blend_weight);
    c.prob_floor = kv.get_double("prob_floor", d.prob_floor);
    c.greedy = kv.get_bool("greedy", d.greedy);
    c.validate();
    return c;
}

void TrackerConfig::write_to(KeyValueConfig& kv) const {
    kv.set("history", std::to_string(history));
    kv.set("buffer_frames", std::to_string(buffer_frames));
    kv.set_number("new_track_threshold", new_track_threshold);
    kv.set_number("blend_weight", blend_weight);
    kv.set_number("prob_floor", prob_floor);
    kv.set("greedy", greedy ? "true" : "false");
}

double geometric_mean_similarity(std::span<const double> forward, std::span<const double> backward,
                                 double floor) {
    if (forward.size() != backward.size()) throw ShapeError("similarity: forward/backward length mismatch");
    if (forward.empty()) throw ShapeError("similarity: empty tracklet history");
    double total = 0.0;
    for (std::size_t m = 0; m < forward.size(); ++m) {
        total += std::sqrt(std::max(forward[m], floor) * std::max(backward[m], floor));
    }
    return total / static_cast<double>(forward.size());
}

Tracker::Tracker(const ModelParams* params, TrackerConfig config) : params_(params), config_(config) {
    config_.validate();
    if (params_ == nullptr && config_.blend_weight > 0.0) {
        throw ConfigError("tracker needs model parameters when blend_weight > 0");
    }
}

const EmbeddingMatrix& Tracker::embedding(int frame) const {
    const auto it = embeddings_.find(frame);
    if (it == embeddings_.end()) throw ContractError("no embedding cached for frame " + std::to_string(frame));
    return it->second;
}

double Tracker::probability(int src_frame, int src_index, int dst_frame, int dst_index) const {
    const auto key = std::make_pair(src_frame, dst_frame);
    auto it = match_cache_.find(key);
    if (it == match_cache_.end()) {
        it = match_cache_.emplace(key, match_matrix(embedding(src_frame), embedding(dst_frame))).first;
    }
    return it->second.P(src_index, dst_index);
}

double Tracker::similarity(const Tracklet& tracklet, int detection_index) const {
    std::vector<double> forward;
    std::vector<double> backward;
    forward.reserve(tracklet.history.size());
    backward.reserve(tracklet.history.size());
    for (const auto& entry : tracklet.history) {
        forward.push_back(probability(entry.frame, entry.local_index, last_frame_, detection_index));
        backward.push_back(probability(last_frame_, detection_index, entry.frame, entry.local_index));
    }
    return geometric_mean_similarity(forward, backward, config_.prob_floor);
}

std::vector<AssignmentRecord> Tracker::step(const FrameObjects& frame) {
    if (started_ && frame.frame() <= last_frame_) {
        throw ContractError("tracker received frame " + std::to_string(frame.frame()) + " after frame " +
                            std::to_string(last_frame_));
    }
    started_ = true;
    last_frame_ = frame.frame();
    const int now = frame.frame();

    std::erase_if(tracklets_, [&](const Tracklet& t) { return now - t.last_seen_frame - 1 > config_.buffer_frames; });

    const bool learned = config_.blend_weight > 0.0;
    match_cache_.clear();
    if (learned) {
        std::set<int> live;
        for (const auto& t : tracklets_) {
            for (const auto& e : t.history) live.insert(e.frame);
        }
        std::erase_if(embeddings_, [&](const auto& kv) { return live.count(kv.first) == 0; });
        embeddings_[now] = embed_frame(*params_, frame);
    }

    const std::size_t n_tracks = tracklets_.size();
    const std::size_t n_dets = frame.real_count();
    Eigen::MatrixXd score = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_tracks), static_cast<Eigen::Index>(n_dets));
    Eigen::MatrixXd sim = score;
    Eigen::MatrixXd motion = score;
    for (std::size_t i = 0; i < n_tracks; ++i) {
        const Tracklet& t = tracklets_[i];
        const bool recent = now - t.last_seen_frame <= kMotionGap;
        for (std::size_t j = 0; j < n_dets; ++j) {
            const auto r = static_cast<Eigen::Index>(i);
            const auto c = static_cast<Eigen::Index>(j);
            if (learned) sim(r, c) = similarity(t, static_cast<int>(j));
            if (recent) motion(r, c) = iou(t.history.back().box, *frame[j].box);
            score(r, c) = config_.blend_weight * sim(r, c) + (1.0 - config_.blend_weight) * motion(r, c);
        }
    }

    // Pairs under the threshold cannot be accepted, so they carry no gain.
    Eigen::MatrixXd gain = (score.array() >= config_.new_track_threshold).select(score, 0.0);
    std::vector<int> det_to_track(n_dets, -1);
    if (n_tracks > 0 && n_dets > 0) {
        const Assignment a = config_.greedy ? solve_greedy_assignment(gain) : solve_max_assignment(gain);
        for (std::size_t i = 0; i < n_tracks; ++i) {
            const int j = a.row_to_col[i];
            if (j < 0) continue;
            if (score(static_cast<Eigen::Index>(i), j) < config_.new_track_threshold) continue;
            det_to_track[static_cast<std::size_t>(j)] = static_cast<int>(i);
        }
    }

    std::vector<char> matched(n_tracks, 0);
    std::vector<AssignmentRecord> records;
    records.reserve(n_dets);
    std::vector<Tracklet> fresh;
    for (std::size_t j = 0; j < n_dets; ++j) {
        const TrackletEntry entry{now, static_cast<int>(j), *frame[j].box};
        AssignmentRecord rec;
        rec.frame = now;
        rec.detection_index = static_cast<int>(j);
        const int i = det_to_track[j];
        if (i >= 0) {
            Tracklet& t = tracklets_[static_cast<std::size_t>(i)];
            matched[static_cast<std::size_t>(i)] = 1;
            t.history.push_back(entry);
            while (t.history.size() > static_cast<std::size_t>(config_.history)) t.history.pop_front();
            t.last_seen_frame = now;
            t.state = TrackState::active;
            rec.track_id = t.track_id;
            rec.score = score(i, static_cast<Eigen::Index>(j));
            rec.similarity = sim(i, static_cast<Eigen::Index>(j));
            rec.motion = motion(i, static_cast<Eigen::Index>(j));
        } else {
            Tracklet t;
            t.track_id = next_id_++;
            t.history.push_back(entry);
            t.last_seen_frame = now;
            rec.track_id = t.track_id;
            rec.new_track = true;
            fresh.push_back(std::move(t));
        }
        records.push_back(rec);
    }
    for (std::size_t i = 0; i < n_tracks; ++i) {
        if (!matched[i]) tracklets_[i].state = TrackState::buffered;
    }
    for (auto& t : fresh) tracklets_.push_back(std::move(t));
    return records;
}

TrackResult run_tracker(std::span<const FrameObjects> frames, const ModelParams* params,
                        const TrackerConfig& config) {
    Tracker tracker(params, config);
    TrackResult result;
    for (const auto& frame : frames) {
        auto records = tracker.step(frame);
        for (const auto& rec : records) {
            MotRecord m;
            m.frame = rec.frame;
            m.id = rec.track_id;
            m.box = *frame[static_cast<std::size_t>(rec.detection_index)].box;
            result.tracks.push_back(std::move(m));
        }
        result.log.insert(result.log.end(), records.begin(), records.end());
    }
    return result;
}

void write_assignment_log(const std::filesystem::path& path, std::span<const AssignmentRecord> log) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "frame,track_id,detection_index,score,similarity,motion,new_track\n";
    char buf[256];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.10g,%.10g,%.10g,%d\n", r.frame, r.track_id,
                      r.detection_index, r.score, r.similarity, r.motion, r.new_track ? 1 : 0);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace pcmot
