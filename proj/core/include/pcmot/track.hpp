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

#include "pcmot/kv_config.hpp"
#include "pcmot/model.hpp"
#include "pcmot/mot_io.hpp"
#include "pcmot/types.hpp"

#include <deque>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

namespace pcmot {

struct TrackerConfig {
    int history = 4;           // M
    int buffer_frames = 30;
    double new_track_threshold = 0.3;
    double blend_weight = 0.5;  // 1 = learned similarity only, 0 = IoU only
    double prob_floor = 1e-12;
    bool greedy = false;

    void validate() const;
    static TrackerConfig from_config(const KeyValueConfig& kv);
    static TrackerConfig from_config(const KeyValueConfig& kv, const TrackerConfig& defaults);
    void write_to(KeyValueConfig& kv) const;
};

enum class TrackState { active, buffered };

struct TrackletEntry {
    int frame = 0;
    int local_index = 0;
    Box box;
};

struct Tracklet {
    int track_id = 0;
    std::deque<TrackletEntry> history;  // oldest first, at most M entries
    int last_seen_frame = 0;
    TrackState state = TrackState::active;
};

struct AssignmentRecord {
    int frame = 0;
    int track_id = 0;
    int detection_index = 0;
    double score = 0.0;
    double similarity = 0.0;
    double motion = 0.0;
    bool new_track = false;
};

// (1/M') sum_m sqrt(max(pf_m, floor) * max(pb_m, floor)) over the history.
double geometric_mean_similarity(std::span<const double> forward,
                                 std::span<const double> backward, double floor);

class Tracker {
public:
    // params may be null only when blend_weight == 0.
    Tracker(const ModelParams* params, TrackerConfig config);

    // Assigns the frame's real detections. Frames must arrive in strictly
    // increasing order (ContractError otherwise).
    std::vector<AssignmentRecord> step(const FrameObjects& frame);

    // Geometric-mean match similarity between a tracklet and a detection of the frame
    // passed to the most recent step() call.
    double similarity(const Tracklet& tracklet, int detection_index) const;

    const std::vector<Tracklet>& tracklets() const noexcept { return tracklets_; }
    int issued_ids() const noexcept { return next_id_ - 1; }

private:
    const EmbeddingMatrix& embedding(int frame) const;
    double probability(int src_frame, int src_index, int dst_frame, int dst_index) const;

    const ModelParams* params_;
    TrackerConfig config_;
    std::vector<Tracklet> tracklets_;
    std::map<int, EmbeddingMatrix> embeddings_;
    mutable std::map<std::pair<int, int>, MatchMatrix> match_cache_;
    int next_id_ = 1;
    int last_frame_ = 0;
    bool started_ = false;
};

struct TrackResult {
    std::vector<MotRecord> tracks;
    std::vector<AssignmentRecord> log;
};

TrackResult run_tracker(std::span<const FrameObjects> frames, const ModelParams* params,
                        const TrackerConfig& config);

// frame,track_id,detection_index,score,similarity,motion,new_track
void write_assignment_log(const std::filesystem::path& path,
                          std::span<const AssignmentRecord> log);

}  // namespace pcmot
