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

#include "pcmot/model.hpp"
#include "pcmot/mot_io.hpp"
#include "pcmot/sim.hpp"
#include "pcmot/track.hpp"
#include "pcmot/types.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace pcmot::eval {

struct IdMetrics {
    double idf1 = 0.0;
    int idsw = 0;
    long long idtp = 0;
    long long idfp = 0;
    long long idfn = 0;
};

// Identity metrics. Per frame, a gt box and a predicted box overlap when their
// IoU >= iou_threshold; gt and predicted identities are mapped one-to-one to
// maximize the number of overlapping frames, giving IDTP/IDFP/IDFN and
// IDF1 = 2 IDTP / (2 IDTP + IDFP + IDFN). IDsw counts, per gt identity, the
// changes of matched predicted id between consecutive matched frames (CLEAR
// per-frame matching that keeps previous correspondences).
// Throws ShapeError when predictions reference frames outside the gt range.
IdMetrics id_metrics(std::span<const MotRecord> gt, std::span<const MotRecord> pred,
                     double iou_threshold = 0.5);
IdMetrics idf1(const sim::Scene& gt, std::span<const MotRecord> pred);

struct DistanceBucket {
    int lo = 1;
    int hi = 4;
    std::string label() const;
};

std::vector<DistanceBucket> default_buckets();  // 1-4, 5-8, 9-16, 17-32, 33-48

struct BucketAccuracy {
    DistanceBucket bucket;
    long long hits = 0;
    long long total = 0;
    double percent() const { return total ? 100.0 * double(hits) / double(total) : 0.0; }
};

// Match probabilities between two frames: rows are src objects (null last),
// columns dst objects (null last).
using Matcher = std::function<Eigen::MatrixXd(const FrameObjects& src, const FrameObjects& dst)>;

Matcher model_matcher(const ModelParams& params);

// For every real object with a gt identity and every later frame r within
// the largest bucket distance, a hit when the argmax of its match row is the
// object with the same identity at r (or null when the identity is absent).
// Empty buckets are omitted from the result.
std::vector<BucketAccuracy> match_accuracy_by_distance(const Matcher& matcher, const Clip& gt_clip,
                                                       std::span<const DistanceBucket> buckets);
std::vector<BucketAccuracy> match_accuracy_by_distance(const ModelParams& params,
                                                       const Clip& gt_clip,
                                                       std::span<const DistanceBucket> buckets);

struct SweepPoint {
    int L = 0;
    IdMetrics metrics;
};

struct OcclusionSweep {
    std::vector<SweepPoint> learned;   // configured tracker
    std::vector<SweepPoint> baseline;  // same tracker with blend_weight = 0
};

// For each L: extend the scene's occlusions, track the detections, and score
// against the extended scene, whose deleted boxes count as occluded.
OcclusionSweep occlusion_sweep(const ModelParams& params, const sim::Scene& scene,
                               std::span<const int> L_values, const TrackerConfig& tracker);

std::vector<int> default_occlusion_lengths();  // 0, 10, ..., 60

struct EvalReport {
    std::optional<IdMetrics> ids;
    std::vector<BucketAccuracy> accuracy;
    std::map<int, double> idf1_by_L;  // learned tracker
    std::map<int, double> baseline_idf1_by_L;

    // metric,key,value rows
    void write_csv(std::ostream& out) const;
    void write_csv(const std::filesystem::path& path) const;
    void print_summary(std::ostream& out) const;
};

}  // namespace pcmot::eval
