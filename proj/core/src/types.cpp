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

#include "pcmot/types.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace pcmot {

Detection Detection::real(int frame, const Box& box, Eigen::VectorXd appearance,
                          std::optional<int> gt_identity) {
    Detection det;
    det.frame = frame;
    det.box = box;
    det.appearance = std::move(appearance);
    det.gt_identity = gt_identity;
    return det;
}

Detection Detection::null_object(int frame) {
    Detection det;
    det.frame = frame;
    det.is_null = true;
    return det;
}

FrameObjects::FrameObjects(int frame, std::vector<Detection> reals) : frame_(frame) {
    detections_ = std::move(reals);
    for (std::size_t i = 0; i < detections_.size(); ++i) {
        auto& det = detections_[i];
        if (det.is_null || !det.box) {
            throw ShapeError("frame " + std::to_string(frame) +
                             ": real detection list contains a null object");
        }
        det.frame = frame;
        det.local_index = static_cast<int>(i);
    }
    Detection null_det = Detection::null_object(frame);
    null_det.local_index = static_cast<int>(detections_.size());
    detections_.push_back(std::move(null_det));
}

Clip::Clip(std::vector<FrameObjects> frames) : frames_(std::move(frames)) {
    for (std::size_t i = 1; i < frames_.size(); ++i) {
        if (frames_[i].frame() != frames_[i - 1].frame() + 1) {
            throw ShapeError("clip frames must be contiguous: frame " +
                             std::to_string(frames_[i - 1].frame()) + " followed by " +
                             std::to_string(frames_[i].frame()));
        }
    }
}

Clip Clip::from_sparse(const std::vector<FrameObjects>& frames, int first_frame, int last_frame) {
    std::map<int, const FrameObjects*> by_frame;
    for (const auto& f : frames) {
        if (f.frame() < first_frame || f.frame() > last_frame) {
            throw ShapeError("frame " + std::to_string(f.frame()) + " outside [" +
                             std::to_string(first_frame) + ", " + std::to_string(last_frame) + "]");
        }
        if (!by_frame.emplace(f.frame(), &f).second) {
            throw ShapeError("duplicate frame " + std::to_string(f.frame()));
        }
    }
    std::vector<FrameObjects> dense;
    dense.reserve(static_cast<std::size_t>(std::max(0, last_frame - first_frame + 1)));
    for (int t = first_frame; t <= last_frame; ++t) {
        auto it = by_frame.find(t);
        dense.push_back(it != by_frame.end() ? *it->second : FrameObjects(t, {}));
    }
    return Clip(std::move(dense));
}

Clip Clip::from_sparse(const std::vector<FrameObjects>& frames) {
    if (frames.empty()) return Clip();
    int lo = frames.front().frame();
    int hi = lo;
    for (const auto& f : frames) {
        lo = std::min(lo, f.frame());
        hi = std::max(hi, f.frame());
    }
    return from_sparse(frames, lo, hi);
}

Clip Clip::slice(std::size_t begin, std::size_t count) const {
    if (begin + count > frames_.size()) {
        throw ShapeError("clip slice [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") exceeds length " +
                         std::to_string(frames_.size()));
    }
    return Clip(std::vector<FrameObjects>(frames_.begin() + static_cast<std::ptrdiff_t>(begin),
                                          frames_.begin() +
                                              static_cast<std::ptrdiff_t>(begin + count)));
}

double Clip::mean_real_count() const noexcept {
    if (frames_.empty()) return 0.0;
    double total = 0.0;
    for (const auto& f : frames_) total += static_cast<double>(f.real_count());
    return total / static_cast<double>(frames_.size());
}

}  // namespace pcmot
