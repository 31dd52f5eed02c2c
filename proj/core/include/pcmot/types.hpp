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

#include "pcmot/geometry.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace pcmot {

// One localized object in one frame. The null object of a frame carries no
// box and no appearance. gt_identity is filled by the simulator and by MOT
// ground-truth files; no model or loss code reads it.
struct Detection {
    int frame = 0;
    int local_index = 0;
    std::optional<Box> box;
    Eigen::VectorXd appearance;
    bool is_null = false;
    std::optional<int> gt_identity;

    static Detection real(int frame, const Box& box, Eigen::VectorXd appearance = {},
                          std::optional<int> gt_identity = std::nullopt);
    static Detection null_object(int frame);
};

// All objects of a single frame; the null object is always the last entry.
class FrameObjects {
public:
    FrameObjects() : FrameObjects(0, {}) {}

    // Takes the real detections of a frame, renumbers them and appends the
    // null object. Throws ShapeError if any entry is null.
    FrameObjects(int frame, std::vector<Detection> reals);

    int frame() const noexcept { return frame_; }
    std::size_t size() const noexcept { return detections_.size(); }
    std::size_t real_count() const noexcept { return detections_.size() - 1; }
    std::size_t null_index() const noexcept { return detections_.size() - 1; }

    const Detection& operator[](std::size_t i) const { return detections_[i]; }
    const std::vector<Detection>& detections() const noexcept { return detections_; }
    std::span<const Detection> reals() const noexcept {
        return {detections_.data(), real_count()};
    }

    // Copy without the real detections for which drop(det) is true.
    template <typename Pred>
    FrameObjects without(Pred drop) const {
        std::vector<Detection> kept;
        kept.reserve(real_count());
        for (const auto& det : reals()) {
            if (!drop(det)) kept.push_back(det);
        }
        return FrameObjects(frame_, std::move(kept));
    }

private:
    int frame_;
    std::vector<Detection> detections_;
};

// A run of contiguous frames.
class Clip {
public:
    Clip() = default;
    // Throws ShapeError if frame indices are not strictly increasing and
    // contiguous.
    explicit Clip(std::vector<FrameObjects> frames);

    // Builds a contiguous clip over [first_frame, last_frame] from frames that
    // may have gaps (e.g. frames without rows in a MOT file); missing frames
    // become null-only frames.
    static Clip from_sparse(const std::vector<FrameObjects>& frames, int first_frame,
                            int last_frame);
    static Clip from_sparse(const std::vector<FrameObjects>& frames);

    std::size_t length() const noexcept { return frames_.size(); }
    bool empty() const noexcept { return frames_.empty(); }
    int first_frame() const noexcept { return frames_.empty() ? 0 : frames_.front().frame(); }
    int last_frame() const noexcept { return frames_.empty() ? -1 : frames_.back().frame(); }

    // Position of an absolute frame index within the clip.
    std::size_t position(int frame) const noexcept {
        return static_cast<std::size_t>(frame - first_frame());
    }
    const FrameObjects& at_frame(int frame) const { return frames_.at(position(frame)); }

    const FrameObjects& operator[](std::size_t pos) const { return frames_[pos]; }
    const std::vector<FrameObjects>& frames() const noexcept { return frames_; }

    // Sub-clip covering positions [begin, begin + count).
    Clip slice(std::size_t begin, std::size_t count) const;

    // Mean number of real objects per frame.
    double mean_real_count() const noexcept;

private:
    std::vector<FrameObjects> frames_;
};

}  // namespace pcmot
