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
#include "pcmot/types.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace pcmot::sim {

struct SceneConfig {
    int num_identities = 10;
    int num_frames = 200;
    double arena_width = 640.0;
    double arena_height = 480.0;
    std::pair<double, double> speed_range{1.0, 4.0};      // pixels per frame
    std::pair<double, double> box_width_range{24.0, 40.0};
    std::pair<double, double> box_height_range{48.0, 80.0};
    int appearance_dim = 16;
    double appearance_noise = 0.1;  // std-dev of per-frame descriptor noise
    // The last drift_dims descriptor entries follow a stationary AR(1) walk
    // with std-dev drift_scale and correlation time drift_time frames instead
    // of a fixed latent value.
    int drift_dims = 0;
    double drift_scale = 1.0;
    double drift_time = 20.0;
    double box_jitter = 1.0;        // std-dev of per-frame corner noise, pixels
    double occlusion_rate = 0.5;    // expected occlusions per identity
    std::pair<int, int> occlusion_length_range{5, 20};
    bool entry_exit = false;
    std::uint64_t seed = 0;

    // Throws ConfigError naming the offending field.
    void validate() const;

    static SceneConfig from_config(const KeyValueConfig& kv);
    static SceneConfig from_config(const KeyValueConfig& kv, const SceneConfig& defaults);
    void write_to(KeyValueConfig& kv) const;
};

// Frames [start_frame, end_frame) during which an identity has no detection.
struct Occlusion {
    int identity = 0;
    int start_frame = 0;
    int end_frame = 0;
    int length() const noexcept { return end_frame - start_frame; }
    bool operator==(const Occlusion&) const = default;
};

struct Scene {
    Clip clip;
    std::vector<Occlusion> gt_occlusions;
    double arena_width = 640.0;
    double arena_height = 480.0;
};

// Pure function of the config: the same seed yields a bit-identical scene.
// Throws ConfigError when the identities cannot be placed without (near)
// full overlap in the arena.
Scene generate_scene(const SceneConfig& config);

// Lengthens every occlusion shorter than min_length to exactly min_length by
// deleting the identity's detections right after the original occlusion
// (clipped at the last frame). Longer occlusions are left alone. The result
// keeps one occlusion entry per input entry, in the same order.
Scene extend_occlusions(const Scene& scene, int min_length);

}  // namespace pcmot::sim
