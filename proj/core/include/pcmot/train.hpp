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
#include "pcmot/pathloss.hpp"
#include "pcmot/random.hpp"
#include "pcmot/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pcmot {

struct TrainConfig {
    double learning_rate = 1e-4;
    int steps = 1000;
    int clip_length = 48;  // T
    LossConfig loss;
    ModelConfig model;
    bool two_view = false;
    double augment_appearance = 0.1;  // std-dev of descriptor jitter per view
    double augment_shift = 2.0;       // std-dev of the per-view box shift, pixels
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    int checkpoint_every = 0;  // 0 = only the final checkpoint
    std::filesystem::path checkpoint_dir;  // empty = no checkpoint files
    double max_degenerate_fraction = 0.05;

    void validate() const;
    static TrainConfig from_config(const KeyValueConfig& kv);
    static TrainConfig from_config(const KeyValueConfig& kv, const TrainConfig& defaults);
    void write_to(KeyValueConfig& kv) const;
};

struct StepRecord {
    int step = 0;
    int video = 0;       // index of the source video
    int clip_start = 0;  // first frame of the clip
    LossStats stats;
};

struct TrainReport {
    std::vector<StepRecord> steps;
    double wall_seconds = 0.0;
    std::filesystem::path checkpoint_path;
    int skipped_clips = 0;
};

struct TrainResult {
    ModelParams params;
    TrainReport report;
};

// First/second moment state of Adam over the flattened parameter vector.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;
};

// One bias-corrected Adam update in place; a pure function of its inputs.
void adam_update(std::vector<double>& params, std::span<const double> grad, AdamState& state,
                 double learning_rate, double beta1, double beta2, double epsilon);

// Clip start offsets with stride T/2 over a video of the given length.
std::vector<int> clip_offsets(std::size_t video_length, int clip_length);

// Augmented copy of a clip: one global box shift per view plus independent
// Gaussian jitter on every appearance descriptor.
Clip make_view(const Clip& clip, double appearance_noise, double box_shift, Rng& rng);

// Mean squared difference between the real-to-real entries of corresponding
// match matrices of two views.
double match_view_difference(std::span<const MatchMatrix> a, std::span<const MatchMatrix> b);

// Two augmented views of the clip; mean squared difference of their real
// match probabilities over all ordered frame pairs, on the given tape.
ad::Var two_view_term(ad::Tape& tape, const BoundModel& model, const ModelParams& params,
                      const Clip& clip, double appearance_noise, double box_shift, Rng& rng);
double two_view_loss(const Clip& clip, const ModelParams& params, double appearance_noise,
                     double box_shift, Rng& rng);

// Full training objective for one clip, including the two-view term when
// enabled.
LossEvaluation training_loss(const Clip& clip, const ModelParams& params,
                             const TrainConfig& config, Rng& rng);

// Adam on total_loss gradients, one clip per step. Deterministic given the
// config seed. Throws NumericalError on a non-finite loss after saving the
// last good parameters to checkpoint_dir/last_good.ckpt (when configured),
// and ConfigError when no clip yields a query sample.
TrainResult train(std::span<const Clip> videos, const TrainConfig& config);
TrainResult train(std::span<const Clip> videos, const TrainConfig& config,
                  const ModelParams& initial);

// Per-step CSV: step,video,clip_start,l_pc,l_om,l_bc,l_tv,total,queries,
// degenerate,mean_path_length,mean_skip_length
void write_train_report(const std::filesystem::path& path, const TrainReport& report);

}  // namespace pcmot
