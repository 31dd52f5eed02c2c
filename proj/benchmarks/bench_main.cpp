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

#include "pcmot/assignment.hpp"
#include "pcmot/pathloss.hpp"
#include "pcmot/sim.hpp"
#include "pcmot/track.hpp"
#include "pcmot/train.hpp"

#include <benchmark/benchmark.h>

#include <random>

using namespace pcmot;

namespace {

Clip scene_clip(int identities, int frames) {
    sim::SceneConfig c;
    c.num_identities = identities;
    c.num_frames = frames;
    c.seed = 1;
    return sim::generate_scene(c).clip;
}

ModelParams default_model() {
    ModelConfig c;
    c.seed = 1;
    return ModelParams::initialize(c);
}

void BM_MatchMatrix(benchmark::State& state) {
    const Clip clip = scene_clip(static_cast<int>(state.range(0)), 2);
    const ModelParams p = default_model();
    const auto a = embed_frame(p, clip[0]);
    const auto b = embed_frame(p, clip[1]);
    for (auto _ : state) benchmark::DoNotOptimize(match_matrix(a, b));
}
BENCHMARK(BM_MatchMatrix)->Arg(10)->Arg(40);

void BM_SamplePaths(benchmark::State& state) {
    Rng rng(1);
    const int s_max = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(sample_paths(1, 48, 25, s_max, rng));
}
BENCHMARK(BM_SamplePaths)->Arg(-1)->Arg(4);

void BM_TotalLoss(benchmark::State& state) {
    const Clip clip = scene_clip(static_cast<int>(state.range(0)), 48);
    const ModelParams p = default_model();
    Rng rng(1);
    for (auto _ : state) benchmark::DoNotOptimize(total_loss(clip, p, LossConfig{}, rng).value());
}
BENCHMARK(BM_TotalLoss)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_TrainingStep(benchmark::State& state) {
    const Clip clip = scene_clip(10, 48);
    const ModelParams p = default_model();
    TrainConfig config;
    Rng rng(1);
    for (auto _ : state) {
        LossEvaluation ev = training_loss(clip, p, config, rng);
        benchmark::DoNotOptimize(backward(p, ev.tape));
    }
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_Assignment(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixXd score(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) score(i, j) = u(rng);
    }
    for (auto _ : state) benchmark::DoNotOptimize(solve_max_assignment(score));
}
BENCHMARK(BM_Assignment)->Arg(10)->Arg(50)->Arg(200);

void BM_TrackScene(benchmark::State& state) {
    const Clip clip = scene_clip(10, 100);
    const ModelParams p = default_model();
    for (auto _ : state) benchmark::DoNotOptimize(run_tracker(clip.frames(), &p, TrackerConfig{}));
}
BENCHMARK(BM_TrackScene)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
