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

#include "pcmot/error.hpp"
#include "pcmot/sim.hpp"
#include "pcmot/train.hpp"

#include "loss_checks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace pcmot;

namespace {

sim::Scene quiet_scene(int ids, int frames, std::uint64_t seed) {
    sim::SceneConfig c;
    c.num_identities = ids;
    c.num_frames = frames;
    c.appearance_dim = 4;
    c.appearance_noise = 0.0;
    c.box_jitter = 0.0;
    c.occlusion_rate = 0.0;
    c.seed = seed;
    return sim::generate_scene(c);
}

TrainConfig small_config() {
    TrainConfig c;
    c.clip_length = 16;
    c.loss.min_span = 6;
    c.loss.max_paths = 8;
    c.model.appearance_dim = 4;
    c.model.hidden_dim = 12;
    c.model.embedding_dim = 8;
    c.steps = 5;
    return c;
}

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("pcmot_train_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST(Adam, MatchesHandComputation) {
    std::vector<double> x{1.0, -2.0};
    AdamState s;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    adam_update(x, std::vector<double>{0.5, 0.0}, s, lr, b1, b2, eps);
    EXPECT_NEAR(x[0], 1.0 - 0.1 * 0.5 / (0.5 + eps), 1e-15);
    EXPECT_EQ(x[1], -2.0);
    adam_update(x, std::vector<double>{-1.0, 0.0}, s, lr, b1, b2, eps);
    const double m = 0.9 * 0.05 - 0.1;
    const double v = 0.999 * 0.00025 + 0.001;
    const double mhat = m / (1 - 0.81);
    const double vhat = v / (1 - 0.999 * 0.999);
    EXPECT_NEAR(x[0], 1.0 - 0.1 * 0.5 / (0.5 + eps) - lr * mhat / (std::sqrt(vhat) + eps), 1e-14);
    EXPECT_EQ(s.step, 2);
}

TEST(Adam, SizeMismatchRejected) {
    std::vector<double> x{1.0};
    AdamState s;
    EXPECT_THROW(adam_update(x, std::vector<double>{1.0, 2.0}, s, 0.1, 0.9, 0.999, 1e-8), ShapeError);
}

TEST(ClipOffsets, HalfStrideWithTail) {
    EXPECT_EQ(clip_offsets(200, 48), (std::vector<int>{0, 24, 48, 72, 96, 120, 144, 152}));
    EXPECT_EQ(clip_offsets(96, 48), (std::vector<int>{0, 24, 48}));
    EXPECT_EQ(clip_offsets(30, 48), (std::vector<int>{0}));
    EXPECT_TRUE(clip_offsets(0, 48).empty());
    EXPECT_THROW(clip_offsets(10, 1), ConfigError);
}

TEST(TwoView, ZeroNoiseGivesZero) {
    Rng rng(1);
    const Clip clip = support::tracking_clip(rng, 6, 3, 3);
    Rng r(2);
    EXPECT_EQ(two_view_loss(clip, support::small_model(1), 0.0, 0.0, r), 0.0);
}

TEST(TwoView, SingleEntryDifference) {
    Eigen::MatrixXd a(2, 2), b(2, 2);
    a << 0.9, 0.1, 0, 1;
    b << 0.7, 0.3, 0, 1;
    std::vector<MatchMatrix> x{{1, 2, a}}, y{{1, 2, b}};
    EXPECT_NEAR(match_view_difference(x, y), 0.04, 1e-15);
    EXPECT_EQ(match_view_difference(x, x), 0.0);
}

TEST(TwoView, NoiseMakesItPositive) {
    Rng rng(1);
    const Clip clip = support::tracking_clip(rng, 6, 3, 3);
    Rng r(2);
    EXPECT_GT(two_view_loss(clip, support::small_model(1), 0.5, 3.0, r), 0.0);
}

TEST(MakeView, ShiftsEveryBoxTogether) {
    Rng rng(3);
    const Clip clip = support::tracking_clip(rng, 4, 3, 2, 0.0);
    Rng r(4);
    const Clip view = make_view(clip, 0.0, 5.0, r);
    ASSERT_EQ(view.length(), clip.length());
    const double dx = view[0][0].box->left - clip[0][0].box->left;
    EXPECT_NE(dx, 0.0);
    for (std::size_t t = 0; t < clip.length(); ++t) {
        ASSERT_EQ(view[t].size(), clip[t].size());
        for (std::size_t i = 0; i < clip[t].real_count(); ++i) {
            EXPECT_NEAR(view[t][i].box->left - clip[t][i].box->left, dx, 1e-9);
            EXPECT_EQ(view[t][i].appearance, clip[t][i].appearance);
        }
    }
}

TEST(TrainingLoss, TwoViewOnlyAddsATerm) {
    Rng rng(5);
    const Clip clip = support::tracking_clip(rng, 12, 4, 3, 0.05);
    TrainConfig c = support::gradient_config();
    const ModelParams p = support::small_model(5, 3, 5, 4);
    c.two_view = false;
    Rng a(9);
    const auto off = training_loss(clip, p, c, a);
    c.two_view = true;
    Rng b(9);
    const auto on = training_loss(clip, p, c, b);
    EXPECT_EQ(off.stats.path_consistency, on.stats.path_consistency);
    EXPECT_EQ(off.stats.one_to_one, on.stats.one_to_one);
    EXPECT_EQ(off.stats.bidirectional, on.stats.bidirectional);
    EXPECT_GT(on.stats.two_view, 0.0);
    EXPECT_NEAR(on.value(), off.value() + on.stats.two_view, 1e-12);
}

TEST(Train, ZeroStepsReturnsTheInitialParams) {
    const auto scene = quiet_scene(4, 40, 1);
    TrainConfig c = small_config();
    c.steps = 0;
    const ModelParams init = support::small_model(3, 4, 12, 8);
    const auto result = train(std::span<const Clip>(&scene.clip, 1), c, init);
    EXPECT_TRUE(result.params.identical_to(init));
    EXPECT_TRUE(result.report.steps.empty());
}

TEST(Train, SameSeedSameCheckpoint) {
    const auto scene = quiet_scene(4, 40, 2);
    TrainConfig c = small_config();
    c.seed = 11;
    c.checkpoint_dir = scratch("a");
    const auto a = train(std::span<const Clip>(&scene.clip, 1), c);
    c.checkpoint_dir = scratch("b");
    const auto b = train(std::span<const Clip>(&scene.clip, 1), c);
    EXPECT_TRUE(a.params.identical_to(b.params));
    std::ifstream fa(a.report.checkpoint_path), fb(b.report.checkpoint_path);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty());
    EXPECT_EQ(sa, sb);
    c.seed = 12;
    c.checkpoint_dir.clear();
    EXPECT_FALSE(train(std::span<const Clip>(&scene.clip, 1), c).params.identical_to(a.params));
}

TEST(Train, PeriodicCheckpoints) {
    const auto scene = quiet_scene(4, 40, 3);
    TrainConfig c = small_config();
    c.steps = 4;
    c.checkpoint_every = 2;
    c.checkpoint_dir = scratch("periodic");
    train(std::span<const Clip>(&scene.clip, 1), c);
    EXPECT_TRUE(std::filesystem::exists(c.checkpoint_dir / "step_000002.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(c.checkpoint_dir / "step_000004.ckpt"));
    EXPECT_TRUE(std::filesystem::exists(c.checkpoint_dir / "model.ckpt"));
}

TEST(Train, ReplayFromACheckpointContinuesTheSameWay) {
    // Parameter updates depend only on (params, gradients, moments, step):
    // one step from the same params and fresh moments reproduces itself.
    const auto scene = quiet_scene(4, 40, 4);
    TrainConfig c = small_config();
    c.steps = 1;
    const ModelParams init = support::small_model(7, 4, 12, 8);
    const auto a = train(std::span<const Clip>(&scene.clip, 1), c, init);
    const auto b = train(std::span<const Clip>(&scene.clip, 1), c, init);
    EXPECT_TRUE(a.params.identical_to(b.params));
}

TEST(Train, NoQueriesIsAConfigError) {
    std::vector<FrameObjects> frames;
    for (int t = 1; t <= 20; ++t) frames.emplace_back(t, std::vector<Detection>{});
    const Clip empty(frames);
    EXPECT_THROW(train(std::span<const Clip>(&empty, 1), small_config()), ConfigError);
}

TEST(Train, LossDropsOnANoiselessScene) {
    const auto scene = quiet_scene(5, 64, 5);
    TrainConfig c = small_config();
    c.steps = 200;
    c.learning_rate = 1e-3;
    c.seed = 5;
    ModelConfig mc = c.model;
    mc.seed = derive_seed(c.seed, "model");
    const ModelParams init = ModelParams::initialize(mc);
    const auto result = train(std::span<const Clip>(&scene.clip, 1), c, init);
    const Clip probe = scene.clip.slice(0, 16);
    Rng a(1), b(1);
    const double before = training_loss(probe, init, c, a).value();
    const double after = training_loss(probe, result.params, c, b).value();
    EXPECT_LT(after, before);
    for (const auto& s : result.report.steps) EXPECT_TRUE(std::isfinite(s.stats.total));
}

TEST(Train, ReportCsvHasOneRowPerStep) {
    const auto scene = quiet_scene(4, 40, 6);
    TrainConfig c = small_config();
    c.steps = 3;
    const auto result = train(std::span<const Clip>(&scene.clip, 1), c);
    const auto path = scratch("report");
    std::filesystem::create_directories(path);
    write_train_report(path / "r.csv", result.report);
    std::ifstream in(path / "r.csv");
    std::string line;
    int rows = 0;
    std::getline(in, line);
    EXPECT_EQ(line.rfind("step,video,clip_start,l_pc", 0), 0u);
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST(TrainConfig, Validation) {
    TrainConfig c;
    c.learning_rate = 0.0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = TrainConfig{};
    c.clip_length = 1;
    EXPECT_THROW(c.validate(), ConfigError);
    KeyValueConfig kv;
    kv.set("learning_rate", "0.001");
    kv.set("G", "5");
    const TrainConfig parsed = TrainConfig::from_config(kv);
    EXPECT_EQ(parsed.learning_rate, 0.001);
    EXPECT_EQ(parsed.loss.max_paths, 5);
}
