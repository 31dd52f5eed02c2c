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

#include "pcmot/train.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>

namespace pcmot {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("invalid train config 'learning_rate': must be > 0");
    }
    if (steps < 0) throw ConfigError("invalid train config 'steps': must be >= 0");
    if (clip_length < 2) throw ConfigError("invalid train config 'clip_length': must be >= 2");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("invalid train config 'beta1': must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("invalid train config 'beta2': must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("invalid train config 'epsilon': must be > 0");
    if (!(augment_appearance >= 0.0)) throw ConfigError("invalid train config 'augment_appearance': must be >= 0");
    if (!(augment_shift >= 0.0)) throw ConfigError("invalid train config 'augment_shift': must be >= 0");
    if (checkpoint_every < 0) throw ConfigError("invalid train config 'checkpoint_every': must be >= 0");
    if (!(max_degenerate_fraction >= 0.0 && max_degenerate_fraction <= 1.0)) {
        throw ConfigError("invalid train config 'max_degenerate_fraction': must be in [0, 1]");
    }
    loss.validate();
    model.validate();
}

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, TrainConfig{}); }

TrainConfig TrainConfig::from_config(const KeyValueConfig& kv, const TrainConfig& d) {
    TrainConfig c = d;
    c.learning_rate = kv.get_double("learning_rate", d.learning_rate);
    c.steps = static_cast<int>(kv.get_int("steps", d.steps));
    c.clip_length = static_cast<int>(kv.get_int("clip_length", d.clip_length));
    c.loss = LossConfig::from_config(kv, d.loss);
    c.model = ModelConfig::from_config(kv, d.model);
    c.two_view = kv.get_bool("two_view", d.two_view);
    c.augment_appearance = kv.get_double("augment_appearance", d.augment_appearance);
    c.augment_shift = kv.get_double("augment_shift", d.augment_shift);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(d.seed)));
    c.beta1 = kv.get_double("beta1", d.beta1);
    c.beta2 = kv.get_double("beta2", d.beta2);
    c.epsilon = kv.get_double("epsilon", d.epsilon);
    c.checkpoint_every = static_cast<int>(kv.get_int("checkpoint_every", d.checkpoint_every));
    c.checkpoint_dir = kv.get_string("checkpoint_dir", d.checkpoint_dir.string());
    c.max_degenerate_fraction = kv.get_double("max_degenerate_fraction", d.max_degenerate_fraction);
    c.validate();
    return c;
}

void TrainConfig::write_to(KeyValueConfig& kv) const {
    kv.set_number("learning_rate", learning_rate);
    kv.set("steps", std::to_string(steps));
    kv.set("clip_length", std::to_string(clip_length));
    loss.write_to(kv);
    model.write_to(kv);
    kv.set("two_view", two_view ? "true" : "false");
    kv.set_number("augment_appearance", augment_appearance);
    kv.set_number("augment_shift", augment_shift);
    kv.set("seed", std::to_string(seed));
    kv.set_number("beta1", beta1);
    kv.set_number("beta2", beta2);
    kv.set_number("epsilon", epsilon);
    kv.set("checkpoint_every", std::to_string(checkpoint_every));
    if (!checkpoint_dir.empty()) kv.set("checkpoint_dir", checkpoint_dir.string());
    kv.set_number("max_degenerate_fraction", max_degenerate_fraction);
}

void adam_update(std::vector<double>& params, std::span<const double> grad, AdamState& state,
                 double learning_rate, double beta1, double beta2, double epsilon) {
    if (grad.size() != params.size()) throw ShapeError("adam_update: gradient length differs from parameters");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw ShapeError("adam_update: moment length differs from parameters");
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * grad[k];
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * grad[k] * grad[k];
        const double m_hat = state.m[k] / c1;
        const double v_hat = state.v[k] / c2;
        params[k] -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
    }
}

std::vector<int> clip_offsets(std::size_t video_length, int clip_length) {
    if (clip_length < 2) throw ConfigError("clip length must be >= 2");
    std::vector<int> offsets;
    if (video_length == 0) return offsets;
    const auto T = static_cast<std::size_t>(clip_length);
    if (video_length <= T) return {0};
    const std::size_t stride = std::max<std::size_t>(1, T / 2);
    std::size_t off = 0;
    for (; off + T <= video_length; off += stride) offsets.push_back(static_cast<int>(off));
    if (static_cast<std::size_t>(offsets.back()) + T < video_length) {
        offsets.push_back(static_cast<int>(video_length - T));
    }
    return offsets;
}

Clip make_view(const Clip& clip, double appearance_noise, double box_shift, Rng& rng) {
    std::normal_distribution<double> unit(0.0, 1.0);
    const double dx = box_shift * unit(rng);
    const double dy = box_shift * unit(rng);
    std::vector<FrameObjects> frames;
    frames.reserve(clip.length());
    for (const auto& frame : clip.frames()) {
        std::vector<Detection> reals;
        reals.reserve(frame.real_count());
        for (const auto& det : frame.reals()) {
            Detection copy = det;
            Box& b = *copy.box;
            b.left += dx;
            b.right += dx;
            b.top += dy;
            b.bottom += dy;
            for (Eigen::Index k = 0; k < copy.appearance.size(); ++k) {
                copy.appearance[k] += appearance_noise * unit(rng);
            }
            reals.push_back(std::move(copy));
        }
        frames.emplace_back(frame.frame(), std::move(reals));
    }
    return Clip(std::move(frames));
}

double match_view_difference(std::span<const MatchMatrix> a, std::span<const MatchMatrix> b) {
    if (a.size() != b.size()) throw ShapeError("match_view_difference: views differ in pair count");
    ad::Tape tape;
    std::vector<ad::Var> terms;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].P.rows() != b[k].P.rows() || a[k].P.cols() != b[k].P.cols()) {
            throw ShapeError("match_view_difference: matrix " + std::to_string(k) + " differs in shape");
        }
        if (a[k].real_rows() < 1 || a[k].real_cols() < 1) continue;
        terms.push_back(tape.sq_diff_mean(tape.constant(a[k].P), tape.constant(b[k].P), a[k].real_rows(),
                                          a[k].real_cols()));
    }
    return terms.empty() ? 0.0 : tape.scalar(tape.mean_all(terms));
}

ad::Var two_view_term(ad::Tape& tape, const BoundModel& model, const ModelParams& params, const Clip& clip,
                      double appearance_noise, double box_shift, Rng& rng) {
    const Clip first = make_view(clip, appearance_noise, box_shift, rng);
    const Clip second = make_view(clip, appearance_noise, box_shift, rng);
    ClipGraph a(tape, model, params, first);
    ClipGraph b(tape, model, params, second);
    std::vector<ad::Var> terms;
    for (std::size_t t = 0; t < clip.length(); ++t) {
        for (std::size_t r = 0; r < clip.length(); ++r) {
            if (t == r || clip[t].real_count() == 0 || clip[r].real_count() == 0) continue;
            terms.push_back(tape.sq_diff_mean(a.match(t, r), b.match(t, r),
                                              static_cast<Eigen::Index>(clip[t].real_count()),
                                              static_cast<Eigen::Index>(clip[r].real_count())));
        }
    }
    return terms.empty() ? tape.scalar_constant(0.0) : tape.mean_all(terms);
}

double two_view_loss(const Clip& clip, const ModelParams& params, double appearance_noise, double box_shift,
                     Rng& rng) {
    ad::Tape tape;
    const BoundModel model = bind(tape, params);
    return tape.scalar(two_view_term(tape, model, params, clip, appearance_noise, box_shift, rng));
}

LossEvaluation training_loss(const Clip& clip, const ModelParams& params, const TrainConfig& config, Rng& rng) {
    LossEvaluation ev = total_loss(clip, params, config.loss, rng);
    if (config.two_view) {
        ad::Tape& tape = ev.tape.tape;
        const ad::Var tv = two_view_term(tape, ev.tape.model, params, clip, config.augment_appearance,
                                         config.augment_shift, rng);
        ev.stats.two_view = tape.scalar(tv);
        ev.tape.loss = tape.add(ev.tape.loss, tv);
        ev.stats.total = tape.scalar(ev.tape.loss);
    }
    return ev;
}

TrainResult train(std::span<const Clip> videos, const TrainConfig& config) {
    ModelConfig mc = config.model;
    mc.seed = derive_seed(config.seed, "model");
    return train(videos, config, ModelParams::initialize(mc));
}

namespace {

struct Candidate {
    int video = 0;
    int offset = 0;
    std::size_t count = 0;
};

void save_if(const std::filesystem::path& dir, const std::string& name, const ModelParams& params) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / name, params);
}

std::string step_name(int step) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "step_%06d.ckpt", step);
    return buf;
}

}  // namespace

TrainResult train(std::span<const Clip> videos, const TrainConfig& config, const ModelParams& initial) {
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    TrainResult result{initial, {}};

    std::vector<Candidate> candidates;
    for (std::size_t v = 0; v < videos.size(); ++v) {
        for (const int off : clip_offsets(videos[v].length(), config.clip_length)) {
            const std::size_t count =
                std::min(static_cast<std::size_t>(config.clip_length), videos[v].length() - static_cast<std::size_t>(off));
            const Clip clip = videos[v].slice(static_cast<std::size_t>(off), count);
            if (select_frame_pairs(clip, config.loss.iou_threshold, config.loss.min_span).empty()) {
                ++result.report.skipped_clips;
                continue;
            }
            candidates.push_back({static_cast<int>(v), off, count});
        }
    }
    if (candidates.empty()) throw ConfigError("training data has no clip with a query sample");

    Rng clip_rng = make_rng(config.seed, "clips");
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    AdamState adam;
    std::vector<double> flat = result.params.flatten();
    std::size_t propagated = 0;
    std::size_t degenerate = 0;

    for (int step = 0; step < config.steps; ++step) {
        const Candidate& c = candidates[pick(clip_rng)];
        const Clip clip = videos[static_cast<std::size_t>(c.video)].slice(static_cast<std::size_t>(c.offset), c.count);
        Rng step_rng(derive_seed(config.seed, "step-" + std::to_string(step)));
        Gradients grad;
        LossStats stats;
        try {
            LossEvaluation ev = training_loss(clip, result.params, config, step_rng);
            if (!std::isfinite(ev.stats.total)) throw NumericalError("non-finite training loss");
            grad = backward(result.params, ev.tape);
            stats = std::move(ev.stats);
        } catch (const NumericalError& e) {
            save_if(config.checkpoint_dir, "last_good.ckpt", result.params);
            throw NumericalError("step " + std::to_string(step) + ": " + e.what());
        }
        propagated += stats.propagated_rows;
        degenerate += stats.degenerate_rows;
        if (propagated > 0 &&
            static_cast<double>(degenerate) > config.max_degenerate_fraction * static_cast<double>(propagated)) {
            save_if(config.checkpoint_dir, "last_good.ckpt", result.params);
            throw NumericalError("step " + std::to_string(step) + ": " + std::to_string(degenerate) + " of " +
                                 std::to_string(propagated) +
                                 " propagated rows lost all mass to the spatial mask; check S");
        }
        const std::vector<double> g = grad.flatten();
        adam_update(flat, g, adam, config.learning_rate, config.beta1, config.beta2, config.epsilon);
        result.params.assign_flat(flat);
        result.report.steps.push_back({step, c.video, videos[static_cast<std::size_t>(c.video)][static_cast<std::size_t>(c.offset)].frame(),
                                       std::move(stats)});
        if (config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0) {
            save_if(config.checkpoint_dir, step_name(step + 1), result.params);
        }
    }
    if (!config.checkpoint_dir.empty()) {
        save_if(config.checkpoint_dir, "model.ckpt", result.params);
        result.report.checkpoint_path = config.checkpoint_dir / "model.ckpt";
    }
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

void write_train_report(const std::filesystem::path& path, const TrainReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step,video,clip_start,l_pc,l_om,l_bc,l_tv,total,queries,degenerate,mean_path_length,mean_skip_length\n";
    char buf[512];
    for (const auto& r : report.steps) {
        const auto& s = r.stats;
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%zu,%zu,%.6g,%.6g\n", r.step,
                      r.video, r.clip_start, s.path_consistency, s.one_to_one, s.bidirectional, s.two_view,
                      s.total, s.query_count, s.degenerate_rows, s.mean_path_length, s.mean_skip_length);
        out << buf;
    }
    if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace pcmot
