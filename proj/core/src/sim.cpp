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

#include "pcmot/sim.hpp"

#include "pcmot/error.hpp"
#include "pcmot/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace pcmot::sim {
namespace {

void require(bool ok, const char* field, const char* rule) {
    if (!ok) throw ConfigError(std::string("invalid scene config '") + field + "': " + rule);
}

struct Identity {
    int id = 0;
    double width = 0.0;
    double height = 0.0;
    double x = 0.0;  // left
    double y = 0.0;  // top
    double vx = 0.0;
    double vy = 0.0;
    int birth = 0;  // first visible frame
    int death = 0;  // last visible frame
    Eigen::VectorXd latent;
    std::vector<Occlusion> occlusions;
};

void reflect(double& pos, double& vel, double hi) {
    if (hi <= 0.0) {
        pos = 0.0;
        return;
    }
    // Fold the position back into [0, hi] as if bouncing off both walls.
    for (int guard = 0; guard < 8 && (pos < 0.0 || pos > hi); ++guard) {
        if (pos < 0.0) {
            pos = -pos;
            vel = -vel;
        }
        if (pos > hi) {
            pos = 2.0 * hi - pos;
            vel = -vel;
        }
    }
    pos = std::clamp(pos, 0.0, hi);
}

bool occluded(const Identity& ident, int frame) {
    for (const auto& occ : ident.occlusions) {
        if (frame >= occ.start_frame && frame < occ.end_frame) return true;
    }
    return false;
}

}  // namespace

void SceneConfig::validate() const {
    require(num_identities >= 1, "num_identities", "must be >= 1");
    require(num_frames >= 2, "num_frames", "must be >= 2");
    require(arena_width > 0.0 && arena_height > 0.0, "arena", "width and height must be positive");
    require(speed_range.first >= 0.0 && speed_range.first <= speed_range.second, "speed_range",
            "need 0 <= min <= max");
    require(box_width_range.first > 0.0 && box_width_range.first <= box_width_range.second,
            "box_width_range", "need 0 < min <= max");
    require(box_height_range.first > 0.0 && box_height_range.first <= box_height_range.second,
            "box_height_range", "need 0 < min <= max");
    require(appearance_dim >= 1, "appearance_dim", "must be >= 1");
    require(appearance_noise >= 0.0, "appearance_noise", "must be >= 0");
    require(drift_dims >= 0 && drift_dims <= appearance_dim, "drift_dims", "must be in [0, appearance_dim]");
    require(drift_scale >= 0.0, "drift_scale", "must be >= 0");
    require(drift_time > 0.0, "drift_time", "must be > 0");
    require(box_jitter >= 0.0, "box_jitter", "must be >= 0");
    require(occlusion_rate >= 0.0, "occlusion_rate", "must be >= 0");
    require(occlusion_length_range.first >= 1 &&
                occlusion_length_range.first <= occlusion_length_range.second,
            "occlusion_length_range", "need 1 <= min <= max");
}

SceneConfig SceneConfig::from_config(const KeyValueConfig& kv) { return from_config(kv, SceneConfig{}); }

SceneConfig SceneConfig::from_config(const KeyValueConfig& kv, const SceneConfig& d) {
    SceneConfig c = d;
    c.num_identities = static_cast<int>(kv.get_int("num_identities", d.num_identities));
    c.num_frames = static_cast<int>(kv.get_int("num_frames", d.num_frames));
    c.arena_width = kv.get_double("arena_width", d.arena_width);
    c.arena_height = kv.get_double("arena_height", d.arena_height);
    c.speed_range = {kv.get_double("speed_min", d.speed_range.first),
                     kv.get_double("speed_max", d.speed_range.second)};
    c.box_width_range = {kv.get_double("box_width_min", d.box_width_range.first),
                         kv.get_double("box_width_max", d.box_width_range.second)};
    c.box_height_range = {kv.get_double("box_height_min", d.box_height_range.first),
                          kv.get_double("box_height_max", d.box_height_range.second)};
    c.appearance_dim = static_cast<int>(kv.get_int("appearance_dim", d.appearance_dim));
    c.appearance_noise = kv.get_double("appearance_noise", d.appearance_noise);
    c.drift_dims = static_cast<int>(kv.get_int("drift_dims", d.drift_dims));
    c.drift_scale = kv.get_double("drift_scale", d.drift_scale);
    c.drift_time = kv.get_double("drift_time", d.drift_time);
    c.box_jitter = kv.get_double("box_jitter", d.box_jitter);
    c.occlusion_rate = kv.get_double("occlusion_rate", d.occlusion_rate);
    c.occlusion_length_range = {
        static_cast<int>(kv.get_int("occlusion_length_min", d.occlusion_length_range.first)),
        static_cast<int>(kv.get_int("occlusion_length_max", d.occlusion_length_range.second))};
    c.entry_exit = kv.get_bool("entry_exit", d.entry_exit);
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<long long>(d.seed)));
    c.validate();
    return c;
}

void SceneConfig::write_to(KeyValueConfig& kv) const {
    kv.set("num_identities", std::to_string(num_identities));
    kv.set("num_frames", std::to_string(num_frames));
    kv.set_number("arena_width", arena_width);
    kv.set_number("arena_height", arena_height);
    kv.set_number("speed_min", speed_range.first);
    kv.set_number("speed_max", speed_range.second);
    kv.set_number("box_width_min", box_width_range.first);
    kv.set_number("box_width_max", box_width_range.second);
    kv.set_number("box_height_min", box_height_range.first);
    kv.set_number("box_height_max", box_height_range.second);
    kv.set("appearance_dim", std::to_string(appearance_dim));
    kv.set_number("appearance_noise", appearance_noise);
    kv.set("drift_dims", std::to_string(drift_dims));
    kv.set_number("drift_scale", drift_scale);
    kv.set_number("drift_time", drift_time);
    kv.set_number("box_jitter", box_jitter);
    kv.set_number("occlusion_rate", occlusion_rate);
    kv.set("occlusion_length_min", std::to_string(occlusion_length_range.first));
    kv.set("occlusion_length_max", std::to_string(occlusion_length_range.second));
    kv.set("entry_exit", entry_exit ? "true" : "false");
    kv.set("seed", std::to_string(seed));
}

Scene generate_scene(const SceneConfig& config) {
    config.validate();
    const int first = 1;
    const int last = config.num_frames;
    const double W = config.arena_width;
    const double H = config.arena_height;

    if (config.box_width_range.second >= W || config.box_height_range.second >= H) {
        throw ConfigError("arena too small: boxes do not fit inside the arena");
    }
    const double mean_area = 0.25 * (config.box_width_range.first + config.box_width_range.second) *
                             (config.box_height_range.first + config.box_height_range.second);
    if (mean_area * config.num_identities > W * H) {
        throw ConfigError("arena too small to place " + std::to_string(config.num_identities) +
                          " identities without full overlap");
    }

    Rng placement = make_rng(config.seed, "placement");
    Rng motion = make_rng(config.seed, "motion");
    Rng appearance = make_rng(config.seed, "appearance");
    Rng occlusion = make_rng(config.seed, "occlusion");
    Rng lifespan = make_rng(config.seed, "lifespan");
    Rng order = make_rng(config.seed, "order");
    Rng drift = make_rng(config.seed, "drift");
    const int stable_dims = config.appearance_dim - config.drift_dims;
    const double rho = std::exp(-1.0 / config.drift_time);
    const double innovation = config.drift_scale * std::sqrt(1.0 - rho * rho);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    std::vector<Identity> idents;
    idents.reserve(static_cast<std::size_t>(config.num_identities));
    for (int k = 0; k < config.num_identities; ++k) {
        Identity ident;
        ident.id = k + 1;
        ident.width = config.box_width_range.first +
                      unit(placement) * (config.box_width_range.second - config.box_width_range.first);
        ident.height = config.box_height_range.first + unit(placement) * (config.box_height_range.second -
                                                                          config.box_height_range.first);
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            ident.x = unit(placement) * (W - ident.width);
            ident.y = unit(placement) * (H - ident.height);
            const Box candidate{ident.x, ident.y, ident.x + ident.width, ident.y + ident.height, 1.0};
            placed = std::none_of(idents.begin(), idents.end(), [&](const Identity& other) {
                const Box ob{other.x, other.y, other.x + other.width, other.y + other.height, 1.0};
                return iou(candidate, ob) >= 0.5;
            });
        }
        if (!placed) {
            throw ConfigError("arena too small to place " + std::to_string(config.num_identities) +
                              " identities without full overlap");
        }
        const double speed = config.speed_range.first +
                             unit(motion) * (config.speed_range.second - config.speed_range.first);
        const double heading = unit(motion) * 2.0 * std::numbers::pi;
        ident.vx = speed * std::cos(heading);
        ident.vy = speed * std::sin(heading);

        ident.latent.resize(config.appearance_dim);
        for (int d = 0; d < config.appearance_dim; ++d) ident.latent[d] = gauss(appearance);
        for (int d = stable_dims; d < config.appearance_dim; ++d) ident.latent[d] = config.drift_scale * gauss(drift);

        ident.birth = first;
        ident.death = last;
        if (config.entry_exit) {
            const int third = std::max(1, config.num_frames / 3);
            ident.birth = first + static_cast<int>(unit(lifespan) * third);
            ident.death = last - static_cast<int>(unit(lifespan) * third);
            if (ident.death <= ident.birth) ident.death = std::min(last, ident.birth + 1);
        }
        idents.push_back(std::move(ident));
    }

    // Occlusions keep at least one visible frame before, after and between them.
    std::poisson_distribution<int> occ_count(config.occlusion_rate);
    std::uniform_int_distribution<int> occ_len(config.occlusion_length_range.first,
                                               config.occlusion_length_range.second);
    for (auto& ident : idents) {
        const int wanted = config.occlusion_rate > 0.0 ? occ_count(occlusion) : 0;
        for (int n = 0; n < wanted; ++n) {
            const int len = occ_len(occlusion);
            const int lo = ident.birth + 1;
            const int hi = ident.death - len;  // start <= hi keeps frame death visible
            if (hi < lo) continue;
            for (int attempt = 0; attempt < 20; ++attempt) {
                const int start = std::uniform_int_distribution<int>(lo, hi)(occlusion);
                const Occlusion occ{ident.id, start, start + len};
                const bool clash = std::any_of(
                    ident.occlusions.begin(), ident.occlusions.end(), [&](const Occlusion& o) {
                        return occ.start_frame <= o.end_frame && o.start_frame <= occ.end_frame;
                    });
                if (!clash) {
                    ident.occlusions.push_back(occ);
                    break;
                }
            }
        }
        std::sort(ident.occlusions.begin(), ident.occlusions.end(),
                  [](const Occlusion& a, const Occlusion& b) { return a.start_frame < b.start_frame; });
    }

    std::vector<FrameObjects> frames;
    frames.reserve(static_cast<std::size_t>(config.num_frames));
    for (int t = first; t <= last; ++t) {
        std::vector<Detection> dets;
        for (auto& ident : idents) {
            if (t > first) {
                ident.x += ident.vx;
                ident.y += ident.vy;
                reflect(ident.x, ident.vx, W - ident.width);
                reflect(ident.y, ident.vy, H - ident.height);
            }
            // Noise is drawn for every identity and frame so that visibility
            // changes do not shift the random streams of other identities.
            double jitter[4];
            for (double& j : jitter) j = config.box_jitter * gauss(motion);
            if (t > first) {
                for (int d = stable_dims; d < config.appearance_dim; ++d) {
                    ident.latent[d] = rho * ident.latent[d] + innovation * gauss(drift);
                }
            }
            Eigen::VectorXd descriptor = ident.latent;
            for (int d = 0; d < config.appearance_dim; ++d) {
                descriptor[d] += config.appearance_noise * gauss(appearance);
            }
            const double conf = 0.5 + 0.5 * unit(placement);
            if (t < ident.birth || t > ident.death || occluded(ident, t)) continue;

            double l = ident.x + jitter[0];
            double tp = ident.y + jitter[1];
            double r = ident.x + ident.width + jitter[2];
            double b = ident.y + ident.height + jitter[3];
            if (r - l < 1.0) r = l + 1.0;
            if (b - tp < 1.0) b = tp + 1.0;
            dets.push_back(Detection::real(t, Box{l, tp, r, b, conf}, std::move(descriptor), ident.id));
        }
        std::shuffle(dets.begin(), dets.end(), order);
        frames.emplace_back(t, std::move(dets));
    }

    Scene scene;
    scene.clip = Clip(std::move(frames));
    scene.arena_width = W;
    scene.arena_height = H;
    for (const auto& ident : idents) {
        scene.gt_occlusions.insert(scene.gt_occlusions.end(), ident.occlusions.begin(),
                                   ident.occlusions.end());
    }
    return scene;
}

Scene extend_occlusions(const Scene& scene, int min_length) {
    if (min_length < 0) throw ConfigError("occlusion length L must be >= 0");
    Scene out;
    out.arena_width = scene.arena_width;
    out.arena_height = scene.arena_height;
    out.gt_occlusions = scene.gt_occlusions;
    if (scene.clip.empty()) {
        out.clip = scene.clip;
        return out;
    }
    const int last = scene.clip.last_frame();

    // frame -> identities to drop
    std::vector<std::set<int>> drop(scene.clip.length());
    for (auto& occ : out.gt_occlusions) {
        if (occ.length() >= min_length) continue;
        const int new_end = std::min(occ.start_frame + min_length, last + 1);
        for (int t = occ.end_frame; t < new_end; ++t) drop[scene.clip.position(t)].insert(occ.identity);
        occ.end_frame = std::max(occ.end_frame, new_end);
    }

    std::vector<FrameObjects> frames;
    frames.reserve(scene.clip.length());
    for (std::size_t pos = 0; pos < scene.clip.length(); ++pos) {
        const auto& gone = drop[pos];
        if (gone.empty()) {
            frames.push_back(scene.clip[pos]);
            continue;
        }
        frames.push_back(scene.clip[pos].without([&](const Detection& det) {
            return det.gt_identity && gone.count(*det.gt_identity) != 0;
        }));
    }
    out.clip = Clip(std::move(frames));
    return out;
}

}  // namespace pcmot::sim
