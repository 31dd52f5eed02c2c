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

#include "cli.hpp"

#include "pcmot/error.hpp"
#include "pcmot/eval.hpp"
#include "pcmot/kv_config.hpp"
#include "pcmot/model.hpp"
#include "pcmot/mot_io.hpp"
#include "pcmot/pathloss.hpp"
#include "pcmot/random.hpp"
#include "pcmot/sim.hpp"
#include "pcmot/track.hpp"
#include "pcmot/train.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace pcmot::cli {

namespace fs = std::filesystem;

namespace {

// Config keys exposed as --key flags; a flag beats the config file.
class KeyFlags {
public:
    void add(CLI::App* app, const KeyValueConfig& defaults) {
        for (const auto& [key, value] : defaults.values()) add(app, key, value);
    }

    void add(CLI::App* app, const std::string& key, const std::string& fallback) {
        if (values_.count(key)) return;
        options_[key] = app->add_option("--" + key, values_[key], "config key (default " + fallback + ")");
    }

    std::set<std::string> keys() const {
        std::set<std::string> k;
        for (const auto& [key, v] : values_) k.insert(key);
        return k;
    }

    KeyValueConfig resolve(const std::string& config_path) const {
        KeyValueConfig kv;
        if (!config_path.empty()) {
            if (!fs::exists(config_path)) throw IoError("config file not found: " + config_path);
            kv = KeyValueConfig::load(config_path);
            kv.check_known(keys());
        }
        for (const auto& [key, opt] : options_) {
            if (opt->count() > 0) kv.set(key, values_.at(key));
        }
        return kv;
    }

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, CLI::Option*> options_;
};

void require_file(const std::string& path, const char* what) {
    if (path.empty()) throw ConfigError(std::string("missing ") + what);
    if (!fs::is_regular_file(path)) throw IoError(std::string(what) + " not found: " + path);
}

fs::path prepare_out(const std::string& dir) {
    fs::path out = dir.empty() ? fs::path(".") : fs::path(dir);
    fs::create_directories(out);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
    if (!f) throw IoError("failed writing " + path.string());
}

void write_occlusions(const fs::path& path, const std::vector<sim::Occlusion>& occlusions) {
    std::ostringstream s;
    s << "identity,start_frame,end_frame\n";
    for (const auto& o : occlusions) s << o.identity << "," << o.start_frame << "," << o.end_frame << "\n";
    write_text(path, s.str());
}

std::vector<sim::Occlusion> read_occlusions(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read " + path.string());
    std::vector<sim::Occlusion> out;
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (line_no == 1 || line.empty()) continue;
        sim::Occlusion o;
        if (std::sscanf(line.c_str(), "%d,%d,%d", &o.identity, &o.start_frame, &o.end_frame) != 3 ||
            o.end_frame <= o.start_frame) {
            throw ParseError(path.string(), line_no, "expected identity,start_frame,end_frame");
        }
        out.push_back(o);
    }
    return out;
}

Clip load_clip(const std::string& path) { return Clip::from_sparse(load_mot(path)); }

int appearance_dim_of(const Clip& clip) {
    for (const auto& frame : clip.frames()) {
        for (const auto& det : frame.reals()) return static_cast<int>(det.appearance.size());
    }
    throw ConfigError("input has no detections");
}

std::vector<int> to_ints(const std::vector<long long>& v) { return {v.begin(), v.end()}; }

std::set<std::string> keys_of(const KeyValueConfig& kv) {
    std::set<std::string> k;
    for (const auto& [key, v] : kv.values()) k.insert(key);
    return k;
}

KeyValueConfig scene_defaults() {
    KeyValueConfig kv;
    sim::SceneConfig{}.write_to(kv);
    return kv;
}

// The checkpoint directory is always the output directory, so it is not a key.
KeyValueConfig train_defaults() {
    KeyValueConfig kv;
    TrainConfig{}.write_to(kv);
    return kv;
}

KeyValueConfig tracker_defaults() {
    KeyValueConfig kv;
    TrackerConfig{}.write_to(kv);
    return kv;
}

// --- subcommands -------------------------------------------------------------

struct Common {
    std::string config;
    std::string out;
    KeyFlags keys;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("--config", c.config, "key = value config file");
    app->add_option("--out", c.out, "output directory (default .)");
    c.keys.add(app, "seed", "0");
}

void do_simulate(const Common& c, std::ostream& out) {
    KeyValueConfig kv = c.keys.resolve(c.config);
    const sim::SceneConfig config = sim::SceneConfig::from_config(kv);
    const sim::Scene scene = sim::generate_scene(config);
    const fs::path dir = prepare_out(c.out);
    write_mot(dir / "gt.txt", clip_records(scene.clip, true, true));
    write_mot(dir / "det.txt", clip_records(scene.clip, false, true));
    KeyValueConfig resolved;
    config.write_to(resolved);
    write_text(dir / "scene.cfg", resolved.to_string());
    write_occlusions(dir / "occlusions.csv", scene.gt_occlusions);
    out << "simulated " << config.num_identities << " identities over " << config.num_frames << " frames into "
        << dir.string() << "\n";
}

void do_train(const Common& c, const std::vector<std::string>& inputs, std::ostream& out) {
    if (inputs.empty()) throw ConfigError("missing --input");
    std::vector<Clip> videos;
    for (const auto& path : inputs) {
        require_file(path, "input file");
        videos.push_back(load_clip(path));
    }
    KeyValueConfig kv = c.keys.resolve(c.config);
    if (!kv.contains("appearance_dim")) kv.set("appearance_dim", std::to_string(appearance_dim_of(videos.front())));
    TrainConfig config = TrainConfig::from_config(kv);
    const fs::path dir = prepare_out(c.out);
    config.checkpoint_dir = dir;
    const TrainResult result = train(videos, config);
    write_train_report(dir / "train_report.csv", result.report);
    TrainConfig portable = config;
    portable.checkpoint_dir.clear();
    KeyValueConfig resolved;
    portable.write_to(resolved);
    write_text(dir / "train.cfg", resolved.to_string());
    const double final_loss = result.report.steps.empty() ? 0.0 : result.report.steps.back().stats.total;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "trained %d steps in %.1f s, last loss %.6f, checkpoint %s\n", config.steps,
                  result.report.wall_seconds, final_loss, result.report.checkpoint_path.string().c_str());
    out << buf;
}

void do_track(const Common& c, const std::string& input, const std::string& model, std::ostream& out) {
    require_file(input, "input file");
    const TrackerConfig config = TrackerConfig::from_config(c.keys.resolve(c.config));
    std::optional<ModelParams> params;
    if (!model.empty()) {
        require_file(model, "model checkpoint");
        params = load_checkpoint(model);
    } else if (config.blend_weight > 0.0) {
        throw ConfigError("missing --model (required when blend_weight > 0)");
    }
    const auto frames = load_mot(input);
    const TrackResult result = run_tracker(frames, params ? &*params : nullptr, config);
    const fs::path dir = prepare_out(c.out);
    write_mot(dir / "tracks.txt", result.tracks);
    write_assignment_log(dir / "assignments.csv", result.log);
    std::set<int> ids;
    for (const auto& r : result.tracks) ids.insert(r.id);
    out << "tracked " << frames.size() << " frames, " << ids.size() << " tracks\n";
}

struct EvalArgs {
    std::string gt;
    std::string pred;
    std::string model;
    std::string occlusions;
};

void do_eval(const Common& c, const EvalArgs& a, std::ostream& out) {
    require_file(a.gt, "ground truth file");
    KeyValueConfig kv = c.keys.resolve(c.config);
    const auto gt_records = read_mot_records(fs::path(a.gt));
    eval::EvalReport report;
    if (!a.pred.empty()) {
        require_file(a.pred, "prediction file");
        report.ids = eval::id_metrics(gt_records, read_mot_records(fs::path(a.pred)));
    }
    std::optional<ModelParams> params;
    if (!a.model.empty()) {
        require_file(a.model, "model checkpoint");
        params = load_checkpoint(a.model);
    }
    const Clip gt_clip = Clip::from_sparse(group_frames(gt_records));
    if (params) {
        const int max_d = static_cast<int>(kv.get_int("max_distance", 48));
        std::vector<eval::DistanceBucket> buckets;
        for (const auto& b : eval::default_buckets()) {
            if (b.lo <= max_d) buckets.push_back({b.lo, std::min(b.hi, max_d)});
        }
        report.accuracy = eval::match_accuracy_by_distance(*params, gt_clip, buckets);
    }
    if (!a.occlusions.empty()) {
        if (!params) throw ConfigError("missing --model (required for the occlusion sweep)");
        require_file(a.occlusions, "occlusion file");
        sim::Scene scene;
        scene.clip = gt_clip;
        scene.gt_occlusions = read_occlusions(a.occlusions);
        const auto L_values = to_ints(kv.get_int_list("L", {0, 10, 20, 30, 40, 50, 60}));
        const TrackerConfig tracker = TrackerConfig::from_config(kv);
        const auto sweep = eval::occlusion_sweep(*params, scene, L_values, tracker);
        for (const auto& p : sweep.learned) report.idf1_by_L[p.L] = p.metrics.idf1;
        for (const auto& p : sweep.baseline) report.baseline_idf1_by_L[p.L] = p.metrics.idf1;
    }
    const fs::path dir = prepare_out(c.out);
    report.write_csv(dir / "eval_report.csv");
    report.print_summary(out);
}

void do_ablate(const Common& c, std::ostream& out) {
    KeyValueConfig kv = c.keys.resolve(c.config);
    const std::string protocol = kv.get_string("protocol", "both");
    if (protocol != "skip" && protocol != "occlusion" && protocol != "both") {
        throw ConfigError("invalid value for 'protocol': '" + protocol + "' (expected skip, occlusion or both)");
    }
    const std::uint64_t root = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    const int train_scenes = static_cast<int>(kv.get_int("train_scenes", 2));
    if (train_scenes < 1) throw ConfigError("invalid value for 'train_scenes': must be >= 1");
    const auto s_values = to_ints(kv.get_int_list("s_max_values", {kUnlimitedSkip, 4}));
    const auto L_values = to_ints(kv.get_int_list("L", {0, 10, 20, 30, 40, 50, 60}));

    sim::SceneConfig scene_config = sim::SceneConfig::from_config(kv);
    std::vector<Clip> videos;
    for (int k = 0; k < train_scenes; ++k) {
        scene_config.seed = derive_seed(root, "train-scene-" + std::to_string(k));
        videos.push_back(sim::generate_scene(scene_config).clip);
    }
    scene_config.seed = derive_seed(root, "eval-scene");
    const sim::Scene eval_scene = sim::generate_scene(scene_config);

    TrainConfig train_config = TrainConfig::from_config(kv);
    train_config.seed = root;
    train_config.checkpoint_dir.clear();
    const TrackerConfig tracker = TrackerConfig::from_config(kv);
    const fs::path dir = prepare_out(c.out);

    std::map<int, ModelParams> models;
    auto model_for = [&](int s_max) -> const ModelParams& {
        auto it = models.find(s_max);
        if (it == models.end()) {
            TrainConfig tc = train_config;
            tc.loss.max_skip = s_max;
            it = models.emplace(s_max, train(videos, tc).params).first;
        }
        return it->second;
    };

    char buf[160];
    if (protocol != "occlusion") {
        std::ostringstream csv;
        csv << "s_max,bucket,accuracy,pairs\n";
        for (const int s : s_values) {
            const auto acc = eval::match_accuracy_by_distance(model_for(s), eval_scene.clip, eval::default_buckets());
            for (const auto& a : acc) {
                std::snprintf(buf, sizeof(buf), "%d,%s,%.6f,%lld\n", s, a.bucket.label().c_str(), a.percent(),
                              a.total);
                csv << buf;
            }
        }
        write_text(dir / "skip_protocol.csv", csv.str());
        out << "skip protocol: " << s_values.size() << " models -> " << (dir / "skip_protocol.csv").string() << "\n";
    }
    if (protocol != "skip") {
        const auto sweep = eval::occlusion_sweep(model_for(train_config.loss.max_skip), eval_scene, L_values, tracker);
        std::ostringstream csv;
        csv << "tracker,L,idf1,idsw,idtp,idfp,idfn\n";
        auto emit = [&](const char* name, const std::vector<eval::SweepPoint>& points) {
            for (const auto& p : points) {
                std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%d,%lld,%lld,%lld\n", name, p.L, p.metrics.idf1,
                              p.metrics.idsw, p.metrics.idtp, p.metrics.idfp, p.metrics.idfn);
                csv << buf;
            }
        };
        emit("learned", sweep.learned);
        emit("iou_baseline", sweep.baseline);
        write_text(dir / "occlusion_protocol.csv", csv.str());
        out << "occlusion protocol: " << L_values.size() << " lengths -> "
            << (dir / "occlusion_protocol.csv").string() << "\n";
    }
}

std::string one_line(std::string text) {
    for (auto& ch : text) {
        if (ch == '\n' || ch == '\r') ch = ' ';
    }
    while (!text.empty() && text.back() == ' ') text.pop_back();
    return text;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Path consistency multi-object association: simulate, train, track, evaluate", "pcmot"};
    app.require_subcommand(1);

    Common sim_c, train_c, track_c, eval_c, ablate_c;

    auto* simulate = app.add_subcommand("simulate", "generate a synthetic scene (gt.txt, det.txt, scene.cfg, occlusions.csv)");
    add_common(simulate, sim_c);
    sim_c.keys.add(simulate, scene_defaults());

    std::vector<std::string> train_inputs;
    auto* train_cmd = app.add_subcommand("train", "train the embedding model (model.ckpt, train_report.csv)");
    add_common(train_cmd, train_c);
    train_cmd->add_option("--input", train_inputs, "MOT detection files with appearance columns")->delimiter(',');
    train_c.keys.add(train_cmd, train_defaults());

    std::string track_input, track_model;
    auto* track = app.add_subcommand("track", "track detections (tracks.txt, assignments.csv)");
    add_common(track, track_c);
    track->add_option("--input", track_input, "MOT detection file");
    track->add_option("--model", track_model, "model checkpoint");
    track_c.keys.add(track, tracker_defaults());

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "score tracks and models (eval_report.csv)");
    add_common(eval_cmd, eval_c);
    eval_cmd->add_option("--gt", eval_args.gt, "ground-truth MOT file");
    eval_cmd->add_option("--pred", eval_args.pred, "predicted MOT tracks");
    eval_cmd->add_option("--model", eval_args.model, "model checkpoint for matching accuracy");
    eval_cmd->add_option("--occlusions", eval_args.occlusions, "occlusions.csv for the occlusion sweep");
    eval_c.keys.add(eval_cmd, "L", "0,10,...,60");
    eval_c.keys.add(eval_cmd, "max_distance", "48");
    eval_c.keys.add(eval_cmd, tracker_defaults());

    auto* ablate = app.add_subcommand("ablate", "skip-limit and occlusion-length protocols end to end");
    add_common(ablate, ablate_c);
    ablate_c.keys.add(ablate, "protocol", "both");
    ablate_c.keys.add(ablate, "train_scenes", "2");
    ablate_c.keys.add(ablate, "s_max_values", "-1,4");
    ablate_c.keys.add(ablate, "L", "0,10,...,60");
    ablate_c.keys.add(ablate, scene_defaults());
    ablate_c.keys.add(ablate, train_defaults());
    ablate_c.keys.add(ablate, tracker_defaults());

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("pcmot");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_store) argv.push_back(a.data());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e, out, err);
        err << "pcmot: " << one_line(e.what()) << "\n";
        return e.get_exit_code();
    }

    try {
        if (simulate->parsed()) do_simulate(sim_c, out);
        else if (train_cmd->parsed()) do_train(train_c, train_inputs, out);
        else if (track->parsed()) do_track(track_c, track_input, track_model, out);
        else if (eval_cmd->parsed()) do_eval(eval_c, eval_args, out);
        else if (ablate->parsed()) do_ablate(ablate_c, out);
    } catch (const std::exception& e) {
        err << "pcmot: error: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}

}  // namespace pcmot::cli
