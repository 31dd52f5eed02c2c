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

#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace pcmot::support {

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliRun run_cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = pcmot::cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Every regular file under dir, by relative path.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) files[std::filesystem::relative(e.path(), dir).string()] = slurp(e.path());
    }
    return files;
}

// simulate -> train -> track -> eval on a small scene inside dir. Returns the
// first failing step's diagnostics, or an empty string.
inline std::string run_pipeline(const std::filesystem::path& dir, int steps = 10) {
    std::filesystem::remove_all(dir);
    const std::string d = dir.string();
    const std::vector<std::vector<std::string>> commands{
        {"simulate", "--seed", "7", "--out", d + "/scene", "--num_identities", "6", "--num_frames", "60",
         "--appearance_dim", "4"},
        {"train", "--seed", "7", "--input", d + "/scene/det.txt", "--out", d + "/model", "--steps",
         std::to_string(steps), "--clip_length", "16", "--hidden_dim", "8", "--embedding_dim", "6", "--G", "6"},
        {"track", "--seed", "7", "--input", d + "/scene/det.txt", "--model", d + "/model/model.ckpt", "--out",
         d + "/track"},
        {"eval", "--seed", "7", "--gt", d + "/scene/gt.txt", "--pred", d + "/track/tracks.txt", "--model",
         d + "/model/model.ckpt", "--occlusions", d + "/scene/occlusions.csv", "--L", "0,30,60", "--out",
         d + "/eval"},
    };
    for (const auto& args : commands) {
        const CliRun r = run_cli(args);
        if (r.code != 0) return args.front() + " exited " + std::to_string(r.code) + ": " + r.err;
    }
    return {};
}

}  // namespace pcmot::support
