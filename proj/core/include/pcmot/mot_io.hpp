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
#include "pcmot/types.hpp"

#include <Eigen/Core>

#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace pcmot {

// One row of a MOTChallenge text file:
//   frame,id,bb_left,bb_top,w,h,conf,x,y,z[,f1,...,fn]
// Columns after the tenth carry an optional appearance descriptor, the same
// layout used by detection files that ship precomputed re-id features.
struct MotRecord {
    int frame = 0;
    int id = -1;
    Box box;
    Eigen::VectorXd appearance;
};

std::vector<MotRecord> read_mot_records(std::istream& in, const std::string& source = "<stream>");
std::vector<MotRecord> read_mot_records(const std::filesystem::path& path);

// Groups records by frame (sorted), appends the null object to every frame.
// id >= 0 becomes gt_identity; id == -1 leaves it empty.
std::vector<FrameObjects> group_frames(std::span<const MotRecord> records);

std::vector<FrameObjects> load_mot(const std::filesystem::path& path);

// Coordinates are written with two decimals; width/height are derived from
// the rounded corners so that load_mot recovers right/bottom to 0.01.
void write_mot(std::ostream& out, std::span<const MotRecord> records);
void write_mot(const std::filesystem::path& path, std::span<const MotRecord> records);

// Records for every real detection of a clip; with_identity=false writes -1
// in the id column (detector view), with_appearance controls trailing columns.
std::vector<MotRecord> clip_records(const Clip& clip, bool with_identity, bool with_appearance);

}  // namespace pcmot
