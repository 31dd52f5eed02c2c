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

#include "pcmot/mot_io.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string_view>

namespace pcmot {
namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

double parse_number(std::string_view field, const std::string& source, std::size_t line,
                    const char* column) {
    const std::string text(trim(field));
    if (text.empty()) throw ParseError(source, line, std::string("empty ") + column + " field");
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || !std::isfinite(value)) {
        throw ParseError(source, line, std::string("bad ") + column + " value '" + text + "'");
    }
    return value;
}

int parse_integer(std::string_view field, const std::string& source, std::size_t line,
                  const char* column) {
    const double value = parse_number(field, source, line, column);
    if (value != std::floor(value) || std::abs(value) > 1e9) {
        throw ParseError(source, line, std::string(column) + " must be an integer");
    }
    return static_cast<int>(value);
}

double round2(double v) { return std::round(v * 100.0) / 100.0; }

}  // namespace

std::vector<MotRecord> read_mot_records(std::istream& in, const std::string& source) {
    std::vector<MotRecord> records;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        const std::string_view row = trim(text);
        if (row.empty() || row.front() == '#') continue;

        std::vector<std::string_view> fields;
        std::size_t begin = 0;
        while (true) {
            const std::size_t comma = row.find(',', begin);
            fields.push_back(row.substr(begin, comma - begin));
            if (comma == std::string_view::npos) break;
            begin = comma + 1;
        }
        if (fields.size() < 7) {
            throw ParseError(source, line,
                             "expected at least 7 comma-separated fields, got " +
                                 std::to_string(fields.size()));
        }

        MotRecord rec;
        rec.frame = parse_integer(fields[0], source, line, "frame");
        rec.id = parse_integer(fields[1], source, line, "id");
        if (rec.id < -1) throw ParseError(source, line, "id must be -1 or non-negative");
        const double left = parse_number(fields[2], source, line, "bb_left");
        const double top = parse_number(fields[3], source, line, "bb_top");
        const double width = parse_number(fields[4], source, line, "width");
        const double height = parse_number(fields[5], source, line, "height");
        const double conf = std::clamp(parse_number(fields[6], source, line, "conf"), 0.0, 1.0);
        if (!(width > 0.0) || !(height > 0.0)) {
            throw ParseError(source, line, "box width and height must be positive");
        }
        rec.box = Box{left, top, left + width, top + height, conf};
        if (fields.size() > 10) {
            rec.appearance.resize(static_cast<Eigen::Index>(fields.size() - 10));
            for (std::size_t k = 10; k < fields.size(); ++k) {
                rec.appearance[static_cast<Eigen::Index>(k - 10)] =
                    parse_number(fields[k], source, line, "feature");
            }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<MotRecord> read_mot_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open MOT file " + path.string());
    return read_mot_records(in, path.string());
}

std::vector<FrameObjects> group_frames(std::span<const MotRecord> records) {
    std::map<int, std::vector<Detection>> by_frame;
    for (const auto& rec : records) {
        std::optional<int> identity;
        if (rec.id >= 0) identity = rec.id;
        by_frame[rec.frame].push_back(Detection::real(rec.frame, rec.box, rec.appearance, identity));
    }
    std::vector<FrameObjects> frames;
    frames.reserve(by_frame.size());
    for (auto& [frame, dets] : by_frame) frames.emplace_back(frame, std::move(dets));
    return frames;
}

std::vector<FrameObjects> load_mot(const std::filesystem::path& path) {
    const auto records = read_mot_records(path);
    return group_frames(records);
}

void write_mot(std::ostream& out, std::span<const MotRecord> records) {
    char buf[64];
    for (const auto& rec : records) {
        if (rec.id < -1) throw ShapeError("MOT id must be -1 or non-negative");
        const double l = round2(rec.box.left);
        const double t = round2(rec.box.top);
        const double w = round2(rec.box.right) - l;
        const double h = round2(rec.box.bottom) - t;
        std::snprintf(buf, sizeof(buf), "%d,%d,%.2f,%.2f,%.2f,%.2f,%.2f,-1,-1,-1", rec.frame,
                      rec.id, l, t, w, h, rec.box.confidence);
        out << buf;
        for (Eigen::Index k = 0; k < rec.appearance.size(); ++k) {
            std::snprintf(buf, sizeof(buf), ",%.17g", rec.appearance[k]);
            out << buf;
        }
        out << '\n';
    }
}

void write_mot(const std::filesystem::path& path, std::span<const MotRecord> records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write MOT file " + path.string());
    write_mot(out, records);
    if (!out) throw IoError("failed writing MOT file " + path.string());
}

std::vector<MotRecord> clip_records(const Clip& clip, bool with_identity, bool with_appearance) {
    std::vector<MotRecord> records;
    for (const auto& frame : clip.frames()) {
        for (const auto& det : frame.reals()) {
            MotRecord rec;
            rec.frame = frame.frame();
            rec.id = with_identity && det.gt_identity ? *det.gt_identity : -1;
            rec.box = *det.box;
            if (with_appearance) rec.appearance = det.appearance;
            records.push_back(std::move(rec));
        }
    }
    return records;
}

}  // namespace pcmot
