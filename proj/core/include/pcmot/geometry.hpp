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

namespace pcmot {

// Axis-aligned box in image coordinates, stored as (left, top, right, bottom).
struct Box {
    double left = 0.0;
    double top = 0.0;
    double right = 1.0;
    double bottom = 1.0;
    double confidence = 1.0;

    double width() const noexcept { return right - left; }
    double height() const noexcept { return bottom - top; }
    double area() const noexcept { return width() * height(); }
    double center_x() const noexcept { return 0.5 * (left + right); }
    double center_y() const noexcept { return 0.5 * (top + bottom); }

    bool operator==(const Box&) const = default;
};

// Validated constructors; throw ShapeError on zero-area boxes or a
// confidence outside [0, 1].
Box make_box(double left, double top, double right, double bottom, double confidence = 1.0);
Box box_from_xywh(double left, double top, double width, double height, double confidence = 1.0);

bool is_valid(const Box& box) noexcept;

double iou(const Box& a, const Box& b) noexcept;
double center_distance(const Box& a, const Box& b) noexcept;

}  // namespace pcmot
