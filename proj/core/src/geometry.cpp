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

#include "pcmot/geometry.hpp"

#include "pcmot/error.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pcmot {

bool is_valid(const Box& box) noexcept {
    return std::isfinite(box.left) && std::isfinite(box.top) && std::isfinite(box.right) &&
           std::isfinite(box.bottom) && box.right > box.left && box.bottom > box.top &&
           box.confidence >= 0.0 && box.confidence <= 1.0;
}

Box make_box(double left, double top, double right, double bottom, double confidence) {
    Box box{left, top, right, bottom, confidence};
    if (!is_valid(box)) {
        std::ostringstream msg;
        msg << "invalid box (" << left << ", " << top << ", " << right << ", " << bottom
            << ", conf " << confidence << ")";
        throw ShapeError(msg.str());
    }
    return box;
}

Box box_from_xywh(double left, double top, double width, double height, double confidence) {
    return make_box(left, top, left + width, top + height, confidence);
}

double iou(const Box& a, const Box& b) noexcept {
    const double iw = std::min(a.right, b.right) - std::max(a.left, b.left);
    const double ih = std::min(a.bottom, b.bottom) - std::max(a.top, b.top);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

double center_distance(const Box& a, const Box& b) noexcept {
    return std::hypot(a.center_x() - b.center_x(), a.center_y() - b.center_y());
}

}  // namespace pcmot
