// Copyright 2026 The l2ieval Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "l2i/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace l2i {

namespace {

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

BBox::BBox(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
  if (!in_unit(x1) || !in_unit(y1) || !in_unit(x2) || !in_unit(y2)) {
    throw GeometryError("bbox coordinates outside [0,1]: " + to_string(*this));
  }
  if (!(x1 < x2) || !(y1 < y2)) {
    throw GeometryError("bbox has zero or negative extent: " + to_string(*this));
  }
}

bool BBox::contains(const BBox& o) const {
  return x1_ <= o.x1_ && y1_ <= o.y1_ && o.x2_ <= x2_ && o.y2_ <= y2_;
}

std::string to_string(const BBox& b) {
  std::ostringstream os;
  os.precision(17);
  os << "(" << b.x1() << ", " << b.y1() << ", " << b.x2() << ", " << b.y2() << ")";
  return os.str();
}

ImageDims::ImageDims(int w, int h) : width_px(w), height_px(h) {
  if (w < 1 || h < 1) {
    throw GeometryError("image dimensions must be positive, got " + std::to_string(w) + "x" +
                        std::to_string(h));
  }
}

double area(const BBox& b) { return b.width() * b.height(); }

std::optional<BBox> intersect(const BBox& a, const BBox& b) {
  const double x1 = std::max(a.x1(), b.x1());
  const double y1 = std::max(a.y1(), b.y1());
  const double x2 = std::min(a.x2(), b.x2());
  const double y2 = std::min(a.y2(), b.y2());
  if (x1 < x2 && y1 < y2) return BBox(x1, y1, x2, y2);
  return std::nullopt;
}

double intersection_area(const BBox& a, const BBox& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  if (w <= 0.0 || h <= 0.0) return 0.0;
  return w * h;
}

double iou(const BBox& a, const BBox& b) {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = area(a) + area(b) - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

BBox normalize(const std::array<int, 4>& px, const ImageDims& dims) {
  auto echo = [&] {
    std::ostringstream os;
    os << "[" << px[0] << ", " << px[1] << ", " << px[2] << ", " << px[3] << "] at "
       << dims.width_px << "x" << dims.height_px;
    return os.str();
  };
  if (px[0] == px[2]) throw GeometryError("pixel box has zero width: " + echo());
  if (px[1] == px[3]) throw GeometryError("pixel box has zero height: " + echo());
  if (px[0] < 0 || px[1] < 0 || px[0] > px[2] || px[1] > px[3] || px[2] > dims.width_px ||
      px[3] > dims.height_px) {
    throw GeometryError("pixel box out of range: " + echo());
  }
  const double w = dims.width_px;
  const double h = dims.height_px;
  return BBox(px[0] / w, px[1] / h, px[2] / w, px[3] / h);
}

}  // namespace l2i
