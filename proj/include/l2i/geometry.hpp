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

#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>

namespace l2i {

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Axis-aligned box in normalized image coordinates.
///
/// Coordinates are fractions of image width/height in [0,1] with x1 < x2 and
/// y1 < y2. Zero-area boxes cannot be constructed.
class BBox {
 public:
  BBox(double x1, double y1, double x2, double y2);

  static BBox unit() { return BBox(0.0, 0.0, 1.0, 1.0); }
  static BBox from_array(const std::array<double, 4>& c) { return BBox(c[0], c[1], c[2], c[3]); }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  std::array<double, 4> coords() const { return {x1_, y1_, x2_, y2_}; }

  /// True when `other` lies entirely inside this box.
  bool contains(const BBox& other) const;

  bool operator==(const BBox&) const = default;

 private:
  double x1_, y1_, x2_, y2_;
};

std::string to_string(const BBox& b);

struct ImageDims {
  int width_px;
  int height_px;

  ImageDims(int w, int h);
  bool operator==(const ImageDims&) const = default;
};

double area(const BBox& b);

/// Overlap rectangle, absent when the boxes share no positive-area region.
std::optional<BBox> intersect(const BBox& a, const BBox& b);

/// Area of a ∩ b as a fraction of the image; 0 for edge/corner contact.
double intersection_area(const BBox& a, const BBox& b);

double iou(const BBox& a, const BBox& b);

/// Converts a pixel box [x1, y1, x2, y2] into normalized coordinates.
BBox normalize(const std::array<int, 4>& px_box, const ImageDims& dims);

}  // namespace l2i
