// Copyright 2026 The labelenc Authors
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

#include <utility>
#include <vector>

#include "labelenc/rng.hpp"
#include "labelenc/tensor.hpp"

namespace labelenc {

/// A class-labeled axis-aligned bounding box in pixel coordinates.
struct Annotation {
  int class_id = 0;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
};

/// Dense C x H x W encoding of all annotations of one image. Values lie in
/// [0, 1]; pixels covered by no box of a channel's class are exactly 0.
struct LabelTensor {
  Tensor values;  // C x H x W
  int num_classes = 0;
  int height = 0;
  int width = 0;
};

/// Fill intensity at point (px, py) inside `box`: 1 at the center, 0.5 on the
/// boundary, decaying linearly in the box-normalized Chebyshev distance.
double box_fill_value(double px, double py, const Annotation& box);

/// Rasterizes annotations into a LabelTensor. Pixels are sampled at centers
/// (j + 0.5, i + 0.5); same-class overlaps merge by max. Out-of-bounds or
/// otherwise invalid annotations are rejected with the annotation index.
LabelTensor render_labels(const std::vector<Annotation>& annotations, int num_classes, int height,
                          int width);

/// render_labels with each box's fill intensity scaled by its u in [0, 1]
/// before the cross-box max.
LabelTensor augment_labels(const std::vector<std::pair<Annotation, double>>& scaled_boxes,
                           int num_classes, int height, int width);

/// Training-time draw of per-box scales: with probability `prob` (per box, or
/// once per image when per_image is set) u ~ Uniform(0,1), else u = 1.
std::vector<double> draw_box_scales(Rng& rng, size_t num_boxes, double prob = 0.5,
                                    bool per_image = false);

}  // namespace labelenc
