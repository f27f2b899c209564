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

#include "labelenc/label_codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace labelenc {

double box_fill_value(double px, double py, const Annotation& box) {
  const double cx = 0.5 * (box.x_min + box.x_max);
  const double cy = 0.5 * (box.y_min + box.y_max);
  const double hw = 0.5 * box.width();
  const double hh = 0.5 * box.height();
  const double dx = std::fabs(px - cx) / hw;
  const double dy = std::fabs(py - cy) / hh;
  const double d = std::max(dx, dy);
  if (d > 1.0 + 1e-9) throw std::invalid_argument("box_fill_value: point outside box");
  return 1.0 - 0.5 * std::min(d, 1.0);
}

namespace {

void validate(const Annotation& a, size_t idx, int num_classes, int height, int width) {
  const std::string who = "annotation " + std::to_string(idx);
  if (a.class_id < 0 || a.class_id >= num_classes)
    throw std::invalid_argument(who + ": class_id " + std::to_string(a.class_id) + " out of [0, " +
                                std::to_string(num_classes) + ")");
  if (!(a.x_max > a.x_min) || !(a.y_max > a.y_min))
    throw std::invalid_argument(who + ": box has non-positive area");
  if (a.x_min < 0 || a.y_min < 0 || a.x_max > width || a.y_max > height)
    throw std::invalid_argument(who + ": box exceeds image bounds " + std::to_string(width) + "x" +
                                std::to_string(height));
}

void splat_box(Tensor& values, const Annotation& a, double u, int height, int width) {
  const int j0 = std::max(0, static_cast<int>(std::floor(a.x_min - 0.5)));
  const int j1 = std::min(width - 1, static_cast<int>(std::ceil(a.x_max)));
  const int i0 = std::max(0, static_cast<int>(std::floor(a.y_min - 0.5)));
  const int i1 = std::min(height - 1, static_cast<int>(std::ceil(a.y_max)));
  for (int i = i0; i <= i1; ++i) {
    const double py = i + 0.5;
    if (py < a.y_min || py > a.y_max) continue;
    for (int j = j0; j <= j1; ++j) {
      const double px = j + 0.5;
      if (px < a.x_min || px > a.x_max) continue;
      const double v = u * box_fill_value(px, py, a);
      double& cell = values.at3(a.class_id, i, j);
      cell = std::max(cell, v);
    }
  }
}

}  // namespace

LabelTensor render_labels(const std::vector<Annotation>& annotations, int num_classes, int height,
                          int width) {
  if (num_classes < 1 || height < 1 || width < 1)
    throw std::invalid_argument("render_labels: invalid tensor dimensions");
  LabelTensor out;
  out.values = Tensor({num_classes, height, width});
  out.num_classes = num_classes;
  out.height = height;
  out.width = width;
  for (size_t idx = 0; idx < annotations.size(); ++idx) {
    validate(annotations[idx], idx, num_classes, height, width);
    splat_box(out.values, annotations[idx], 1.0, height, width);
  }
  return out;
}

LabelTensor augment_labels(const std::vector<std::pair<Annotation, double>>& scaled_boxes,
                           int num_classes, int height, int width) {
  if (num_classes < 1 || height < 1 || width < 1)
    throw std::invalid_argument("augment_labels: invalid tensor dimensions");
  LabelTensor out;
  out.values = Tensor({num_classes, height, width});
  out.num_classes = num_classes;
  out.height = height;
  out.width = width;
  for (size_t idx = 0; idx < scaled_boxes.size(); ++idx) {
    const auto& [ann, u] = scaled_boxes[idx];
    if (u < 0.0 || u > 1.0)
      throw std::invalid_argument("augment_labels: scale for box " + std::to_string(idx) +
                                  " outside [0, 1]");
    validate(ann, idx, num_classes, height, width);
    splat_box(out.values, ann, u, height, width);
  }
  return out;
}

std::vector<double> draw_box_scales(Rng& rng, size_t num_boxes, double prob, bool per_image) {
  std::vector<double> scales(num_boxes, 1.0);
  if (per_image) {
    if (rng.uniform() < prob) {
      const double u = rng.uniform();
      for (auto& s : scales) s = u;
    }
    return scales;
  }
  for (auto& s : scales)
    if (rng.uniform() < prob) s = rng.uniform();
  return scales;
}

}  // namespace labelenc
