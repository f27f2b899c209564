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

#include <limits>
#include <utility>
#include <vector>

#include "labelenc/label_codec.hpp"
#include "labelenc/param_store.hpp"

namespace labelenc {

/// Small 4-stage residual image backbone plus FPN; pyramid at strides 8/16/32.
struct BackboneConfig {
  int in_channels = 3;
  int base_channels = 64;
  double width_mult = 1.0;
  int fpn_channels = 256;
  std::vector<int> pyramid_strides = {8, 16, 32};

  void validate() const;
  int scaled(int channels) const;
};

/// Anchor-free shared detection head: a 2-conv tower plus class and box
/// predictors applied with the same weights at every pyramid level.
struct HeadConfig {
  int num_classes = 80;
  int channels = 256;  // tower width; must equal the pyramid's fpn_channels
  double prior_prob = 0.01;

  void validate() const;
};

struct Detection {
  int class_id = 0;
  double score = 0.0;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

/// Per-level dense training targets for one image.
struct LevelTargets {
  Tensor cls_onehot;  // C x h x w
  Tensor reg;         // 4 x h x w  (l, t, r, b) in input pixels
  Tensor pos;         // 1 x h x w
  int num_pos = 0;
};

/// Batched targets ready for the loss (leading N dimension).
struct BatchTargets {
  std::vector<Tensor> cls_onehot;  // per level, N x C x h x w
  std::vector<Tensor> reg;         // per level, N x 4 x h x w
  std::vector<Tensor> pos;         // per level, N x 1 x h x w
  int num_pos = 0;
};

ParamStore build_backbone(const BackboneConfig& config, uint64_t seed);
std::vector<Var> backbone_forward(const ParamStore& params, const BackboneConfig& config,
                                  const Var& images);

ParamStore build_head(const HeadConfig& config, uint64_t seed);

/// Returns per-level (class logits N x C x h x w, regression N x 4 x h x w).
/// Regression is exp-scaled by the level stride, so distances are strictly
/// positive. Works on any pyramid with matching channels, which is what lets
/// the same head consume backbone and encoder features.
std::vector<std::pair<Var, Var>> head_forward(const ParamStore& params, const HeadConfig& config,
                                              const std::vector<Var>& pyramid,
                                              const std::vector<int>& strides);

inline std::vector<std::pair<double, double>> default_level_ranges() {
  return {{0.0, 64.0}, {64.0, 128.0}, {128.0, std::numeric_limits<double>::infinity()}};
}

/// FCOS-style assignment: a location is positive for a box when it lies inside
/// it and max(l,t,r,b) falls in the level's range; ties go to the smallest box.
std::vector<LevelTargets> assign_targets(const std::vector<Annotation>& annotations, int num_classes,
                                         int height, int width, const std::vector<int>& strides,
                                         const std::vector<std::pair<double, double>>& level_ranges);

BatchTargets stack_targets(const std::vector<std::vector<LevelTargets>>& per_image);

/// Focal classification loss over all locations plus GIoU regression loss
/// over positives, each divided by max(1, num_pos).
Var detection_loss(const std::vector<std::pair<Var, Var>>& predictions, const BatchTargets& targets,
                   double focal_alpha = 0.25, double focal_gamma = 2.0);

/// Score threshold + per-class greedy NMS over the value pyramid of one image.
std::vector<Detection> decode_detections(const std::vector<std::pair<Tensor, Tensor>>& predictions,
                                         const std::vector<int>& strides, int height, int width,
                                         double score_thresh, double nms_iou, int max_dets);

}  // namespace labelenc
