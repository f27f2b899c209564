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

#include "labelenc/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "labelenc/nn_blocks.hpp"

namespace labelenc {
namespace {

Var basic_block_fwd(const ParamStore& ps, const std::string& prefix, const Var& x, int stride) {
  Var h = ops::relu(nn::conv_fwd(ps, prefix + ".conv1", x, stride, 1));
  h = nn::conv_fwd(ps, prefix + ".conv2", h, 1, 1);
  Var shortcut = ps.has(prefix + ".proj.w") ? nn::conv_fwd(ps, prefix + ".proj", x, stride, 0) : x;
  return ops::relu(ops::add(h, shortcut));
}

double box_iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
               double by2) {
  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return inter / uni;
}

}  // namespace

int BackboneConfig::scaled(int channels) const {
  return static_cast<int>(std::lround(channels * width_mult));
}

void BackboneConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("BackboneConfig: in_channels must be >= 1");
  if (width_mult <= 0.0 || width_mult > 1.0)
    throw std::invalid_argument("BackboneConfig: width_mult must be in (0, 1]");
  if (scaled(base_channels) < 8) throw std::invalid_argument("BackboneConfig: scaled width below 8");
  if (fpn_channels < 8) throw std::invalid_argument("BackboneConfig: fpn_channels too small");
  if (pyramid_strides != std::vector<int>{8, 16, 32})
    throw std::invalid_argument("BackboneConfig: pyramid strides must be {8, 16, 32}");
}

void HeadConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("HeadConfig: num_classes must be >= 1");
  if (channels < 8) throw std::invalid_argument("HeadConfig: channels too small");
  if (prior_prob <= 0.0 || prior_prob >= 1.0)
    throw std::invalid_argument("HeadConfig: prior_prob must be in (0, 1)");
}

ParamStore build_backbone(const BackboneConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(Rng::derive(seed, "backbone"));
  ParamStore ps;
  const int c = config.scaled(config.base_channels);
  nn::add_conv(ps, rng, "stem", c, config.in_channels, 3);
  int in = c;
  for (int s = 1; s <= 4; ++s) {
    const int out = c << (s - 1);
    const std::string prefix = "stage" + std::to_string(s) + ".block1";
    nn::add_conv(ps, rng, prefix + ".conv1", out, in, 3);
    nn::add_conv(ps, rng, prefix + ".conv2", out, out, 3);
    nn::add_conv(ps, rng, prefix + ".proj", out, in, 1);
    in = out;
  }
  nn::add_fpn(ps, rng, {2 * c, 4 * c, 8 * c}, config.fpn_channels);
  return ps;
}

std::vector<Var> backbone_forward(const ParamStore& params, const BackboneConfig& config,
                                  const Var& images) {
  if (!images || images->value.ndim() != 4)
    throw std::invalid_argument("backbone_forward: images must be N x C x H x W");
  if (images->value.dim(1) != config.in_channels)
    throw std::invalid_argument("backbone_forward: channel mismatch");
  const int H = images->value.dim(2), W = images->value.dim(3);
  if (H % 32 != 0 || W % 32 != 0)
    throw std::invalid_argument("backbone_forward: input dims must be divisible by 32");

  Var x = ops::relu(nn::conv_fwd(params, "stem", images, 2, 1));
  std::vector<Var> taps;
  for (int s = 1; s <= 4; ++s) {
    x = basic_block_fwd(params, "stage" + std::to_string(s) + ".block1", x, 2);
    if (s >= 2) taps.push_back(x);  // strides 8, 16, 32
  }
  return nn::fpn_fwd(params, taps);
}

ParamStore build_head(const HeadConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(Rng::derive(seed, "head"));
  ParamStore ps;
  nn::add_conv(ps, rng, "tower1", config.channels, config.channels, 3);
  nn::add_conv(ps, rng, "tower2", config.channels, config.channels, 3);
  const double cls_bias = -std::log((1.0 - config.prior_prob) / config.prior_prob);
  nn::add_conv(ps, rng, "cls", config.num_classes, config.channels, 3, cls_bias);
  nn::add_conv(ps, rng, "reg", 4, config.channels, 3);
  return ps;
}

std::vector<std::pair<Var, Var>> head_forward(const ParamStore& params, const HeadConfig& config,
                                              const std::vector<Var>& pyramid,
                                              const std::vector<int>& strides) {
  if (pyramid.size() != strides.size())
    throw std::invalid_argument("head_forward: pyramid/stride count mismatch");
  std::vector<std::pair<Var, Var>> out;
  out.reserve(pyramid.size());
  for (size_t l = 0; l < pyramid.size(); ++l) {
    const Var& p = pyramid[l];
    if (p->value.dim(1) != config.channels)
      throw std::invalid_argument("head_forward: pyramid channels " +
                                  std::to_string(p->value.dim(1)) + " do not match head input " +
                                  std::to_string(config.channels));
    Var t = ops::relu(nn::conv_fwd(params, "tower1", p, 1, 1));
    t = ops::relu(nn::conv_fwd(params, "tower2", t, 1, 1));
    Var cls = nn::conv_fwd(params, "cls", t, 1, 1);
    Var reg = ops::scale(ops::exp(nn::conv_fwd(params, "reg", t, 1, 1)), double(strides[l]));
    out.emplace_back(cls, reg);
  }
  return out;
}

std::vector<LevelTargets> assign_targets(const std::vector<Annotation>& annotations, int num_classes,
                                         int height, int width, const std::vector<int>& strides,
                                         const std::vector<std::pair<double, double>>& level_ranges) {
  if (strides.size() != level_ranges.size())
    throw std::invalid_argument("assign_targets: strides/ranges mismatch");
  std::vector<LevelTargets> out;
  out.reserve(strides.size());
  for (size_t l = 0; l < strides.size(); ++l) {
    const int s = strides[l];
    const int h = height / s, w = width / s;
    LevelTargets t;
    t.cls_onehot = Tensor({num_classes, h, w});
    t.reg = Tensor({4, h, w});
    t.pos = Tensor({1, h, w});
    const auto [lo, hi] = level_ranges[l];
    for (int i = 0; i < h; ++i) {
      const double y = (i + 0.5) * s;
      for (int j = 0; j < w; ++j) {
        const double x = (j + 0.5) * s;
        int best = -1;
        double best_area = 0.0;
        for (size_t a = 0; a < annotations.size(); ++a) {
          const Annotation& box = annotations[a];
          if (x < box.x_min || x > box.x_max || y < box.y_min || y > box.y_max) continue;
          const double m = std::max(std::max(x - box.x_min, box.x_max - x),
                                    std::max(y - box.y_min, box.y_max - y));
          if (m <= lo || m > hi) continue;
          if (best < 0 || box.area() < best_area) {
            best = static_cast<int>(a);
            best_area = box.area();
          }
        }
        if (best >= 0) {
          const Annotation& box = annotations[static_cast<size_t>(best)];
          t.cls_onehot.at3(box.class_id, i, j) = 1.0;
          t.pos.at3(0, i, j) = 1.0;
          t.reg.at3(0, i, j) = x - box.x_min;
          t.reg.at3(1, i, j) = y - box.y_min;
          t.reg.at3(2, i, j) = box.x_max - x;
          t.reg.at3(3, i, j) = box.y_max - y;
          ++t.num_pos;
        }
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

BatchTargets stack_targets(const std::vector<std::vector<LevelTargets>>& per_image) {
  if (per_image.empty()) throw std::invalid_argument("stack_targets: empty batch");
  const int N = static_cast<int>(per_image.size());
  const size_t L = per_image[0].size();
  BatchTargets out;
  for (size_t l = 0; l < L; ++l) {
    const auto& t0 = per_image[0][l];
    const int C = t0.cls_onehot.dim(0), h = t0.cls_onehot.dim(1), w = t0.cls_onehot.dim(2);
    Tensor cls({N, C, h, w}), reg({N, 4, h, w}), pos({N, 1, h, w});
    for (int n = 0; n < N; ++n) {
      const auto& t = per_image[static_cast<size_t>(n)][l];
      std::copy(t.cls_onehot.data(), t.cls_onehot.data() + t.cls_onehot.numel(),
                cls.data() + int64_t(n) * C * h * w);
      std::copy(t.reg.data(), t.reg.data() + t.reg.numel(), reg.data() + int64_t(n) * 4 * h * w);
      std::copy(t.pos.data(), t.pos.data() + t.pos.numel(), pos.data() + int64_t(n) * h * w);
      out.num_pos += t.num_pos;
    }
    out.cls_onehot.push_back(std::move(cls));
    out.reg.push_back(std::move(reg));
    out.pos.push_back(std::move(pos));
  }
  return out;
}

Var detection_loss(const std::vector<std::pair<Var, Var>>& predictions, const BatchTargets& targets,
                   double focal_alpha, double focal_gamma) {
  if (predictions.size() != targets.cls_onehot.size())
    throw std::invalid_argument("detection_loss: level count mismatch");
  Var total;
  for (size_t l = 0; l < predictions.size(); ++l) {
    const auto& [cls, reg] = predictions[l];
    if (!cls->value.all_finite() || !reg->value.all_finite())
      throw std::runtime_error("detection_loss: non-finite prediction at level " + std::to_string(l));
    Var focal = ops::focal_loss_sum(cls, targets.cls_onehot[l], focal_alpha, focal_gamma);
    Var giou = ops::giou_loss_sum(reg, targets.reg[l], targets.pos[l]);
    Var level = ops::add(focal, giou);
    total = total ? ops::add(total, level) : level;
  }
  return ops::scale(total, 1.0 / std::max(1, targets.num_pos));
}

std::vector<Detection> decode_detections(const std::vector<std::pair<Tensor, Tensor>>& predictions,
                                         const std::vector<int>& strides, int height, int width,
                                         double score_thresh, double nms_iou, int max_dets) {
  if (score_thresh <= 0.0 || score_thresh >= 1.0 || nms_iou <= 0.0 || nms_iou >= 1.0)
    throw std::invalid_argument("decode_detections: thresholds must lie in (0, 1)");
  std::vector<Detection> candidates;
  for (size_t l = 0; l < predictions.size(); ++l) {
    const Tensor& cls = predictions[l].first;
    const Tensor& reg = predictions[l].second;
    const int C = cls.dim(0), h = cls.dim(1), w = cls.dim(2);
    const int s = strides[l];
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        const double x = (j + 0.5) * s, y = (i + 0.5) * s;
        for (int c = 0; c < C; ++c) {
          const double score = 1.0 / (1.0 + std::exp(-cls.at3(c, i, j)));
          if (score <= score_thresh) continue;
          Detection d;
          d.class_id = c;
          d.score = score;
          d.x_min = std::clamp(x - reg.at3(0, i, j), 0.0, double(width));
          d.y_min = std::clamp(y - reg.at3(1, i, j), 0.0, double(height));
          d.x_max = std::clamp(x + reg.at3(2, i, j), 0.0, double(width));
          d.y_max = std::clamp(y + reg.at3(3, i, j), 0.0, double(height));
          if (d.x_max <= d.x_min || d.y_max <= d.y_min) continue;
          candidates.push_back(d);
        }
      }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  std::vector<Detection> kept;
  for (const Detection& d : candidates) {
    if (static_cast<int>(kept.size()) >= max_dets) break;
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id != d.class_id) continue;
      if (box_iou(k.x_min, k.y_min, k.x_max, k.y_max, d.x_min, d.y_min, d.x_max, d.y_max) >=
          nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

}  // namespace labelenc
