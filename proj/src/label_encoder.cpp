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

#include "labelenc/label_encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "labelenc/nn_blocks.hpp"

namespace labelenc {
namespace {

// Per-stage (mid, out) bottleneck channels before width scaling. Block counts
// are {1, 2, 2, 1}; the first block of each stage carries the stride-2 conv.
struct StageSpec {
  int mid, out, blocks;
};
constexpr StageSpec kStages[4] = {{64, 256, 1}, {128, 512, 2}, {256, 1024, 2}, {512, 2048, 1}};

std::string block_prefix(int stage, int block) {
  return "stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

void add_bottleneck(ParamStore& ps, Rng& rng, const std::string& prefix, int in, int mid, int out,
                    int stride) {
  nn::add_conv(ps, rng, prefix + ".conv1", mid, in, 1);
  nn::add_conv(ps, rng, prefix + ".conv2", mid, mid, 3);
  nn::add_conv(ps, rng, prefix + ".conv3", out, mid, 1);
  if (stride != 1 || in != out) nn::add_conv(ps, rng, prefix + ".proj", out, in, 1);
}

Var bottleneck_fwd(const ParamStore& ps, const std::string& prefix, const Var& x, int stride) {
  Var h = ops::relu(nn::conv_fwd(ps, prefix + ".conv1", x, 1, 0));
  h = ops::relu(nn::conv_fwd(ps, prefix + ".conv2", h, stride, 1));
  h = nn::conv_fwd(ps, prefix + ".conv3", h, 1, 0);
  Var shortcut = ps.has(prefix + ".proj.w") ? nn::conv_fwd(ps, prefix + ".proj", x, stride, 0) : x;
  return ops::relu(ops::add(h, shortcut));
}

}  // namespace

int EncoderConfig::scaled(int channels) const {
  return static_cast<int>(std::lround(channels * width_mult));
}

void EncoderConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("EncoderConfig: num_classes must be >= 1");
  if (width_mult <= 0.0 || width_mult > 1.0)
    throw std::invalid_argument("EncoderConfig: width_mult must be in (0, 1]");
  if (fpn_channels < 8) throw std::invalid_argument("EncoderConfig: fpn_channels too small");
  if (scaled(64) < 8)
    throw std::invalid_argument("EncoderConfig: width_mult scales a stage below 8 channels");
  if (pyramid_strides.size() != 3)
    throw std::invalid_argument("EncoderConfig: expected three pyramid strides");
  int prev = 0;
  for (int s : pyramid_strides) {
    if (s <= prev || (s & (s - 1)) != 0)
      throw std::invalid_argument("EncoderConfig: strides must be strictly increasing powers of two");
    prev = s;
  }
}

ParamStore build_encoder(const EncoderConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(Rng::derive(seed, "encoder"));
  ParamStore ps;
  nn::add_conv(ps, rng, "stage1.conv", config.scaled(128), config.num_classes, 7);
  int in = config.scaled(128);
  for (int s = 0; s < 4; ++s) {
    const auto& spec = kStages[s];
    for (int b = 1; b <= spec.blocks; ++b) {
      add_bottleneck(ps, rng, block_prefix(s + 2, b), in, config.scaled(spec.mid),
                     config.scaled(spec.out), b == 1 ? 2 : 1);
      in = config.scaled(spec.out);
    }
  }
  // FPN taps stages 3-5 (strides 8, 16, 32).
  nn::add_fpn(ps, rng,
              {config.scaled(kStages[1].out), config.scaled(kStages[2].out), config.scaled(kStages[3].out)},
              config.fpn_channels);
  return ps;
}

std::vector<Var> encode(const ParamStore& params, const EncoderConfig& config, const Var& labels) {
  if (!labels || labels->value.ndim() != 4)
    throw std::invalid_argument("encode: labels must be N x C x H x W");
  if (labels->value.dim(1) != config.num_classes)
    throw std::invalid_argument("encode: label channels do not match num_classes");
  const int H = labels->value.dim(2), W = labels->value.dim(3);
  const int max_stride = config.pyramid_strides.back();
  for (int s : config.pyramid_strides)
    if (H % s != 0 || W % s != 0)
      throw std::invalid_argument("encode: input " + std::to_string(H) + "x" + std::to_string(W) +
                                  " not divisible by stride " + std::to_string(s));
  if (H % 32 != 0 || W % 32 != 0)
    throw std::invalid_argument("encode: input not divisible by stride 32");
  (void)max_stride;

  Var x = ops::relu(nn::conv_fwd(params, "stage1.conv", labels, 2, 3));
  std::vector<Var> taps;
  for (int s = 0; s < 4; ++s) {
    for (int b = 1; b <= kStages[s].blocks; ++b)
      x = bottleneck_fwd(params, block_prefix(s + 2, b), x, b == 1 ? 2 : 1);
    if (s >= 1) taps.push_back(x);  // stages 3, 4, 5
  }
  return nn::fpn_fwd(params, taps);
}

}  // namespace labelenc
