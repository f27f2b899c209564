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

#include <vector>

#include "labelenc/param_store.hpp"

namespace labelenc {

/// Label encoding network h(.; psi): a 5-stage residual net over the rendered
/// label tensor, bottleneck block counts {1, 2, 2, 1}, no batch norm, max
/// pooling replaced by stride-2 convolution, with an FPN over stages 3-5.
struct EncoderConfig {
  int num_classes = 80;
  double width_mult = 1.0;     // scales every stage channel count
  int fpn_channels = 256;
  std::vector<int> pyramid_strides = {8, 16, 32};

  void validate() const;
  int scaled(int channels) const;
};

ParamStore build_encoder(const EncoderConfig& config, uint64_t seed);

/// Maps a batch of label tensors (N x C x H x W) to the feature pyramid.
/// H and W must be divisible by every pyramid stride (and by the net's
/// overall stride of 32).
std::vector<Var> encode(const ParamStore& params, const EncoderConfig& config, const Var& labels);

}  // namespace labelenc
