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

#include "labelenc/feature_distance.hpp"

#include <stdexcept>

#include "labelenc/nn_blocks.hpp"

namespace labelenc {

ParamStore build_adaptation(int channels, uint64_t seed) {
  if (channels < 8) throw std::invalid_argument("build_adaptation: channels too small");
  Rng rng(Rng::derive(seed, "adaptation"));
  ParamStore ps;
  nn::add_conv(ps, rng, "conv1", channels, channels, 3);
  nn::add_conv(ps, rng, "conv2", channels, channels, 3);
  nn::add_conv(ps, rng, "conv3", channels, channels, 3);
  return ps;
}

Var adaptation_forward(const ParamStore& params, const Var& features) {
  Var h = ops::relu(nn::conv_fwd(params, "conv1", features, 1, 1));
  h = ops::relu(nn::conv_fwd(params, "conv2", h, 1, 1));
  return nn::conv_fwd(params, "conv3", h, 1, 1);
}

Var distance_loss(const std::vector<Var>& backbone_pyramid, const std::vector<Var>& encoder_pyramid,
                  const std::vector<ParamStore>& adaptation, double eps) {
  if (backbone_pyramid.size() != encoder_pyramid.size() ||
      backbone_pyramid.size() != adaptation.size())
    throw std::invalid_argument("distance_loss: pyramid level count mismatch");
  Var total;
  for (size_t l = 0; l < backbone_pyramid.size(); ++l) {
    const Var& xf = backbone_pyramid[l];
    const Var& xh = encoder_pyramid[l];
    if (!xf->value.same_shape(xh->value))
      throw std::invalid_argument("distance_loss: shape mismatch at level " + std::to_string(l) +
                                  ": " + xf->value.shape_str() + " vs " + xh->value.shape_str());
    Var adapted = ops::layer_norm_channels(adaptation_forward(adaptation[l], xf), eps);
    Var target = ops::layer_norm_channels(ops::detach(xh), eps);
    Var level = ops::mean(ops::square(ops::sub(adapted, target)));
    total = total ? ops::add(total, level) : level;
  }
  return ops::scale(total, 1.0 / static_cast<double>(backbone_pyramid.size()));
}

}  // namespace labelenc
