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

/// Feature adaptation network A(.; phi): three 3x3 convolutions with ReLU
/// between them, bridging backbone features into the encoder's latent space.
/// One instance per pyramid level.
ParamStore build_adaptation(int channels, uint64_t seed);

Var adaptation_forward(const ParamStore& params, const Var& features);

/// Per level: mean squared difference between the layer-normalized adapted
/// backbone map and the layer-normalized encoder map; averaged over levels.
/// The encoder side is detached, so no gradient ever reaches its producer;
/// gradients flow into the backbone map and phi only.
Var distance_loss(const std::vector<Var>& backbone_pyramid, const std::vector<Var>& encoder_pyramid,
                  const std::vector<ParamStore>& adaptation, double eps = 1e-5);

}  // namespace labelenc
