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

#include <string>
#include <vector>

#include "labelenc/ops.hpp"
#include "labelenc/param_store.hpp"

namespace labelenc::nn {

/// Registers a conv layer's weight and bias under `name`.w / `name`.b.
inline void add_conv(ParamStore& ps, Rng& rng, const std::string& name, int cout, int cin, int k,
                     double bias_init = 0.0) {
  ps.add(name + ".w", ParamStore::conv_init(rng, cout, cin, k, k));
  ps.add(name + ".b", Tensor({cout}, bias_init));
}

inline Var conv_fwd(const ParamStore& ps, const std::string& name, const Var& x, int stride,
                    int pad) {
  return ops::conv2d(x, ps.get(name + ".w"), ps.get(name + ".b"), stride, pad);
}

/// Builds FPN parameters over `taps` input channel counts; every output map
/// has `fpn_channels` channels.
inline void add_fpn(ParamStore& ps, Rng& rng, const std::vector<int>& tap_channels,
                    int fpn_channels) {
  for (size_t i = 0; i < tap_channels.size(); ++i) {
    add_conv(ps, rng, "fpn.lateral" + std::to_string(i), fpn_channels, tap_channels[i], 1);
    add_conv(ps, rng, "fpn.out" + std::to_string(i), fpn_channels, fpn_channels, 3);
  }
}

/// Top-down FPN pass. `taps` are ordered fine-to-coarse (stride 8, 16, 32).
inline std::vector<Var> fpn_fwd(const ParamStore& ps, const std::vector<Var>& taps) {
  const int L = static_cast<int>(taps.size());
  std::vector<Var> merged(taps.size());
  for (int i = L - 1; i >= 0; --i) {
    Var lat = conv_fwd(ps, "fpn.lateral" + std::to_string(i), taps[i], 1, 0);
    merged[i] = (i == L - 1) ? lat : ops::add(lat, ops::upsample_nearest2(merged[i + 1]));
  }
  std::vector<Var> out(taps.size());
  for (int i = 0; i < L; ++i) out[i] = conv_fwd(ps, "fpn.out" + std::to_string(i), merged[i], 1, 1);
  return out;
}

}  // namespace labelenc::nn
