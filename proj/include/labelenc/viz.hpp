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

#include "labelenc/label_codec.hpp"
#include "labelenc/tensor.hpp"

namespace labelenc {

/// 8-bit grayscale PGM (P5). `gray` is H x W with values in [0, 255].
void write_pgm(const std::vector<std::vector<uint8_t>>& gray, const std::string& path);

/// Dumps each class channel of a label tensor as <prefix>_c<k>.pgm, mapping
/// [0, 1] linearly onto [0, 255]. Returns the written paths.
std::vector<std::string> viz_label_channels(const LabelTensor& labels, const std::string& prefix);

/// Per-pixel L2 norm over channels of a C x H x W (or 1 x C x H x W) feature
/// map, min-max normalized to [0, 255]. A constant map produces an all-black
/// image with a warning.
void viz_feature_intensity(const Tensor& features, const std::string& path);

}  // namespace labelenc
