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

#include "labelenc/viz.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace labelenc {

void write_pgm(const std::vector<std::vector<uint8_t>>& gray, const std::string& path) {
  if (gray.empty() || gray[0].empty()) throw std::invalid_argument("write_pgm: empty image");
  const size_t w = gray[0].size();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
  os << "P5\n" << w << " " << gray.size() << "\n255\n";
  for (const auto& row : gray) {
    if (row.size() != w) throw std::invalid_argument("write_pgm: ragged rows");
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
  }
  if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

std::vector<std::string> viz_label_channels(const LabelTensor& labels, const std::string& prefix) {
  std::vector<std::string> paths;
  for (int c = 0; c < labels.num_classes; ++c) {
    std::vector<std::vector<uint8_t>> gray(static_cast<size_t>(labels.height),
                                           std::vector<uint8_t>(static_cast<size_t>(labels.width)));
    for (int y = 0; y < labels.height; ++y)
      for (int x = 0; x < labels.width; ++x) {
        const double v = std::clamp(labels.values.at3(c, y, x), 0.0, 1.0);
        gray[static_cast<size_t>(y)][static_cast<size_t>(x)] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
    std::string path = prefix + "_c" + std::to_string(c) + ".pgm";
    write_pgm(gray, path);
    paths.push_back(std::move(path));
  }
  return paths;
}

void viz_feature_intensity(const Tensor& features, const std::string& path) {
  if (features.ndim() != 3 && !(features.ndim() == 4 && features.dim(0) == 1))
    throw std::invalid_argument("viz_feature_intensity: expected C x H x W, got " +
                                features.shape_str());
  const int off = features.ndim() == 4 ? 1 : 0;
  const int C = features.dim(off), H = features.dim(off + 1), W = features.dim(off + 2);
  std::vector<double> norm(static_cast<size_t>(H) * W, 0.0);
  const double* p = features.data();
  for (int c = 0; c < C; ++c)
    for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) {
      const double v = p[c * static_cast<int64_t>(H) * W + i];
      norm[static_cast<size_t>(i)] += v * v;
    }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (auto& v : norm) {
    v = std::sqrt(v);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  std::vector<std::vector<uint8_t>> gray(static_cast<size_t>(H),
                                         std::vector<uint8_t>(static_cast<size_t>(W), 0));
  if (hi - lo <= 0.0) {
    std::cerr << "viz_feature_intensity: constant map; writing all-black image\n";
  } else {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        gray[static_cast<size_t>(y)][static_cast<size_t>(x)] = static_cast<uint8_t>(
            std::lround((norm[static_cast<size_t>(y) * W + x] - lo) / (hi - lo) * 255.0));
  }
  write_pgm(gray, path);
}

}  // namespace labelenc
