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

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "labelenc/label_codec.hpp"
#include "labelenc/tensor.hpp"

namespace labelenc {

/// One (image, ground truth) pair. Images are 3 x H x W with values in [0, 1].
struct Sample {
  Tensor image;
  std::vector<Annotation> annotations;
  std::string id;
};

struct DatasetManifest {
  std::string split = "train";
  int num_classes = 0;
  std::vector<std::string> class_names;
  int image_size = 0;  // 0 when sizes vary
  uint64_t generator_seed = 0;
  std::string source_path;
};

struct Dataset {
  std::vector<Sample> samples;
  DatasetManifest manifest;
  std::array<double, 3> channel_mean{0, 0, 0};
  std::array<double, 3> channel_std{1, 1, 1};

  size_t size() const { return samples.size(); }
  void compute_channel_stats();
};

struct SyntheticSpec {
  int num_images = 2000;
  int image_size = 128;
  int num_classes = 2;
  int min_objects = 1;
  int max_objects = 4;
  uint64_t seed = 0;
};

/// Noisy backgrounds with filled rectangles (even classes) and ellipses (odd
/// classes); fill patterns cycle with the class index. Fully deterministic
/// given the seed.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Reads a COCO-schema annotation file plus its image directory. Category ids
/// are densified onto [0, C). When `short_edge` > 0, images are resized so
/// the shorter edge matches it and annotations are scaled accordingly.
Dataset load_coco_json(const std::string& annotation_path, const std::string& image_root,
                       int short_edge = 0);

/// Persists the dataset as a directory of PPM images plus a COCO-schema
/// manifest.json.
void save_dataset(const Dataset& dataset, const std::string& dir);

void write_ppm(const Tensor& image, const std::string& path);
Tensor read_ppm(const std::string& path);

/// Bilinear resize of a 3 x H x W image.
Tensor resize_image(const Tensor& image, int out_h, int out_w);

struct Batch {
  Tensor images;                                  // N x 3 x H x W, normalized, zero-padded
  std::vector<std::vector<Annotation>> annotations;
  std::optional<Tensor> labels;                   // N x C x H x W when requested
  std::vector<size_t> sample_indices;
  int padded_height = 0;
  int padded_width = 0;
};

/// Deterministic shuffled batch stream. The order of epoch e depends only on
/// (shuffle_seed, e); label augmentation depends only on (augment_seed,
/// stream position), so runs with different loss configurations see
/// identical data.
class BatchLoader {
 public:
  BatchLoader(const Dataset& dataset, int batch_size, uint64_t shuffle_seed);

  /// Batch for global iteration `iter` (0-based).
  Batch get(int64_t iter, bool with_labels = false, bool augment = false,
            uint64_t augment_seed = 0, double augment_prob = 0.5, bool augment_per_image = false);

  const std::vector<size_t>& epoch_order(int64_t epoch);

 private:
  const Dataset& dataset_;
  int batch_size_;
  uint64_t shuffle_seed_;
  int64_t cached_epoch_ = -1;
  std::vector<size_t> cached_order_;
};

}  // namespace labelenc
