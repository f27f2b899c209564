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

#include "labelenc/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <stdexcept>

#include <json.hpp>

namespace labelenc {

namespace fs = std::filesystem;
using nlohmann::json;

void Dataset::compute_channel_stats() {
  double sum[3] = {0, 0, 0}, sumsq[3] = {0, 0, 0};
  int64_t count = 0;
  for (const auto& s : samples) {
    const int hw = s.image.dim(1) * s.image.dim(2);
    for (int c = 0; c < 3; ++c) {
      const double* p = s.image.data() + int64_t(c) * hw;
      for (int i = 0; i < hw; ++i) {
        sum[c] += p[i];
        sumsq[c] += p[i] * p[i];
      }
    }
    count += hw;
  }
  for (int c = 0; c < 3; ++c) {
    const double m = count ? sum[c] / count : 0.0;
    const double var = count ? std::max(1e-8, sumsq[c] / count - m * m) : 1.0;
    channel_mean[c] = m;
    channel_std[c] = std::sqrt(var);
  }
}

namespace {

double iou_corners(const Annotation& a, const Annotation& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// One attempt at a synthetic scene; fails when object placement cannot
// satisfy the overlap budget.
bool try_generate_sample(Rng& rng, const SyntheticSpec& spec, Sample& out) {
  const int S = spec.image_size;
  out.image = Tensor({3, S, S});
  double bg[3];
  for (double& v : bg) v = rng.uniform(0.15, 0.85);
  for (int c = 0; c < 3; ++c) {
    double* p = out.image.data() + int64_t(c) * S * S;
    for (int i = 0; i < S * S; ++i) p[i] = std::clamp(bg[c] + rng.uniform(-0.08, 0.08), 0.0, 1.0);
  }

  out.annotations.clear();
  const int count = rng.uniform_int(spec.min_objects, spec.max_objects);
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
      const int bw = rng.uniform_int(12, std::min(56, S - 2));
      const int bh = rng.uniform_int(12, std::min(56, S - 2));
      const int x0 = rng.uniform_int(1, S - bw - 1);
      const int y0 = rng.uniform_int(1, S - bh - 1);
      Annotation a;
      a.class_id = rng.uniform_int(0, spec.num_classes - 1);
      a.x_min = x0;
      a.y_min = y0;
      a.x_max = x0 + bw;
      a.y_max = y0 + bh;
      bool ok = true;
      for (const auto& other : out.annotations)
        if (iou_corners(a, other) > 0.4) {
          ok = false;
          break;
        }
      if (!ok) continue;

      double color[3];
      for (int tries = 0; tries < 20; ++tries) {
        double contrast = 0.0;
        for (int c = 0; c < 3; ++c) {
          color[c] = rng.uniform();
          contrast += std::fabs(color[c] - bg[c]);
        }
        if (contrast / 3.0 >= 0.2) break;
      }

      const bool ellipse = (a.class_id % 2) == 1;
      const int pattern = (a.class_id / 2) % 2;  // 0 solid, 1 striped
      const double cx = 0.5 * (a.x_min + a.x_max), cy = 0.5 * (a.y_min + a.y_max);
      const double rx = 0.5 * a.width(), ry = 0.5 * a.height();
      for (int i = y0; i < y0 + bh; ++i)
        for (int j = x0; j < x0 + bw; ++j) {
          const double px = j + 0.5, py = i + 0.5;
          if (ellipse) {
            const double dx = (px - cx) / rx, dy = (py - cy) / ry;
            if (dx * dx + dy * dy > 1.0) continue;
          }
          if (pattern == 1 && ((i / 3) % 2) == 1) continue;
          for (int c = 0; c < 3; ++c) out.image.at3(c, i, j) = color[c];
        }
      out.annotations.push_back(a);
      placed = true;
    }
    if (!placed) return false;
  }
  return true;
}

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.image_size % 32 != 0)
    throw std::invalid_argument("generate_synthetic: image_size must be divisible by 32");
  if (spec.num_classes < 1) throw std::invalid_argument("generate_synthetic: num_classes must be >= 1");
  if (spec.min_objects < 0 || spec.max_objects < spec.min_objects)
    throw std::invalid_argument("generate_synthetic: bad objects_per_image range");

  Dataset ds;
  ds.manifest.num_classes = spec.num_classes;
  ds.manifest.image_size = spec.image_size;
  ds.manifest.generator_seed = spec.seed;
  for (int c = 0; c < spec.num_classes; ++c)
    ds.manifest.class_names.push_back("class" + std::to_string(c));

  ds.samples.reserve(static_cast<size_t>(spec.num_images));
  for (int i = 0; i < spec.num_images; ++i) {
    Sample s;
    bool ok = false;
    for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
      Rng rng(Rng::derive(spec.seed, "img" + std::to_string(i) + "/" + std::to_string(attempt)));
      ok = try_generate_sample(rng, spec, s);
    }
    if (!ok) throw std::runtime_error("generate_synthetic: placement failed for image " + std::to_string(i));
    s.id = "synthetic_" + std::to_string(i);
    ds.samples.push_back(std::move(s));
  }
  ds.compute_channel_stats();
  return ds;
}

void write_ppm(const Tensor& image, const std::string& path) {
  if (image.ndim() != 3 || image.dim(0) != 3) throw std::invalid_argument("write_ppm: expected 3 x H x W");
  const int H = image.dim(1), W = image.dim(2);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(W) * 3);
  for (int i = 0; i < H; ++i) {
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c)
        row[static_cast<size_t>(j) * 3 + c] =
            static_cast<unsigned char>(std::clamp(image.at3(c, i, j), 0.0, 1.0) * 255.0 + 0.5);
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  int W = 0, H = 0, maxval = 0;
  f >> magic >> W >> H >> maxval;
  if (magic != "P6" || W <= 0 || H <= 0 || maxval != 255)
    throw std::runtime_error("read_ppm: unsupported PPM header in " + path);
  f.get();  // single whitespace after header
  std::vector<unsigned char> buf(static_cast<size_t>(W) * H * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!f) throw std::runtime_error("read_ppm: truncated file " + path);
  Tensor image({3, H, W});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j)
      for (int c = 0; c < 3; ++c)
        image.at3(c, i, j) = buf[(static_cast<size_t>(i) * W + j) * 3 + c] / 255.0;
  return image;
}

Tensor resize_image(const Tensor& image, int out_h, int out_w) {
  const int H = image.dim(1), W = image.dim(2);
  Tensor out({3, out_h, out_w});
  const double sy = static_cast<double>(H) / out_h;
  const double sx = static_cast<double>(W) / out_w;
  for (int i = 0; i < out_h; ++i) {
    const double fy = std::clamp((i + 0.5) * sy - 0.5, 0.0, double(H - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, H - 1);
    const double wy = fy - y0;
    for (int j = 0; j < out_w; ++j) {
      const double fx = std::clamp((j + 0.5) * sx - 0.5, 0.0, double(W - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, W - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v = (1 - wy) * ((1 - wx) * image.at3(c, y0, x0) + wx * image.at3(c, y0, x1)) +
                         wy * ((1 - wx) * image.at3(c, y1, x0) + wx * image.at3(c, y1, x1));
        out.at3(c, i, j) = v;
      }
    }
  }
  return out;
}

void save_dataset(const Dataset& dataset, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "images");
  json images = json::array();
  json annotations = json::array();
  json categories = json::array();
  for (int c = 0; c < dataset.manifest.num_classes; ++c) {
    std::string name = c < static_cast<int>(dataset.manifest.class_names.size())
                           ? dataset.manifest.class_names[static_cast<size_t>(c)]
                           : ("class" + std::to_string(c));
    categories.push_back({{"id", c + 1}, {"name", name}});
  }
  int ann_id = 1;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const std::string file_name = "images/" + s.id + ".ppm";
    write_ppm(s.image, (fs::path(dir) / file_name).string());
    images.push_back({{"id", static_cast<int>(i) + 1},
                      {"file_name", file_name},
                      {"width", s.image.dim(2)},
                      {"height", s.image.dim(1)}});
    for (const auto& a : s.annotations) {
      annotations.push_back({{"id", ann_id++},
                             {"image_id", static_cast<int>(i) + 1},
                             {"category_id", a.class_id + 1},
                             {"bbox", {a.x_min, a.y_min, a.width(), a.height()}},
                             {"area", a.area()},
                             {"iscrowd", 0}});
    }
  }
  json root = {{"images", images}, {"annotations", annotations}, {"categories", categories}};
  std::ofstream f(fs::path(dir) / "manifest.json");
  if (!f) throw std::runtime_error("save_dataset: cannot write manifest in " + dir);
  f << root.dump(1) << "\n";
}

Dataset load_coco_json(const std::string& annotation_path, const std::string& image_root,
                       int short_edge) {
  std::ifstream f(annotation_path);
  if (!f) throw std::runtime_error("load_coco_json: cannot open " + annotation_path);
  json root = json::parse(f);
  for (const char* key : {"images", "annotations", "categories"})
    if (!root.contains(key))
      throw std::runtime_error("load_coco_json: missing top-level \"" + std::string(key) + "\"");

  // Densify category ids onto [0, C) in ascending original order.
  std::map<int, int> cat_map;
  std::vector<std::string> names_by_orig;
  for (const auto& c : root["categories"]) cat_map[c.at("id").get<int>()] = 0;
  int dense = 0;
  Dataset ds;
  ds.manifest.class_names.resize(cat_map.size());
  for (auto& [orig, idx] : cat_map) idx = dense++;
  for (const auto& c : root["categories"])
    ds.manifest.class_names[static_cast<size_t>(cat_map[c.at("id").get<int>()])] =
        c.value("name", "category" + std::to_string(c.at("id").get<int>()));
  ds.manifest.num_classes = dense;
  ds.manifest.source_path = annotation_path;

  std::map<int, size_t> image_index;
  for (const auto& im : root["images"]) {
    const int id = im.at("id").get<int>();
    const std::string file_name = im.at("file_name").get<std::string>();
    Sample s;
    s.id = std::to_string(id);
    const std::string path = (fs::path(image_root) / file_name).string();
    if (!fs::exists(path))
      throw std::runtime_error("load_coco_json: missing image file for image id " + s.id + ": " + path);
    s.image = read_ppm(path);
    const int H = im.at("height").get<int>(), W = im.at("width").get<int>();
    if (s.image.dim(1) != H || s.image.dim(2) != W)
      throw std::runtime_error("load_coco_json: size mismatch for image id " + s.id);
    image_index[id] = ds.samples.size();
    ds.samples.push_back(std::move(s));
  }

  for (const auto& a : root["annotations"]) {
    const int image_id = a.at("image_id").get<int>();
    auto it = image_index.find(image_id);
    if (it == image_index.end())
      throw std::runtime_error("load_coco_json: annotation refers to unknown image id " +
                               std::to_string(image_id));
    const auto& bbox = a.at("bbox");
    Annotation ann;
    ann.class_id = cat_map.at(a.at("category_id").get<int>());
    ann.x_min = bbox.at(0).get<double>();
    ann.y_min = bbox.at(1).get<double>();
    ann.x_max = ann.x_min + bbox.at(2).get<double>();
    ann.y_max = ann.y_min + bbox.at(3).get<double>();
    Sample& s = ds.samples[it->second];
    // Clip to image bounds; drop degenerate fragments.
    ann.x_min = std::clamp(ann.x_min, 0.0, double(s.image.dim(2)));
    ann.x_max = std::clamp(ann.x_max, 0.0, double(s.image.dim(2)));
    ann.y_min = std::clamp(ann.y_min, 0.0, double(s.image.dim(1)));
    ann.y_max = std::clamp(ann.y_max, 0.0, double(s.image.dim(1)));
    if (ann.area() < 1.0) {
      std::cerr << "load_coco_json: dropping degenerate box on image id " << image_id << "\n";
      continue;
    }
    s.annotations.push_back(ann);
  }

  if (short_edge > 0) {
    for (auto& s : ds.samples) {
      const int H = s.image.dim(1), W = s.image.dim(2);
      const double scale = static_cast<double>(short_edge) / std::min(H, W);
      const int nh = std::max(32, static_cast<int>(std::lround(H * scale)));
      const int nw = std::max(32, static_cast<int>(std::lround(W * scale)));
      s.image = resize_image(s.image, nh, nw);
      const double sy = static_cast<double>(nh) / H, sx = static_cast<double>(nw) / W;
      for (auto& ann : s.annotations) {
        ann.x_min *= sx;
        ann.x_max *= sx;
        ann.y_min *= sy;
        ann.y_max *= sy;
      }
    }
  }
  ds.compute_channel_stats();
  return ds;
}

BatchLoader::BatchLoader(const Dataset& dataset, int batch_size, uint64_t shuffle_seed)
    : dataset_(dataset), batch_size_(batch_size), shuffle_seed_(shuffle_seed) {
  if (batch_size < 1) throw std::invalid_argument("BatchLoader: batch_size must be >= 1");
  if (dataset.samples.empty()) throw std::invalid_argument("BatchLoader: empty dataset");
}

const std::vector<size_t>& BatchLoader::epoch_order(int64_t epoch) {
  if (epoch != cached_epoch_) {
    cached_order_.resize(dataset_.size());
    for (size_t i = 0; i < cached_order_.size(); ++i) cached_order_[i] = i;
    Rng rng(Rng::derive(shuffle_seed_, "epoch" + std::to_string(epoch)));
    for (size_t i = cached_order_.size(); i > 1; --i)
      std::swap(cached_order_[i - 1], cached_order_[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    cached_epoch_ = epoch;
  }
  return cached_order_;
}

Batch BatchLoader::get(int64_t iter, bool with_labels, bool augment, uint64_t augment_seed,
                       double augment_prob, bool augment_per_image) {
  const int64_t n = static_cast<int64_t>(dataset_.size());
  Batch batch;
  int maxH = 0, maxW = 0;
  std::vector<size_t> idx(static_cast<size_t>(batch_size_));
  for (int b = 0; b < batch_size_; ++b) {
    const int64_t pos = iter * batch_size_ + b;
    idx[static_cast<size_t>(b)] = epoch_order(pos / n)[static_cast<size_t>(pos % n)];
    const Sample& s = dataset_.samples[idx[static_cast<size_t>(b)]];
    maxH = std::max(maxH, s.image.dim(1));
    maxW = std::max(maxW, s.image.dim(2));
  }
  const int padH = (maxH + 31) / 32 * 32;
  const int padW = (maxW + 31) / 32 * 32;
  batch.padded_height = padH;
  batch.padded_width = padW;
  batch.sample_indices = idx;

  batch.images = Tensor({batch_size_, 3, padH, padW});
  const int C = dataset_.manifest.num_classes;
  if (with_labels) batch.labels = Tensor({batch_size_, C, padH, padW});

  for (int b = 0; b < batch_size_; ++b) {
    const Sample& s = dataset_.samples[idx[static_cast<size_t>(b)]];
    const int H = s.image.dim(1), W = s.image.dim(2);
    for (int c = 0; c < 3; ++c) {
      const double m = dataset_.channel_mean[static_cast<size_t>(c)];
      const double sd = dataset_.channel_std[static_cast<size_t>(c)];
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) batch.images.at4(b, c, i, j) = (s.image.at3(c, i, j) - m) / sd;
    }
    batch.annotations.push_back(s.annotations);

    if (with_labels) {
      LabelTensor lt;
      if (augment) {
        const int64_t pos = iter * batch_size_ + b;
        Rng rng(Rng::derive(augment_seed, "aug" + std::to_string(pos)));
        auto scales = draw_box_scales(rng, s.annotations.size(), augment_prob, augment_per_image);
        std::vector<std::pair<Annotation, double>> scaled;
        for (size_t k = 0; k < s.annotations.size(); ++k)
          scaled.emplace_back(s.annotations[k], scales[k]);
        lt = augment_labels(scaled, C, padH, padW);
      } else {
        lt = render_labels(s.annotations, C, padH, padW);
      }
      std::copy(lt.values.data(), lt.values.data() + lt.values.numel(),
                batch.labels->data() + int64_t(b) * C * padH * padW);
    }
  }
  return batch;
}

}  // namespace labelenc
