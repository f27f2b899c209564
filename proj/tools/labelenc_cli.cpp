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

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "labelenc/checkpoint.hpp"
#include "labelenc/pipeline.hpp"
#include "labelenc/viz.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace labelenc;

namespace {

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok) throw ValidationError("config: unknown key \"" + key + "\" in " + where);
  }
}

/// Everything the CLI needs for one run, merged from defaults, the config
/// file, and flags, in that order.
struct Config {
  // dataset
  std::string dataset_path;
  std::optional<SyntheticSpec> synthetic;
  int short_edge = 0;
  // model
  double width_mult = 0.25;
  int base_channels = 64;
  int fpn_channels = 64;
  int head_channels = 0;  // 0: same as fpn_channels
  // train
  TrainConfig train;
  // paths
  std::string step1_checkpoint;
  std::string checkpoint;
  DecodeConfig decode;
  // viz
  int viz_sample = 0;
  int viz_level = 1;
  std::string viz_source = "backbone";
};

template <typename T>
void read_if(const json& obj, const char* key, T& dst) {
  if (obj.contains(key)) dst = obj.at(key).get<T>();
}

Config parse_config(const json& root) {
  Config c;
  check_keys(root, "top level",
             {"dataset", "model", "train", "decode", "viz", "step1_checkpoint", "checkpoint"});
  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    check_keys(d, "dataset", {"path", "synthetic", "short_edge"});
    read_if(d, "path", c.dataset_path);
    read_if(d, "short_edge", c.short_edge);
    if (d.contains("synthetic")) {
      const json& s = d.at("synthetic");
      check_keys(s, "dataset.synthetic",
                 {"num_images", "image_size", "num_classes", "min_objects", "max_objects", "seed"});
      SyntheticSpec spec;
      read_if(s, "num_images", spec.num_images);
      read_if(s, "image_size", spec.image_size);
      read_if(s, "num_classes", spec.num_classes);
      read_if(s, "min_objects", spec.min_objects);
      read_if(s, "max_objects", spec.max_objects);
      read_if(s, "seed", spec.seed);
      c.synthetic = spec;
    }
  }
  if (root.contains("model")) {
    const json& m = root.at("model");
    check_keys(m, "model", {"width_mult", "base_channels", "fpn_channels", "head_channels"});
    read_if(m, "width_mult", c.width_mult);
    read_if(m, "base_channels", c.base_channels);
    read_if(m, "fpn_channels", c.fpn_channels);
    read_if(m, "head_channels", c.head_channels);
  }
  if (root.contains("train")) {
    const json& t = root.at("train");
    check_keys(t, "train",
               {"total_iters", "lr", "lr_decay_points", "batch_size", "momentum", "weight_decay",
                "lambda", "lambda1", "lambda2", "step1_warmup_frac", "step2_aux_drop_frac",
                "step1_reconstruction_only", "step2_use_supervision", "step2_use_head_init",
                "augment_prob", "augment_per_image", "clip_grad_norm", "seeds"});
    read_if(t, "total_iters", c.train.total_iters);
    read_if(t, "lr", c.train.lr);
    read_if(t, "lr_decay_points", c.train.lr_decay_points);
    read_if(t, "batch_size", c.train.batch_size);
    read_if(t, "momentum", c.train.momentum);
    read_if(t, "weight_decay", c.train.weight_decay);
    read_if(t, "lambda", c.train.lambda);
    read_if(t, "lambda1", c.train.lambda1);
    read_if(t, "lambda2", c.train.lambda2);
    read_if(t, "step1_warmup_frac", c.train.step1_warmup_frac);
    read_if(t, "step2_aux_drop_frac", c.train.step2_aux_drop_frac);
    read_if(t, "step1_reconstruction_only", c.train.step1_reconstruction_only);
    read_if(t, "step2_use_supervision", c.train.step2_use_supervision);
    read_if(t, "step2_use_head_init", c.train.step2_use_head_init);
    read_if(t, "augment_prob", c.train.augment_prob);
    read_if(t, "augment_per_image", c.train.augment_per_image);
    read_if(t, "clip_grad_norm", c.train.clip_grad_norm);
    if (t.contains("seeds")) {
      const json& s = t.at("seeds");
      check_keys(s, "train.seeds", {"params", "data", "augment"});
      read_if(s, "params", c.train.seeds.params);
      read_if(s, "data", c.train.seeds.data);
      read_if(s, "augment", c.train.seeds.augment);
    }
  }
  if (root.contains("decode")) {
    const json& d = root.at("decode");
    check_keys(d, "decode", {"score_thresh", "nms_iou", "max_dets"});
    read_if(d, "score_thresh", c.decode.score_thresh);
    read_if(d, "nms_iou", c.decode.nms_iou);
    read_if(d, "max_dets", c.decode.max_dets);
  }
  if (root.contains("viz")) {
    const json& v = root.at("viz");
    check_keys(v, "viz", {"sample_index", "level", "source"});
    read_if(v, "sample_index", c.viz_sample);
    read_if(v, "level", c.viz_level);
    read_if(v, "source", c.viz_source);
  }
  read_if(root, "step1_checkpoint", c.step1_checkpoint);
  read_if(root, "checkpoint", c.checkpoint);
  return c;
}

json effective_json(const Config& c) {
  json root;
  json dataset;
  dataset["path"] = c.dataset_path;
  dataset["short_edge"] = c.short_edge;
  if (c.synthetic) {
    dataset["synthetic"] = {{"num_images", c.synthetic->num_images},
                            {"image_size", c.synthetic->image_size},
                            {"num_classes", c.synthetic->num_classes},
                            {"min_objects", c.synthetic->min_objects},
                            {"max_objects", c.synthetic->max_objects},
                            {"seed", c.synthetic->seed}};
  }
  root["dataset"] = dataset;
  root["model"] = {{"width_mult", c.width_mult},
                   {"base_channels", c.base_channels},
                   {"fpn_channels", c.fpn_channels},
                   {"head_channels", c.head_channels}};
  root["train"] = {{"total_iters", c.train.total_iters},
                   {"lr", c.train.lr},
                   {"lr_decay_points", c.train.lr_decay_points},
                   {"batch_size", c.train.batch_size},
                   {"momentum", c.train.momentum},
                   {"weight_decay", c.train.weight_decay},
                   {"lambda", c.train.lambda},
                   {"lambda1", c.train.lambda1},
                   {"lambda2", c.train.lambda2},
                   {"step1_warmup_frac", c.train.step1_warmup_frac},
                   {"step2_aux_drop_frac", c.train.step2_aux_drop_frac},
                   {"step1_reconstruction_only", c.train.step1_reconstruction_only},
                   {"step2_use_supervision", c.train.step2_use_supervision},
                   {"step2_use_head_init", c.train.step2_use_head_init},
                   {"augment_prob", c.train.augment_prob},
                   {"augment_per_image", c.train.augment_per_image},
                   {"clip_grad_norm", c.train.clip_grad_norm},
                   {"seeds",
                    {{"params", c.train.seeds.params},
                     {"data", c.train.seeds.data},
                     {"augment", c.train.seeds.augment}}}};
  root["decode"] = {{"score_thresh", c.decode.score_thresh},
                    {"nms_iou", c.decode.nms_iou},
                    {"max_dets", c.decode.max_dets}};
  root["viz"] = {{"sample_index", c.viz_sample}, {"level", c.viz_level}, {"source", c.viz_source}};
  if (!c.step1_checkpoint.empty()) root["step1_checkpoint"] = c.step1_checkpoint;
  if (!c.checkpoint.empty()) root["checkpoint"] = c.checkpoint;
  return root;
}

void echo_config(const Config& c, const std::string& out) {
  fs::create_directories(out);
  std::ofstream f(fs::path(out) / "effective_config.json");
  f << effective_json(c).dump(1) << "\n";
}

Dataset load_dataset(const Config& c) {
  if (!c.dataset_path.empty()) {
    Dataset ds = load_coco_json((fs::path(c.dataset_path) / "manifest.json").string(),
                                c.dataset_path, c.short_edge);
    ds.compute_channel_stats();
    return ds;
  }
  if (c.synthetic) {
    Dataset ds = generate_synthetic(*c.synthetic);
    ds.compute_channel_stats();
    return ds;
  }
  throw ValidationError("config: dataset requires either \"path\" or \"synthetic\"");
}

BackboneConfig backbone_config(const Config& c) {
  BackboneConfig b;
  b.base_channels = c.base_channels;
  b.width_mult = c.width_mult;
  b.fpn_channels = c.fpn_channels;
  return b;
}

HeadConfig head_config(const Config& c, int num_classes) {
  HeadConfig h;
  h.num_classes = num_classes;
  h.channels = c.head_channels > 0 ? c.head_channels : c.fpn_channels;
  return h;
}

EncoderConfig encoder_config(const Config& c, int num_classes) {
  EncoderConfig e;
  e.num_classes = num_classes;
  e.width_mult = c.width_mult;
  e.fpn_channels = c.fpn_channels;
  return e;
}

std::string metadata(const Config& c, const std::string& kind) {
  json m = {{"kind", kind}, {"config_hash", config_hash(effective_json(c).dump())}};
  return m.dump();
}

std::string checkpoint_kind(const CheckpointData& data) {
  json m = json::parse(data.metadata_json, nullptr, /*allow_exceptions=*/false);
  if (m.is_object() && m.contains("kind")) return m.at("kind").get<std::string>();
  // Fall back to the store layout.
  return data.find("encoder/stage1.conv.w") ? "step1" : "detector";
}

Step1Output load_step1(const Config& c, const Dataset& ds) {
  if (c.step1_checkpoint.empty())
    throw ValidationError("config: train-step2 requires the \"step1_checkpoint\" key");
  CheckpointData data = load_checkpoint(c.step1_checkpoint);
  Step1Output s1;
  s1.encoder = build_encoder(encoder_config(c, ds.manifest.num_classes), 0);
  s1.head = build_head(head_config(c, ds.manifest.num_classes), 0);
  load_into_store(data, "encoder", s1.encoder);
  load_into_store(data, "head", s1.head);
  return s1;
}

int run_eval(const Config& c, const std::string& out) {
  if (c.checkpoint.empty()) throw ValidationError("config: eval requires the \"checkpoint\" key");
  Dataset ds = load_dataset(c);
  CheckpointData data = load_checkpoint(c.checkpoint);
  std::vector<EvalDetection> dets;
  std::vector<EvalGroundTruth> gts;
  if (checkpoint_kind(data) == "step1") {
    ParamStore encoder = build_encoder(encoder_config(c, ds.manifest.num_classes), 0);
    ParamStore head = build_head(head_config(c, ds.manifest.num_classes), 0);
    load_into_store(data, "encoder", encoder);
    load_into_store(data, "head", head);
    collect_autoencoder_detections(encoder, encoder_config(c, ds.manifest.num_classes), head,
                                   head_config(c, ds.manifest.num_classes), ds, c.decode, dets, gts);
  } else {
    ParamStore backbone = build_backbone(backbone_config(c), 0);
    ParamStore head = build_head(head_config(c, ds.manifest.num_classes), 0);
    load_into_store(data, "backbone", backbone);
    load_into_store(data, "head", head);
    collect_detections(backbone, backbone_config(c), head, head_config(c, ds.manifest.num_classes),
                       ds, c.decode, dets, gts);
  }
  EvalReport report = evaluate(dets, gts, ds.manifest.num_classes);
  const std::string text = format_report(report, ds.manifest.class_names);
  std::cout << text;
  echo_config(c, out);
  std::ofstream f(fs::path(out) / "metrics.txt");
  f << text;
  return 0;
}

int run_viz_features(const Config& c, const std::string& out) {
  if (c.checkpoint.empty())
    throw ValidationError("config: viz-features requires the \"checkpoint\" key");
  Dataset ds = load_dataset(c);
  if (c.viz_sample < 0 || static_cast<size_t>(c.viz_sample) >= ds.size())
    throw ValidationError("config: viz.sample_index out of range");
  CheckpointData data = load_checkpoint(c.checkpoint);
  const Sample& s = ds.samples[static_cast<size_t>(c.viz_sample)];
  const int H = s.image.dim(1), W = s.image.dim(2);
  const int padH = (H + 31) / 32 * 32, padW = (W + 31) / 32 * 32;

  std::vector<Var> pyramid;
  if (c.viz_source == "encoder") {
    EncoderConfig ec = encoder_config(c, ds.manifest.num_classes);
    ParamStore encoder = build_encoder(ec, 0);
    load_into_store(data, "encoder", encoder);
    encoder.set_frozen(true);
    LabelTensor lt = render_labels(s.annotations, ec.num_classes, padH, padW);
    Tensor labels({1, ec.num_classes, padH, padW});
    std::copy(lt.values.data(), lt.values.data() + lt.values.numel(), labels.data());
    pyramid = encode(encoder, ec, make_constant(std::move(labels)));
  } else if (c.viz_source == "backbone") {
    BackboneConfig bc = backbone_config(c);
    ParamStore backbone = build_backbone(bc, 0);
    load_into_store(data, "backbone", backbone);
    backbone.set_frozen(true);
    Tensor img({1, 3, padH, padW});
    for (int ch = 0; ch < 3; ++ch)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          img.at4(0, ch, y, x) = (s.image.at3(ch, y, x) - ds.channel_mean[static_cast<size_t>(ch)]) /
                                 ds.channel_std[static_cast<size_t>(ch)];
    pyramid = backbone_forward(backbone, bc, make_constant(std::move(img)));
  } else {
    throw ValidationError("config: viz.source must be \"backbone\" or \"encoder\"");
  }
  if (c.viz_level < 0 || static_cast<size_t>(c.viz_level) >= pyramid.size())
    throw ValidationError("config: viz.level out of range");
  echo_config(c, out);
  const std::string path =
      (fs::path(out) / ("features_" + c.viz_source + "_l" + std::to_string(c.viz_level) + ".pgm"))
          .string();
  viz_feature_intensity(pyramid[static_cast<size_t>(c.viz_level)]->value, path);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int dispatch(const std::string& cmd, const Config& c, const std::string& out) {
  if (cmd == "gen-data") {
    if (!c.synthetic) throw ValidationError("config: gen-data requires the \"dataset.synthetic\" key");
    Dataset ds = generate_synthetic(*c.synthetic);
    save_dataset(ds, out);
    echo_config(c, out);
    std::cout << "wrote " << ds.size() << " images to " << out << "\n";
    return 0;
  }
  if (cmd == "train-baseline" || cmd == "train-step1" || cmd == "train-step2") {
    Dataset ds = load_dataset(c);
    c.train.validate();
    echo_config(c, out);
    const std::string ckpt = (fs::path(out) / "checkpoint.ckpt").string();
    const std::string log = (fs::path(out) / "loss_log.tsv").string();
    if (cmd == "train-baseline") {
      DetectorOutput r = train_baseline(ds, backbone_config(c), head_config(c, ds.manifest.num_classes),
                                        c.train, out);
      save_checkpoint({{"backbone", &r.backbone}, {"head", &r.head}}, metadata(c, "detector"), ckpt);
      write_loss_log(r.history, log);
    } else if (cmd == "train-step1") {
      Step1Output r = train_step1(ds, encoder_config(c, ds.manifest.num_classes), backbone_config(c),
                                  head_config(c, ds.manifest.num_classes), c.train, out);
      save_checkpoint({{"encoder", &r.encoder}, {"head", &r.head}}, metadata(c, "step1"), ckpt);
      write_loss_log(r.history, log);
    } else {
      Step1Output s1 = load_step1(c, ds);
      DetectorOutput r = train_step2(ds, s1, encoder_config(c, ds.manifest.num_classes),
                                     backbone_config(c), head_config(c, ds.manifest.num_classes),
                                     c.train, out);
      save_checkpoint({{"backbone", &r.backbone}, {"head", &r.head}}, metadata(c, "detector"), ckpt);
      write_loss_log(r.history, log);
    }
    std::cout << "wrote " << ckpt << "\n";
    return 0;
  }
  if (cmd == "eval") return run_eval(c, out);
  if (cmd == "viz-labels") {
    Dataset ds = load_dataset(c);
    if (c.viz_sample < 0 || static_cast<size_t>(c.viz_sample) >= ds.size())
      throw ValidationError("config: viz.sample_index out of range");
    const Sample& s = ds.samples[static_cast<size_t>(c.viz_sample)];
    LabelTensor lt =
        render_labels(s.annotations, ds.manifest.num_classes, s.image.dim(1), s.image.dim(2));
    echo_config(c, out);
    auto paths = viz_label_channels(lt, (fs::path(out) / ("labels_" + s.id)).string());
    for (const auto& p : paths) std::cout << "wrote " << p << "\n";
    return 0;
  }
  if (cmd == "viz-features") return run_viz_features(c, out);
  throw ValidationError("unknown subcommand: " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"labelenc: two-step detector training with learned label encodings"};
  app.require_subcommand(1);

  std::string config_path, out = ".";
  std::optional<uint64_t> seed;
  std::string cmd;
  for (const char* name : {"gen-data", "train-baseline", "train-step1", "train-step2", "eval",
                           "viz-labels", "viz-features"}) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON configuration file");
    sub->add_option("--seed", seed, "Override every RNG seed");
    sub->add_option("--out", out, "Output directory");
    sub->callback([&cmd, name] { cmd = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    json root = json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) throw ValidationError("cannot open config file: " + config_path);
      root = json::parse(f);
    }
    Config c = parse_config(root);
    if (seed) {
      c.train.seeds = {*seed, *seed + 1, *seed + 2};
      if (c.synthetic) c.synthetic->seed = *seed;
    }
    return dispatch(cmd, c, out);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 2;
  }
}
