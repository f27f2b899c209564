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

#include "labelenc/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "labelenc/checkpoint.hpp"
#include "labelenc/ops.hpp"

namespace labelenc {

void TrainConfig::validate() const {
  if (total_iters < 0) throw std::invalid_argument("TrainConfig: total_iters must be >= 0");
  if (lr <= 0.0) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  for (double p : lr_decay_points)
    if (p < 0.0 || p >= 1.0) throw std::invalid_argument("TrainConfig: decay points must be in [0, 1)");
  if (lr_decay_points[0] > lr_decay_points[1])
    throw std::invalid_argument("TrainConfig: decay points must be non-decreasing");
  if (lambda < 0.0 || lambda1 < 0.0 || lambda2 < 0.0)
    throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
  if (step1_warmup_frac < 0.0 || step1_warmup_frac >= 1.0)
    throw std::invalid_argument("TrainConfig: step1_warmup_frac must be in [0, 1)");
  if (step2_aux_drop_frac < 0.0 || step2_aux_drop_frac >= 1.0)
    throw std::invalid_argument("TrainConfig: step2_aux_drop_frac must be in [0, 1)");
  if (augment_prob < 0.0 || augment_prob > 1.0)
    throw std::invalid_argument("TrainConfig: augment_prob must be in [0, 1]");
  if (momentum < 0.0 || momentum >= 1.0)
    throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
  if (clip_grad_norm < 0.0)
    throw std::invalid_argument("TrainConfig: clip_grad_norm must be >= 0");
}

double clip_gradients(const std::vector<ParamStore*>& stores, double max_norm) {
  double sq = 0.0;
  for (ParamStore* store : stores) {
    if (store->frozen()) continue;
    for (const auto& name : store->names()) {
      Var p = store->get(name);
      if (!p->has_grad()) continue;
      const double* gp = p->grad.data();
      for (int64_t i = 0; i < p->grad.numel(); ++i) sq += gp[i] * gp[i];
    }
  }
  const double norm = std::sqrt(sq);
  if (max_norm <= 0.0 || norm <= max_norm) return norm;
  const double scale = max_norm / norm;
  for (ParamStore* store : stores) {
    if (store->frozen()) continue;
    for (const auto& name : store->names()) {
      Var p = store->get(name);
      if (!p->has_grad()) continue;
      double* gp = p->grad.data();
      for (int64_t i = 0; i < p->grad.numel(); ++i) gp[i] *= scale;
    }
  }
  return norm;
}

double lr_at(const TrainConfig& config, int64_t iter, int64_t total) {
  const auto first = static_cast<int64_t>(std::floor(config.lr_decay_points[0] * static_cast<double>(total)));
  const auto second = static_cast<int64_t>(std::floor(config.lr_decay_points[1] * static_cast<double>(total)));
  if (iter >= second) return config.lr * 0.01;
  if (iter >= first) return config.lr * 0.1;
  return config.lr;
}

void SgdOptimizer::step(ParamStore& store, double lr) {
  if (store.frozen()) return;
  for (const auto& name : store.names()) {
    Var p = store.get(name);
    auto [it, inserted] = velocity_.try_emplace(p.get());
    Tensor& v = it->second;
    if (inserted) v = Tensor(p->value.shape());
    const int64_t n = p->value.numel();
    double* vp = v.data();
    double* wp = p->value.data();
    const double* gp = p->has_grad() ? p->grad.data() : nullptr;
    for (int64_t i = 0; i < n; ++i) {
      const double g = (gp ? gp[i] : 0.0) + weight_decay_ * wp[i];
      vp[i] = momentum_ * vp[i] + g;
      wp[i] -= lr * vp[i];
    }
  }
}

void write_loss_log(const LossHistory& history, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_loss_log: cannot open " + path);
  for (const auto& r : history) f << r.iter << "\t" << r.name << "\t" << r.value << "\n";
}

namespace {

[[noreturn]] void abort_diverged(const std::string& detail, int64_t iter,
                                 const std::vector<std::pair<std::string, const ParamStore*>>& stores,
                                 const std::string& diagnostics_dir) {
  if (!diagnostics_dir.empty()) {
    std::filesystem::create_directories(diagnostics_dir);
    save_checkpoint(stores, "{\"diverged_at_iter\": " + std::to_string(iter) + "}",
                    (std::filesystem::path(diagnostics_dir) / "diverged.ckpt").string());
  }
  throw std::runtime_error("training diverged: " + detail + " at iteration " + std::to_string(iter));
}

/// Computes the iteration loss, converting non-finite values — whether the
/// loss itself or an upstream forward-pass rejection — into a divergence
/// abort that snapshots the current parameters.
Var guarded_loss(const std::function<Var()>& compute, int64_t iter,
                 const std::vector<std::pair<std::string, const ParamStore*>>& stores,
                 const std::string& diagnostics_dir) {
  Var loss;
  try {
    loss = compute();
  } catch (const std::runtime_error& e) {
    if (std::string(e.what()).find("non-finite") == std::string::npos) throw;
    abort_diverged(e.what(), iter, stores, diagnostics_dir);
  }
  if (!loss->value.all_finite())
    abort_diverged("non-finite loss", iter, stores, diagnostics_dir);
  return loss;
}

BatchTargets batch_targets(const Batch& batch, int num_classes, const std::vector<int>& strides) {
  std::vector<std::vector<LevelTargets>> per_image;
  per_image.reserve(batch.annotations.size());
  for (const auto& anns : batch.annotations)
    per_image.push_back(assign_targets(anns, num_classes, batch.padded_height, batch.padded_width,
                                       strides, default_level_ranges()));
  return stack_targets(per_image);
}

}  // namespace

DetectorOutput train_baseline(const Dataset& dataset, const BackboneConfig& backbone_config,
                              const HeadConfig& head_config, const TrainConfig& config,
                              const std::string& diagnostics_dir) {
  config.validate();
  DetectorOutput out;
  out.backbone = build_backbone(backbone_config, Rng::derive(config.seeds.params, "det"));
  out.head = build_head(head_config, Rng::derive(config.seeds.params, "det"));
  if (config.total_iters == 0) return out;

  BatchLoader loader(dataset, config.batch_size, Rng::derive(config.seeds.data, "order"));
  SgdOptimizer opt(config.momentum, config.weight_decay);
  const auto& strides = backbone_config.pyramid_strides;

  for (int64_t iter = 0; iter < config.total_iters; ++iter) {
    const double lr = lr_at(config, iter, config.total_iters);
    Batch batch = loader.get(iter);
    BatchTargets targets = batch_targets(batch, head_config.num_classes, strides);

    out.backbone.zero_grad();
    out.head.zero_grad();
    Var loss = guarded_loss(
        [&] {
          Var images = make_constant(batch.images);
          auto pyramid = backbone_forward(out.backbone, backbone_config, images);
          return detection_loss(head_forward(out.head, head_config, pyramid, strides), targets);
        },
        iter, {{"backbone", &out.backbone}, {"head", &out.head}}, diagnostics_dir);
    backward(loss);
    clip_gradients({&out.backbone, &out.head}, config.clip_grad_norm);
    opt.step(out.backbone, lr);
    opt.step(out.head, lr);
    out.history.push_back({iter, "L_det", loss->value[0]});
  }
  return out;
}

Step1Output train_step1(const Dataset& dataset, const EncoderConfig& encoder_config,
                        const BackboneConfig& aux_backbone_config, const HeadConfig& head_config,
                        const TrainConfig& config, const std::string& diagnostics_dir) {
  config.validate();
  encoder_config.validate();
  Step1Output out;
  out.encoder = build_encoder(encoder_config, Rng::derive(config.seeds.params, "step1"));
  out.head = build_head(head_config, Rng::derive(config.seeds.params, "step1"));
  ParamStore aux_backbone =
      build_backbone(aux_backbone_config, Rng::derive(config.seeds.params, "step1"));
  std::vector<ParamStore> adaptation;
  for (size_t l = 0; l < encoder_config.pyramid_strides.size(); ++l)
    adaptation.push_back(build_adaptation(encoder_config.fpn_channels,
                                          Rng::derive(config.seeds.params, "step1/adapt" + std::to_string(l))));

  const int64_t warmup =
      static_cast<int64_t>(std::lround(config.step1_warmup_frac * static_cast<double>(config.total_iters)));
  const int64_t total_run = config.total_iters + warmup;
  if (total_run == 0) return out;

  BatchLoader loader(dataset, config.batch_size, Rng::derive(config.seeds.data, "order"));
  SgdOptimizer opt(config.momentum, config.weight_decay);
  const auto& strides = encoder_config.pyramid_strides;
  const uint64_t aug_seed = Rng::derive(config.seeds.augment, "labels");

  for (int64_t iter = 0; iter < total_run; ++iter) {
    const double lr =
        iter < warmup ? config.lr : lr_at(config, iter - warmup, config.total_iters);
    Batch batch = loader.get(iter, /*with_labels=*/true, /*augment=*/true, aug_seed,
                             config.augment_prob, config.augment_per_image);
    BatchTargets targets = batch_targets(batch, head_config.num_classes, strides);

    out.encoder.zero_grad();
    out.head.zero_grad();
    aux_backbone.zero_grad();
    for (auto& a : adaptation) a.zero_grad();

    Var l1, l2, l3;
    Var total = guarded_loss(
        [&] {
          Var labels = make_constant(*batch.labels);
          auto encoder_pyramid = encode(out.encoder, encoder_config, labels);
          l1 = detection_loss(head_forward(out.head, head_config, encoder_pyramid, strides),
                              targets);
          Var t = l1;
          if (!config.step1_reconstruction_only) {
            Var images = make_constant(batch.images);
            auto backbone_pyramid = backbone_forward(aux_backbone, aux_backbone_config, images);
            l2 = detection_loss(head_forward(out.head, head_config, backbone_pyramid, strides),
                                targets);
            t = ops::add(t, ops::scale(l2, config.lambda1));
            if (iter >= warmup) {
              l3 = distance_loss(backbone_pyramid, encoder_pyramid, adaptation);
              t = ops::add(t, ops::scale(l3, config.lambda2));
            }
          }
          return t;
        },
        iter, {{"encoder", &out.encoder}, {"head", &out.head}}, diagnostics_dir);
    backward(total);
    {
      std::vector<ParamStore*> trained = {&out.encoder, &out.head, &aux_backbone};
      for (auto& a : adaptation) trained.push_back(&a);
      clip_gradients(trained, config.clip_grad_norm);
    }
    opt.step(out.encoder, lr);
    opt.step(out.head, lr);
    opt.step(aux_backbone, lr);
    for (auto& a : adaptation) opt.step(a, lr);

    out.history.push_back({iter, "L1", l1->value[0]});
    if (l2) out.history.push_back({iter, "L2", l2->value[0]});
    if (l3) out.history.push_back({iter, "L3", l3->value[0]});
    out.history.push_back({iter, "total", total->value[0]});
  }
  // aux_backbone and adaptation are auxiliary structures; dropped here.
  return out;
}

DetectorOutput train_step2(const Dataset& dataset, const Step1Output& step1,
                           const EncoderConfig& encoder_config,
                           const BackboneConfig& backbone_config, const HeadConfig& head_config,
                           const TrainConfig& config, const std::string& diagnostics_dir) {
  config.validate();
  DetectorOutput out;
  out.backbone = build_backbone(backbone_config, Rng::derive(config.seeds.params, "det"));
  if (config.step2_use_head_init) {
    out.head = step1.head.clone();
    out.head.set_frozen(false);
  } else {
    out.head = build_head(head_config, Rng::derive(config.seeds.params, "det"));
  }

  ParamStore encoder;
  std::vector<ParamStore> adaptation;
  if (config.step2_use_supervision) {
    encoder = step1.encoder.clone();
    encoder.set_frozen(true);
    for (size_t l = 0; l < encoder_config.pyramid_strides.size(); ++l)
      adaptation.push_back(build_adaptation(encoder_config.fpn_channels,
                                            Rng::derive(config.seeds.params, "step2/adapt" + std::to_string(l))));
  }
  if (config.total_iters == 0) return out;

  BatchLoader loader(dataset, config.batch_size, Rng::derive(config.seeds.data, "order"));
  SgdOptimizer opt(config.momentum, config.weight_decay);
  const auto& strides = backbone_config.pyramid_strides;
  const uint64_t aug_seed = Rng::derive(config.seeds.augment, "labels");
  const int64_t aux_until =
      config.total_iters -
      static_cast<int64_t>(std::lround(config.step2_aux_drop_frac * static_cast<double>(config.total_iters)));

  for (int64_t iter = 0; iter < config.total_iters; ++iter) {
    const double lr = lr_at(config, iter, config.total_iters);
    const bool with_aux = config.step2_use_supervision && iter < aux_until;
    Batch batch = loader.get(iter, /*with_labels=*/with_aux, /*augment=*/with_aux, aug_seed,
                             config.augment_prob, config.augment_per_image);
    BatchTargets targets = batch_targets(batch, head_config.num_classes, strides);

    out.backbone.zero_grad();
    out.head.zero_grad();
    for (auto& a : adaptation) a.zero_grad();

    Var l_det, l_dis;
    Var loss = guarded_loss(
        [&] {
          Var images = make_constant(batch.images);
          auto pyramid = backbone_forward(out.backbone, backbone_config, images);
          l_det = detection_loss(head_forward(out.head, head_config, pyramid, strides), targets);
          Var t = l_det;
          if (with_aux) {
            Var labels = make_constant(*batch.labels);
            auto encoder_pyramid = encode(encoder, encoder_config, labels);
            l_dis = distance_loss(pyramid, encoder_pyramid, adaptation);
            t = ops::add(t, ops::scale(l_dis, config.lambda));
          }
          return t;
        },
        iter, {{"backbone", &out.backbone}, {"head", &out.head}}, diagnostics_dir);
    backward(loss);
    {
      std::vector<ParamStore*> trained = {&out.backbone, &out.head};
      for (auto& a : adaptation) trained.push_back(&a);
      clip_gradients(trained, config.clip_grad_norm);
    }
    opt.step(out.backbone, lr);
    opt.step(out.head, lr);
    for (auto& a : adaptation) opt.step(a, lr);

    out.history.push_back({iter, "L_det", l_det->value[0]});
    if (l_dis) out.history.push_back({iter, "L_dis", l_dis->value[0]});
  }
  return out;
}

namespace {

void collect_ground_truth(const Dataset& dataset, std::vector<EvalGroundTruth>& ground_truths) {
  for (size_t i = 0; i < dataset.samples.size(); ++i)
    for (const auto& a : dataset.samples[i].annotations)
      ground_truths.push_back({static_cast<int>(i), a.class_id, a.x_min, a.y_min, a.x_max, a.y_max});
}

void append_decoded(const std::vector<std::pair<Var, Var>>& preds, const std::vector<int>& strides,
                    int image_id, int height, int width, const DecodeConfig& decode,
                    std::vector<EvalDetection>& detections) {
  std::vector<std::pair<Tensor, Tensor>> maps;
  for (const auto& [cls, reg] : preds) {
    // Single-image batch: drop the N dimension.
    Tensor c({cls->value.dim(1), cls->value.dim(2), cls->value.dim(3)});
    std::copy(cls->value.data(), cls->value.data() + c.numel(), c.data());
    Tensor r({reg->value.dim(1), reg->value.dim(2), reg->value.dim(3)});
    std::copy(reg->value.data(), reg->value.data() + r.numel(), r.data());
    maps.emplace_back(std::move(c), std::move(r));
  }
  for (const auto& d : decode_detections(maps, strides, height, width, decode.score_thresh,
                                         decode.nms_iou, decode.max_dets))
    detections.push_back({image_id, d.class_id, d.score, d.x_min, d.y_min, d.x_max, d.y_max});
}

}  // namespace

void collect_detections(const ParamStore& backbone, const BackboneConfig& backbone_config,
                        const ParamStore& head, const HeadConfig& head_config,
                        const Dataset& dataset, const DecodeConfig& decode,
                        std::vector<EvalDetection>& detections,
                        std::vector<EvalGroundTruth>& ground_truths) {
  ParamStore b = backbone.clone();
  ParamStore h = head.clone();
  b.set_frozen(true);
  h.set_frozen(true);
  const auto& strides = backbone_config.pyramid_strides;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const int H = s.image.dim(1), W = s.image.dim(2);
    const int padH = (H + 31) / 32 * 32, padW = (W + 31) / 32 * 32;
    Tensor img({1, 3, padH, padW});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          img.at4(0, c, y, x) =
              (s.image.at3(c, y, x) - dataset.channel_mean[static_cast<size_t>(c)]) /
              dataset.channel_std[static_cast<size_t>(c)];
    auto pyramid = backbone_forward(b, backbone_config, make_constant(std::move(img)));
    auto preds = head_forward(h, head_config, pyramid, strides);
    append_decoded(preds, strides, static_cast<int>(i), H, W, decode, detections);
  }
  collect_ground_truth(dataset, ground_truths);
}

void collect_autoencoder_detections(const ParamStore& encoder, const EncoderConfig& encoder_config,
                                    const ParamStore& head, const HeadConfig& head_config,
                                    const Dataset& dataset, const DecodeConfig& decode,
                                    std::vector<EvalDetection>& detections,
                                    std::vector<EvalGroundTruth>& ground_truths) {
  ParamStore e = encoder.clone();
  ParamStore h = head.clone();
  e.set_frozen(true);
  h.set_frozen(true);
  const auto& strides = encoder_config.pyramid_strides;
  for (size_t i = 0; i < dataset.samples.size(); ++i) {
    const Sample& s = dataset.samples[i];
    const int H = s.image.dim(1), W = s.image.dim(2);
    const int padH = (H + 31) / 32 * 32, padW = (W + 31) / 32 * 32;
    LabelTensor lt = render_labels(s.annotations, encoder_config.num_classes, padH, padW);
    Tensor labels({1, encoder_config.num_classes, padH, padW});
    std::copy(lt.values.data(), lt.values.data() + lt.values.numel(), labels.data());
    auto pyramid = encode(e, encoder_config, make_constant(std::move(labels)));
    auto preds = head_forward(h, head_config, pyramid, strides);
    append_decoded(preds, strides, static_cast<int>(i), H, W, decode, detections);
  }
  collect_ground_truth(dataset, ground_truths);
}

}  // namespace labelenc
