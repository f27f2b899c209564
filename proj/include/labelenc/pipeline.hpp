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
#include <map>
#include <string>

#include "labelenc/datasets.hpp"
#include "labelenc/detector.hpp"
#include "labelenc/evaluation.hpp"
#include "labelenc/feature_distance.hpp"
#include "labelenc/label_encoder.hpp"

namespace labelenc {

struct Seeds {
  uint64_t params = 1;
  uint64_t data = 2;
  uint64_t augment = 3;
};

/// Hyperparameters, schedules, toggles and seeds for one training run.
struct TrainConfig {
  int64_t total_iters = 1000;
  double lr = 0.001;
  std::array<double, 2> lr_decay_points = {2.0 / 3.0, 8.0 / 9.0};
  int batch_size = 4;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lambda = 1.0;   // step-2 auxiliary weight
  double lambda1 = 1.0;  // step-1 image detection loss
  double lambda2 = 1.0;  // step-1 distance loss
  double step1_warmup_frac = 1.0 / 3.0;     // extra iterations without L3
  double step2_aux_drop_frac = 1.0 / 9.0;   // final iterations without L_dis
  bool step1_reconstruction_only = false;
  bool step2_use_supervision = true;
  bool step2_use_head_init = true;
  double augment_prob = 0.5;
  bool augment_per_image = false;
  double clip_grad_norm = 35.0;  // global L2 clip; 0 disables
  Seeds seeds;

  void validate() const;
};

/// Learning rate at `iter` of a `total`-iteration run: lr, lr/10, lr/100
/// across the three schedule segments.
double lr_at(const TrainConfig& config, int64_t iter, int64_t total);

/// Rescales the accumulated gradients of all given stores so their global L2
/// norm is at most `max_norm` (the detection lineage's standard stabilizer).
/// A non-positive `max_norm` disables clipping. Returns the pre-clip norm.
double clip_gradients(const std::vector<ParamStore*>& stores, double max_norm);

/// SGD with momentum and weight decay. Frozen stores are skipped entirely.
class SgdOptimizer {
 public:
  SgdOptimizer(double momentum, double weight_decay)
      : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(ParamStore& store, double lr);

 private:
  double momentum_;
  double weight_decay_;
  std::map<Node*, Tensor> velocity_;
};

struct LossRecord {
  int64_t iter = 0;
  std::string name;
  double value = 0.0;
};
using LossHistory = std::vector<LossRecord>;

/// Line-delimited "iter<TAB>name<TAB>value" records.
void write_loss_log(const LossHistory& history, const std::string& path);

struct DetectorOutput {
  ParamStore backbone;
  ParamStore head;
  LossHistory history;
};

struct Step1Output {
  ParamStore encoder;
  ParamStore head;
  LossHistory history;
};

/// Plain joint detector training (L_det only).
DetectorOutput train_baseline(const Dataset& dataset, const BackboneConfig& backbone_config,
                              const HeadConfig& head_config, const TrainConfig& config,
                              const std::string& diagnostics_dir = "");

/// Step 1: joint relaxation with L1 (label autoencoder reconstruction),
/// L2 (auxiliary image detection) and L3 (latent distance), sharing one
/// detection head between L1 and L2. The auxiliary backbone is discarded.
Step1Output train_step1(const Dataset& dataset, const EncoderConfig& encoder_config,
                        const BackboneConfig& aux_backbone_config, const HeadConfig& head_config,
                        const TrainConfig& config, const std::string& diagnostics_dir = "");

/// Step 2: final detector training under frozen-encoder intermediate
/// supervision, optionally initializing the head from Step 1.
DetectorOutput train_step2(const Dataset& dataset, const Step1Output& step1,
                           const EncoderConfig& encoder_config,
                           const BackboneConfig& backbone_config, const HeadConfig& head_config,
                           const TrainConfig& config, const std::string& diagnostics_dir = "");

struct DecodeConfig {
  double score_thresh = 0.05;
  double nms_iou = 0.6;
  int max_dets = 100;
};

/// Runs the detector over a dataset and gathers detections plus ground truth
/// for metric computation. Inference only; parameters are left untouched.
void collect_detections(const ParamStore& backbone, const BackboneConfig& backbone_config,
                        const ParamStore& head, const HeadConfig& head_config,
                        const Dataset& dataset, const DecodeConfig& decode,
                        std::vector<EvalDetection>& detections,
                        std::vector<EvalGroundTruth>& ground_truths);

/// Same, but decoding the label autoencoder d(h(y)) over rendered labels.
void collect_autoencoder_detections(const ParamStore& encoder, const EncoderConfig& encoder_config,
                                    const ParamStore& head, const HeadConfig& head_config,
                                    const Dataset& dataset, const DecodeConfig& decode,
                                    std::vector<EvalDetection>& detections,
                                    std::vector<EvalGroundTruth>& ground_truths);

}  // namespace labelenc
