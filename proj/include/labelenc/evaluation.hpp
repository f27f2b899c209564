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

#include "labelenc/detector.hpp"

namespace labelenc {

/// A detection or ground-truth box attributed to a dataset image.
struct EvalDetection {
  int image_id = 0;
  int class_id = 0;
  double score = 0.0;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

struct EvalGroundTruth {
  int image_id = 0;
  int class_id = 0;
  double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
};

double iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
           double by2);

/// COCO-protocol AP at one IoU threshold: score-ordered greedy matching to the
/// highest-IoU unmatched same-class ground truth, 101-point interpolated
/// precision-recall area, averaged over classes present in the ground truth.
double average_precision(const std::vector<EvalDetection>& detections,
                         const std::vector<EvalGroundTruth>& ground_truths, double iou_threshold);

/// Mean AP over IoU thresholds 0.50, 0.55, ..., 0.95.
double mmap(const std::vector<EvalDetection>& detections,
            const std::vector<EvalGroundTruth>& ground_truths);

struct EvalReport {
  std::vector<double> ap_per_threshold;  // thresholds 0.50 ... 0.95
  std::vector<double> ap_per_class;      // at averaged thresholds; -1 when absent from GT
  double mmap = 0.0;
};

EvalReport evaluate(const std::vector<EvalDetection>& detections,
                    const std::vector<EvalGroundTruth>& ground_truths, int num_classes);

std::string format_report(const EvalReport& report, const std::vector<std::string>& class_names);

}  // namespace labelenc
