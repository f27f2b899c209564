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

#include "labelenc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

namespace labelenc {

double iou(double ax1, double ay1, double ax2, double ay2, double bx1, double by1, double bx2,
           double by2) {
  const double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
  const double ih = std::min(ay2, by2) - std::max(ay1, by1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter;
  return inter / uni;
}

namespace {

// TP/FP flags for one class at one threshold, detections already sorted by
// descending score.
void greedy_match(const std::vector<const EvalDetection*>& dets,
                  const std::vector<const EvalGroundTruth*>& gts, double thr,
                  std::vector<bool>& tp) {
  std::vector<bool> used(gts.size(), false);
  tp.assign(dets.size(), false);
  for (size_t d = 0; d < dets.size(); ++d) {
    double best = thr;
    int best_g = -1;
    for (size_t g = 0; g < gts.size(); ++g) {
      if (used[g] || gts[g]->image_id != dets[d]->image_id) continue;
      const double v = iou(dets[d]->x_min, dets[d]->y_min, dets[d]->x_max, dets[d]->y_max,
                           gts[g]->x_min, gts[g]->y_min, gts[g]->x_max, gts[g]->y_max);
      if (v >= best) {
        best = v;
        best_g = static_cast<int>(g);
      }
    }
    if (best_g >= 0) {
      used[static_cast<size_t>(best_g)] = true;
      tp[d] = true;
    }
  }
}

// 101-point interpolated area under the precision-recall curve.
double interpolated_ap(const std::vector<bool>& tp, size_t num_gt) {
  if (num_gt == 0) return -1.0;
  std::vector<double> precision, recall;
  size_t tps = 0, fps = 0;
  for (bool t : tp) {
    t ? ++tps : ++fps;
    precision.push_back(static_cast<double>(tps) / (tps + fps));
    recall.push_back(static_cast<double>(tps) / num_gt);
  }
  // Monotone envelope from the right.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
    precision[static_cast<size_t>(i)] =
        std::max(precision[static_cast<size_t>(i)], precision[static_cast<size_t>(i) + 1]);
  double ap = 0.0;
  size_t idx = 0;
  for (int r = 0; r <= 100; ++r) {
    const double target = r / 100.0;
    while (idx < recall.size() && recall[idx] < target) ++idx;
    ap += idx < precision.size() ? precision[idx] : 0.0;
  }
  return ap / 101.0;
}

double class_ap(const std::vector<const EvalDetection*>& dets,
                const std::vector<const EvalGroundTruth*>& gts, double thr) {
  std::vector<bool> tp;
  greedy_match(dets, gts, thr, tp);
  return interpolated_ap(tp, gts.size());
}

}  // namespace

double average_precision(const std::vector<EvalDetection>& detections,
                         const std::vector<EvalGroundTruth>& ground_truths, double iou_threshold) {
  std::map<int, std::vector<const EvalDetection*>> dets_by_class;
  std::map<int, std::vector<const EvalGroundTruth*>> gts_by_class;
  for (const auto& d : detections) dets_by_class[d.class_id].push_back(&d);
  for (const auto& g : ground_truths) gts_by_class[g.class_id].push_back(&g);
  for (auto& [c, v] : dets_by_class)
    std::stable_sort(v.begin(), v.end(),
                     [](const EvalDetection* a, const EvalDetection* b) { return a->score > b->score; });
  double sum = 0.0;
  int classes = 0;
  for (const auto& [c, gts] : gts_by_class) {
    auto it = dets_by_class.find(c);
    static const std::vector<const EvalDetection*> kEmpty;
    sum += class_ap(it == dets_by_class.end() ? kEmpty : it->second, gts, iou_threshold);
    ++classes;
  }
  if (classes == 0) {
    std::cerr << "average_precision: no ground truth; returning 0\n";
    return 0.0;
  }
  return sum / classes;
}

double mmap(const std::vector<EvalDetection>& detections,
            const std::vector<EvalGroundTruth>& ground_truths) {
  if (ground_truths.empty()) {
    std::cerr << "mmap: empty ground truth; defined as 0\n";
    return 0.0;
  }
  double sum = 0.0;
  for (int t = 0; t < 10; ++t) sum += average_precision(detections, ground_truths, 0.50 + 0.05 * t);
  return sum / 10.0;
}

EvalReport evaluate(const std::vector<EvalDetection>& detections,
                    const std::vector<EvalGroundTruth>& ground_truths, int num_classes) {
  EvalReport report;
  for (int t = 0; t < 10; ++t)
    report.ap_per_threshold.push_back(average_precision(detections, ground_truths, 0.50 + 0.05 * t));
  report.mmap = std::accumulate(report.ap_per_threshold.begin(), report.ap_per_threshold.end(), 0.0) / 10.0;
  report.ap_per_class.assign(static_cast<size_t>(num_classes), -1.0);
  for (int c = 0; c < num_classes; ++c) {
    std::vector<EvalDetection> dc;
    std::vector<EvalGroundTruth> gc;
    for (const auto& d : detections)
      if (d.class_id == c) dc.push_back(d);
    for (const auto& g : ground_truths)
      if (g.class_id == c) gc.push_back(g);
    if (gc.empty()) continue;
    double sum = 0.0;
    for (int t = 0; t < 10; ++t) sum += average_precision(dc, gc, 0.50 + 0.05 * t);
    report.ap_per_class[static_cast<size_t>(c)] = sum / 10.0;
  }
  return report;
}

std::string format_report(const EvalReport& report, const std::vector<std::string>& class_names) {
  std::ostringstream os;
  for (size_t t = 0; t < report.ap_per_threshold.size(); ++t) {
    os << "AP@" << 0.50 + 0.05 * static_cast<double>(t) << " = " << report.ap_per_threshold[t] << "\n";
  }
  for (size_t c = 0; c < report.ap_per_class.size(); ++c) {
    if (report.ap_per_class[c] < 0.0) continue;
    const std::string name = c < class_names.size() ? class_names[c] : ("class" + std::to_string(c));
    os << "AP[" << name << "] = " << report.ap_per_class[c] << "\n";
  }
  os << "mmAP = " << report.mmap << "\n";
  return os.str();
}

}  // namespace labelenc
