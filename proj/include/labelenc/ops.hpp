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

#include "labelenc/autograd.hpp"

namespace labelenc::ops {

/// 2-d convolution, NCHW input, OIHW weight, per-output-channel bias.
/// Implemented as im2col + BLAS gemm; columns are recomputed in backward.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);

Var relu(const Var& x);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& x, double s);
Var square(const Var& x);
Var exp(const Var& x);

/// Nearest-neighbour 2x spatial upsampling.
Var upsample_nearest2(const Var& x);

/// Normalizes over the channel dimension at every (n, h, w) location.
/// No learned affine.
Var layer_norm_channels(const Var& x, double eps = 1e-5);

Var sum(const Var& x);
Var mean(const Var& x);

/// Forward value pass-through that blocks all gradient flow.
Var detach(const Var& x);

/// Sigmoid focal loss summed over every (n, c, h, w) entry.
/// `cls_onehot` holds 1 where the entry is the positive class of an assigned
/// location, 0 elsewhere.
Var focal_loss_sum(const Var& logits, const Tensor& cls_onehot, double alpha, double gamma);

/// Generalized-IoU loss (1 - GIoU) summed over positive locations.
/// `reg` and `reg_target` are N x 4 x h x w maps of positive (l, t, r, b)
/// distances from the location to the box sides; `pos_mask` is N x 1 x h x w.
Var giou_loss_sum(const Var& reg, const Tensor& reg_target, const Tensor& pos_mask);

}  // namespace labelenc::ops
