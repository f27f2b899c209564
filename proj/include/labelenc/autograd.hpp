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

#include <functional>
#include <memory>
#include <vector>

#include "labelenc/tensor.hpp"

namespace labelenc {

class Node;
using Var = std::shared_ptr<Node>;

/// Reverse-mode autodiff node. A node owns its forward value and, once
/// backward() has run, the accumulated gradient of the root w.r.t. it.
/// Nodes whose inputs all have requires_grad=false keep no parents and no
/// backward closure, so inference-only subgraphs are pruned automatically.
class Node {
 public:
  Tensor value;
  Tensor grad;  // allocated lazily by accumulate()
  bool requires_grad = false;
  bool is_leaf = false;

  std::vector<Var> parents;
  // Receives the gradient flowing into this node; pushes into parents.
  std::function<void(const Tensor&)> backward_fn;

  void accumulate(const Tensor& g) {
    if (grad.empty()) grad = Tensor(value.shape());
    grad.add_(g);
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
  bool has_grad() const { return !grad.empty(); }
};

/// Trainable leaf.
Var make_leaf(Tensor value, bool requires_grad = true);

/// Non-trainable input.
Var make_constant(Tensor value);

/// Interior node. Drops parents/backward_fn when no parent requires grad.
Var make_op(Tensor value, std::vector<Var> parents, std::function<void(const Tensor&)> backward_fn);

/// Runs reverse-mode accumulation from a scalar root (numel()==1).
void backward(const Var& root);

}  // namespace labelenc
