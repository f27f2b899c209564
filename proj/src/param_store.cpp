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

#include "labelenc/param_store.hpp"

#include <cmath>

namespace labelenc {

Var ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  Var v = make_leaf(std::move(init), !frozen_);
  names_.push_back(name);
  index_[name] = v;
  return v;
}

Var ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

void ParamStore::set_frozen(bool frozen) {
  frozen_ = frozen;
  for (auto& [name, v] : index_) v->requires_grad = !frozen;
}

void ParamStore::zero_grad() {
  for (auto& [name, v] : index_) v->zero_grad();
}

double ParamStore::grad_abs_sum() const {
  double s = 0.0;
  for (const auto& [name, v] : index_) {
    if (!v->has_grad()) continue;
    const double* g = v->grad.data();
    for (int64_t i = 0, n = v->grad.numel(); i < n; ++i) s += std::fabs(g[i]);
  }
  return s;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  out.frozen_ = frozen_;
  for (const auto& name : names_) {
    Tensor copy = index_.at(name)->value;
    out.add(name, std::move(copy));
  }
  return out;
}

Tensor ParamStore::conv_init(Rng& rng, int cout, int cin, int kh, int kw) {
  Tensor w({cout, cin, kh, kw});
  const double std = std::sqrt(2.0 / (static_cast<double>(cin) * kh * kw));
  for (int64_t i = 0, n = w.numel(); i < n; ++i) w[i] = std * rng.normal();
  return w;
}

}  // namespace labelenc
