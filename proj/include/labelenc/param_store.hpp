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

#include <map>
#include <string>
#include <vector>

#include "labelenc/autograd.hpp"
#include "labelenc/rng.hpp"

namespace labelenc {

/// Named collection of trainable arrays for one network. Insertion order is
/// preserved so that serialization and optimizer traversal are deterministic.
class ParamStore {
 public:
  ParamStore() = default;

  Var add(const std::string& name, Tensor init);
  Var get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  const std::vector<std::string>& names() const { return names_; }
  size_t size() const { return names_.size(); }

  /// A frozen store takes no gradient and is skipped by optimizers.
  void set_frozen(bool frozen);
  bool frozen() const { return frozen_; }

  void zero_grad();

  /// Sum of |grad| over every array; exact 0.0 when no gradient reached it.
  double grad_abs_sum() const;

  /// Deep copy (fresh leaves, copied values).
  ParamStore clone() const;

  /// Fan-in scaled Gaussian init for a conv weight (Cout, Cin, kh, kw).
  static Tensor conv_init(Rng& rng, int cout, int cin, int kh, int kw);

 private:
  std::vector<std::string> names_;
  std::map<std::string, Var> index_;
  bool frozen_ = false;
};

}  // namespace labelenc
