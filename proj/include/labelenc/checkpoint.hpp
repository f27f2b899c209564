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

#include "labelenc/param_store.hpp"

namespace labelenc {

/// Named-tensor archive: little-endian raw doubles per array plus one JSON
/// metadata record. Round-trips are bit-exact.
struct CheckpointData {
  std::string metadata_json;
  // Insertion-ordered (name, tensor) pairs.
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::vector<std::pair<std::string, const ParamStore*>>& stores,
                     const std::string& metadata_json, const std::string& path);

CheckpointData load_checkpoint(const std::string& path);

/// Copies arrays under `prefix`/ into the store. Throws naming the first
/// missing or shape-mismatched array.
void load_into_store(const CheckpointData& data, const std::string& prefix, ParamStore& store);

/// Stable hash of a configuration string, recorded in checkpoint metadata so
/// loads into a different configuration can warn.
uint64_t config_hash(const std::string& config_json);

}  // namespace labelenc
