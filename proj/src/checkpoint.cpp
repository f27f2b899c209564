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

#include "labelenc/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace labelenc {
namespace {

constexpr char kMagic[8] = {'L', 'E', 'N', 'C', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is, const char* what) {
  const uint64_t len = read_pod<uint64_t>(is, what);
  if (len > (1ull << 30)) throw std::runtime_error("checkpoint: implausible string length");
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error(std::string("checkpoint: truncated while reading ") + what);
  return s;
}

}  // namespace

const Tensor* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, t] : arrays)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const std::vector<std::pair<std::string, const ParamStore*>>& stores,
                     const std::string& metadata_json, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod<uint32_t>(os, kVersion);
  write_string(os, metadata_json);
  uint64_t count = 0;
  for (const auto& [prefix, store] : stores) count += store->names().size();
  write_pod<uint64_t>(os, count);
  for (const auto& [prefix, store] : stores) {
    for (const auto& name : store->names()) {
      const Tensor& t = store->get(name)->value;
      write_string(os, prefix + "/" + name);
      write_pod<uint8_t>(os, 0);  // dtype: f64
      write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
      for (int d : t.shape()) write_pod<uint32_t>(os, static_cast<uint32_t>(d));
      write_pod<uint64_t>(os, static_cast<uint64_t>(t.numel()) * sizeof(double));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.numel() * sizeof(double)));
    }
  }
  if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint archive");
  const uint32_t version = read_pod<uint32_t>(is, "version");
  if (version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version " + std::to_string(version));
  CheckpointData data;
  data.metadata_json = read_string(is, "metadata");
  const uint64_t count = read_pod<uint64_t>(is, "entry count");
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is, "array name");
    const uint8_t dtype = read_pod<uint8_t>(is, "dtype");
    if (dtype != 0) throw std::runtime_error("load_checkpoint: unsupported dtype for " + name);
    const uint32_t ndim = read_pod<uint32_t>(is, "ndim");
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<uint32_t>(is, "dim"));
    const uint64_t nbytes = read_pod<uint64_t>(is, "payload size");
    Tensor t(shape);
    if (nbytes != static_cast<uint64_t>(t.numel()) * sizeof(double))
      throw std::runtime_error("load_checkpoint: payload size mismatch for " + name);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(nbytes));
    if (!is) throw std::runtime_error("load_checkpoint: truncated payload for " + name);
    data.arrays.emplace_back(std::move(name), std::move(t));
  }
  return data;
}

void load_into_store(const CheckpointData& data, const std::string& prefix, ParamStore& store) {
  for (const auto& name : store.names()) {
    const Tensor* src = data.find(prefix + "/" + name);
    if (!src)
      throw std::runtime_error("checkpoint load: missing array " + prefix + "/" + name);
    Var dst = store.get(name);
    if (!dst->value.same_shape(*src))
      throw std::runtime_error("checkpoint load: shape mismatch for " + prefix + "/" + name + ": " +
                               dst->value.shape_str() + " vs " + src->shape_str());
    dst->value = *src;
  }
}

uint64_t config_hash(const std::string& config_json) {
  uint64_t h = 1469598103934665603ull;
  for (char c : config_json) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace labelenc
