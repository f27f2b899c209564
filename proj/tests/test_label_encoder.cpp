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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "labelenc/label_encoder.hpp"
#include "labelenc/ops.hpp"
#include "labelenc/pipeline.hpp"

using namespace labelenc;

namespace {

Tensor random_labels(Rng& rng, int C, int H, int W) {
  Tensor t({1, C, H, W});
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  EncoderConfig c;
  c.num_classes = 2;
  c.width_mult = 0.25;
  c.fpn_channels = 16;
  CHECK_NOTHROW(c.validate());
  c.width_mult = 0.05;  // 64 * 0.05 = 3 < 8
  CHECK_THROWS(c.validate());
  c.width_mult = 1.5;
  CHECK_THROWS(c.validate());
  c.width_mult = 0.25;
  c.pyramid_strides = {8, 16, 24};
  CHECK_THROWS(c.validate());
  c.pyramid_strides = {16, 8, 32};
  CHECK_THROWS(c.validate());
}

TEST_CASE("architecture channel counts") {
  SUBCASE("width 1.0, 80 classes: stage1 -> 128, stage5 -> 2048") {
    EncoderConfig c;
    c.num_classes = 80;
    c.width_mult = 1.0;
    ParamStore ps = build_encoder(c, 1);
    CHECK(ps.get("stage1.conv.w")->value.shape() == std::vector<int>{128, 80, 7, 7});
    CHECK(ps.get("stage5.block1.conv3.w")->value.dim(0) == 2048);
    // Block counts {1, 2, 2, 1} across stages 2-5.
    CHECK(ps.has("stage2.block1.conv1.w"));
    CHECK(!ps.has("stage2.block2.conv1.w"));
    CHECK(ps.has("stage3.block2.conv1.w"));
    CHECK(ps.has("stage4.block2.conv1.w"));
    CHECK(!ps.has("stage5.block2.conv1.w"));
    // No batch norm anywhere: only .w / .b arrays.
    for (const auto& n : ps.names())
      CHECK((n.ends_with(".w") || n.ends_with(".b")));
  }
  SUBCASE("width 0.25, 2 classes: stage1 -> 32") {
    EncoderConfig c;
    c.num_classes = 2;
    c.width_mult = 0.25;
    c.fpn_channels = 16;
    ParamStore ps = build_encoder(c, 1);
    CHECK(ps.get("stage1.conv.w")->value.shape() == std::vector<int>{32, 2, 7, 7});
    CHECK(ps.get("stage5.block1.conv3.w")->value.dim(0) == 512);
  }
}

TEST_CASE("build determinism and seed sensitivity") {
  EncoderConfig c;
  c.num_classes = 2;
  c.width_mult = 0.25;
  c.fpn_channels = 16;
  ParamStore a = build_encoder(c, 5), b = build_encoder(c, 5), d = build_encoder(c, 6);
  CHECK(a.names() == b.names());
  for (const auto& n : a.names()) {
    const Tensor& ta = a.get(n)->value;
    bool same = true;
    for (int64_t i = 0; i < ta.numel(); ++i)
      if (ta[i] != b.get(n)->value[i]) same = false;
    CHECK(same);
  }
  bool any_diff = false;
  for (const auto& n : a.names())
    for (int64_t i = 0; i < a.get(n)->value.numel(); ++i)
      if (a.get(n)->value[i] != d.get(n)->value[i]) any_diff = true;
  CHECK(any_diff);
}

TEST_CASE("encode output shapes follow the stride law") {
  EncoderConfig c;
  c.num_classes = 2;
  c.width_mult = 0.25;
  c.fpn_channels = 16;
  ParamStore ps = build_encoder(c, 3);
  Rng rng(4);
  auto pyr = encode(ps, c, make_constant(random_labels(rng, 2, 64, 96)));
  REQUIRE(pyr.size() == 3);
  CHECK(pyr[0]->value.shape() == std::vector<int>{1, 16, 8, 12});
  CHECK(pyr[1]->value.shape() == std::vector<int>{1, 16, 4, 6});
  CHECK(pyr[2]->value.shape() == std::vector<int>{1, 16, 2, 3});
  // Doubling H and W doubles every map.
  auto pyr2 = encode(ps, c, make_constant(random_labels(rng, 2, 128, 192)));
  CHECK(pyr2[0]->value.shape() == std::vector<int>{1, 16, 16, 24});
  CHECK(pyr2[2]->value.shape() == std::vector<int>{1, 16, 4, 6});
}

TEST_CASE("all-zero labels produce finite outputs") {
  EncoderConfig c;
  c.num_classes = 2;
  c.width_mult = 0.25;
  c.fpn_channels = 16;
  ParamStore ps = build_encoder(c, 9);
  auto pyr = encode(ps, c, make_constant(Tensor({1, 2, 32, 32})));
  for (const auto& p : pyr) CHECK(p->value.all_finite());
}

TEST_CASE("indivisible input size rejected naming the stride") {
  EncoderConfig c;
  c.num_classes = 1;
  c.width_mult = 0.25;
  c.fpn_channels = 16;
  ParamStore ps = build_encoder(c, 9);
  CHECK_THROWS_WITH_AS(encode(ps, c, make_constant(Tensor({1, 1, 40, 32}))),
                       doctest::Contains("stride"), std::invalid_argument);
  CHECK_THROWS_AS(encode(ps, c, make_constant(Tensor({1, 2, 32, 32}))), std::invalid_argument);
}

TEST_CASE("encoder gradients match finite differences") {
  EncoderConfig c;
  c.num_classes = 1;
  c.width_mult = 0.125;
  c.fpn_channels = 8;
  ParamStore ps = build_encoder(c, 11);
  Rng rng(12);
  Tensor labels = random_labels(rng, 1, 32, 32);

  auto loss_fn = [&] {
    auto pyr = encode(ps, c, make_constant(labels));
    Var acc = ops::sum(ops::square(pyr[0]));
    for (size_t i = 1; i < pyr.size(); ++i) acc = ops::add(acc, ops::sum(ops::square(pyr[i])));
    return acc;
  };
  ps.zero_grad();
  backward(loss_fn());

  // Central differences on a random sample of elements from every array.
  const double h = 1e-5;
  double worst = 0.0;
  for (const auto& name : ps.names()) {
    Var p = ps.get(name);
    for (int k = 0; k < 4; ++k) {
      const int64_t i = static_cast<int64_t>(rng.next_u64() % static_cast<uint64_t>(p->value.numel()));
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = loss_fn()->value[0];
      p->value[i] = orig - h;
      const double dn = loss_fn()->value[0];
      p->value[i] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double ad = p->has_grad() ? p->grad[i] : 0.0;
      const double rel = std::abs(fd - ad) / std::max({std::abs(fd), std::abs(ad), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("freeze contract: optimizer step leaves arrays bit-identical") {
  EncoderConfig c;
  c.num_classes = 1;
  c.width_mult = 0.25;
  c.fpn_channels = 16;
  ParamStore ps = build_encoder(c, 13);
  ps.set_frozen(true);
  ParamStore before = ps.clone();

  Rng rng(14);
  auto pyr = encode(ps, c, make_constant(random_labels(rng, 1, 32, 32)));
  Var loss = ops::sum(ops::square(pyr[0]));
  CHECK(!loss->requires_grad);  // graph pruned: nothing upstream trains
  if (loss->requires_grad) backward(loss);
  SgdOptimizer opt(0.9, 1e-4);
  opt.step(ps, 0.1);

  for (const auto& n : ps.names()) {
    const Tensor& now = ps.get(n)->value;
    const Tensor& old = before.get(n)->value;
    bool same = true;
    for (int64_t i = 0; i < now.numel(); ++i)
      if (now[i] != old[i]) same = false;
    CHECK(same);
  }
}
