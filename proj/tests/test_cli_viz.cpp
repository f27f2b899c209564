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
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "labelenc/viz.hpp"

using namespace labelenc;
namespace fs = std::filesystem;

#ifndef LABELENC_CLI_PATH
#define LABELENC_CLI_PATH "./labelenc_cli"
#endif

namespace {

struct TmpDir {
  fs::path path;
  explicit TmpDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("labelenc_cli_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TmpDir() { fs::remove_all(path); }
};

struct Pgm {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;
};

Pgm read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  std::string magic;
  int maxval = 0;
  Pgm p;
  f >> magic >> p.width >> p.height >> maxval;
  REQUIRE(magic == "P5");
  REQUIRE(maxval == 255);
  f.get();  // single whitespace after header
  p.pixels.resize(static_cast<size_t>(p.width) * static_cast<size_t>(p.height));
  f.read(reinterpret_cast<char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size()));
  REQUIRE(f.gcount() == static_cast<std::streamsize>(p.pixels.size()));
  return p;
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

// Runs the CLI with stdout+stderr captured; returns the exit code.
int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(LABELENC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("feature intensity visualization") {
  TmpDir tmp("viz");
  SUBCASE("all-zero map produces an all-black image") {
    Tensor zero({4, 6, 5});
    const std::string path = (tmp.path / "zero.pgm").string();
    viz_feature_intensity(zero, path);
    Pgm p = read_pgm(path);
    CHECK(p.width == 5);
    CHECK(p.height == 6);
    for (uint8_t v : p.pixels) CHECK(v == 0);
  }
  SUBCASE("one-hot spatial spike lights a single pixel") {
    Tensor t({1, 3, 8, 8});
    for (int c = 0; c < 3; ++c) t.at4(0, c, 2, 5) = 1.0;
    const std::string path = (tmp.path / "spike.pgm").string();
    viz_feature_intensity(t, path);
    Pgm p = read_pgm(path);
    int bright = 0;
    for (size_t i = 0; i < p.pixels.size(); ++i) {
      if (p.pixels[i] == 255) {
        ++bright;
        CHECK(i == 2u * 8u + 5u);
      } else {
        CHECK(p.pixels[i] == 0);
      }
    }
    CHECK(bright == 1);
  }
  SUBCASE("min-max normalization makes scaling invisible") {
    Tensor t({2, 6, 7});
    Rng rng(8);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal();
    Tensor t2 = t;
    t2.scale_(2.0);
    const std::string a = (tmp.path / "a.pgm").string(), b = (tmp.path / "b.pgm").string();
    viz_feature_intensity(t, a);
    viz_feature_intensity(t2, b);
    CHECK(read_file(a) == read_file(b));
  }
}

TEST_CASE("label channel visualization") {
  TmpDir tmp("labels");
  std::vector<Annotation> anns = {{0, 2, 2, 12, 12}, {1, 4, 4, 10, 10}};
  LabelTensor lt = render_labels(anns, 2, 16, 16);
  auto paths = viz_label_channels(lt, (tmp.path / "img").string());
  REQUIRE(paths.size() == 2);
  for (const auto& path : paths) CHECK(fs::exists(path));
  Pgm c0 = read_pgm(paths[0]);
  // Pixel (7,7) samples the codec at (7.5, 7.5); uncovered far corner is 0.
  const auto expected =
      static_cast<uint8_t>(std::lround(box_fill_value(7.5, 7.5, anns[0]) * 255.0));
  CHECK(c0.pixels[7u * 16u + 7u] == expected);
  CHECK(c0.pixels[15u * 16u + 15u] == 0);
}

TEST_CASE("cli surface") {
  TmpDir tmp("cli");
  const fs::path log = tmp.path / "log.txt";

  SUBCASE("unknown subcommand exits 1 with usage") {
    CHECK(run_cli("frobnicate", log) == 1);
  }
  SUBCASE("train-step2 without a step1 checkpoint names the missing key") {
    std::ofstream(tmp.path / "c.json")
        << R"({"dataset": {"synthetic": {"num_images": 4, "image_size": 64, "num_classes": 2}},
              "model": {"width_mult": 0.125, "fpn_channels": 8, "head_channels": 8},
              "train": {"total_iters": 1, "batch_size": 2}})";
    CHECK(run_cli("train-step2 --config " + (tmp.path / "c.json").string() + " --out " +
                      (tmp.path / "o").string(),
                  log) == 1);
    CHECK(read_file(log).find("step1_checkpoint") != std::string::npos);
  }
  SUBCASE("unknown config key exits 1 and names it") {
    std::ofstream(tmp.path / "bad.json") << R"({"trian": {"total_iters": 1}})";
    CHECK(run_cli("gen-data --config " + (tmp.path / "bad.json").string(), log) == 1);
    CHECK(read_file(log).find("trian") != std::string::npos);
  }
  SUBCASE("gen-data, train-baseline, eval, and config round-trip") {
    std::ofstream(tmp.path / "c.json")
        << R"({"dataset": {"synthetic": {"num_images": 8, "image_size": 64, "num_classes": 2, "seed": 5}},
              "model": {"width_mult": 0.125, "fpn_channels": 8, "head_channels": 8},
              "train": {"total_iters": 3, "batch_size": 2, "lr": 0.001}})";
    const std::string cfg = (tmp.path / "c.json").string();

    const fs::path data_dir = tmp.path / "data";
    REQUIRE(run_cli("gen-data --config " + cfg + " --out " + data_dir.string(), log) == 0);
    CHECK(fs::exists(data_dir / "manifest.json"));
    CHECK(fs::exists(data_dir / "images"));

    const fs::path run1 = tmp.path / "run1";
    REQUIRE(run_cli("train-baseline --config " + cfg + " --out " + run1.string(), log) == 0);
    CHECK(fs::exists(run1 / "checkpoint.ckpt"));
    CHECK(fs::exists(run1 / "loss_log.tsv"));
    CHECK(fs::exists(run1 / "effective_config.json"));

    // The echoed effective config reproduces the run.
    const fs::path run2 = tmp.path / "run2";
    REQUIRE(run_cli("train-baseline --config " + (run1 / "effective_config.json").string() +
                        " --out " + run2.string(),
                    log) == 0);
    CHECK(read_file(run1 / "loss_log.tsv") == read_file(run2 / "loss_log.tsv"));

    // eval consumes the checkpoint and reports mmAP.
    std::ofstream(tmp.path / "e.json")
        << R"({"dataset": {"synthetic": {"num_images": 8, "image_size": 64, "num_classes": 2, "seed": 5}},
              "model": {"width_mult": 0.125, "fpn_channels": 8, "head_channels": 8},
              "checkpoint": ")"
        << (run1 / "checkpoint.ckpt").string() << R"("})";
    REQUIRE(run_cli("eval --config " + (tmp.path / "e.json").string() + " --out " +
                        (tmp.path / "eval").string(),
                    log) == 0);
    CHECK(read_file(log).find("mmAP") != std::string::npos);

    // viz subcommands produce grayscale images.
    std::ofstream(tmp.path / "v.json")
        << R"({"dataset": {"path": ")" << data_dir.string() << R"("},
              "model": {"width_mult": 0.125, "fpn_channels": 8, "head_channels": 8},
              "checkpoint": ")"
        << (run1 / "checkpoint.ckpt").string() << R"(",
              "viz": {"sample_index": 0, "level": 1, "source": "backbone"}})";
    REQUIRE(run_cli("viz-labels --config " + (tmp.path / "v.json").string() + " --out " +
                        (tmp.path / "vl").string(),
                    log) == 0);
    REQUIRE(run_cli("viz-features --config " + (tmp.path / "v.json").string() + " --out " +
                        (tmp.path / "vf").string(),
                    log) == 0);
    bool found_pgm = false;
    for (const auto& e : fs::directory_iterator(tmp.path / "vf"))
      if (e.path().extension() == ".pgm") found_pgm = true;
    CHECK(found_pgm);
  }
}
