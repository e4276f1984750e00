/* Copyright 2026 The htr3d Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <doctest.h>
#include <png.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>

#include "htr/augment.hpp"
#include "htr/checkpoint.hpp"
#include "htr/config.hpp"
#include "htr/dataset.hpp"
#include "htr/synth.hpp"
#include "htr/utf8.hpp"

using namespace htr;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) : path(fs::temp_directory_path() / ("htr_test_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

void write_gray_png(const fs::path& p, std::size_t w, std::size_t h, const std::vector<unsigned char>& px) {
  std::FILE* f = std::fopen(p.c_str(), "wb");
  REQUIRE(f);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  png_init_io(png, f);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < h; ++y) {
    png_write_row(png, const_cast<png_bytep>(px.data() + y * w));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(f);
}

struct CommandResult {
  int status;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + HTR_CLI_PATH + "\" " + args + " 2>&1";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  REQUIRE(pipe);
  std::string out;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  const int raw = pclose(pipe.release());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.backbone.input_height = 16;
  c.backbone.stages = parse_stages("4:3:1:pool,4:3:1:pool");
  c.ffn_dim = 4;
  c.agg_dim = 3;
  c.scales = {2, 3};
  return c;
}

}  // namespace

TEST_CASE("pgm loading") {
  TempDir d("pgm");
  write_bytes(d.path / "one.pgm", std::string("P5\n1 1\n255\n") + '\xff');
  const GrayImage one = load_image(d.path / "one.pgm");
  CHECK(one.width == 1);
  CHECK(one.at(0, 0) == 1.0);

  write_bytes(d.path / "c.pgm", std::string("P5\n# comment\n2 1\n# another\n100\n") + '\x00' + '\x32');
  const GrayImage c = load_pgm(d.path / "c.pgm");
  CHECK(c.at(1, 0) == doctest::Approx(0.5));

  GrayImage img(5, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i) / 14.0;
  save_pgm(img, d.path / "rt.pgm");
  const GrayImage back = load_image(d.path / "rt.pgm");
  REQUIRE(back.width == 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 0.5 / 255 + 1e-12);

  write_bytes(d.path / "bad.pgm", "P5\nxx 1\n255\n");
  CHECK_THROWS(load_image(d.path / "bad.pgm"));
  write_bytes(d.path / "short.pgm", "P5\n4 4\n255\nab");
  CHECK_THROWS(load_image(d.path / "short.pgm"));
  write_bytes(d.path / "ascii.pgm", "P2\n1 1\n255\n7\n");
  CHECK_THROWS(load_image(d.path / "ascii.pgm"));
  CHECK_THROWS(load_image(d.path / "missing.pgm"));
}

TEST_CASE("png loading") {
  TempDir d("png");
  write_gray_png(d.path / "g.png", 3, 2, {0, 51, 255, 255, 0, 102});
  const GrayImage g = load_image(d.path / "g.png");
  REQUIRE(g.width == 3);
  REQUIRE(g.height == 2);
  CHECK(g.at(1, 0) == doctest::Approx(0.2));
  CHECK(g.at(2, 0) == 1.0);
  CHECK(g.at(2, 1) == doctest::Approx(0.4));
  write_bytes(d.path / "t.png", "\x89PNG\r\n\x1a\nbroken");
  CHECK_THROWS(load_image(d.path / "t.png"));
}

TEST_CASE("resizing") {
  GrayImage img(100, 64, 0.25);
  const GrayImage half = resize_to_height(img, 32);
  CHECK(half.height == 32);
  CHECK(half.width == 50);
  for (double v : half.pixels) CHECK(v == doctest::Approx(0.25));
  GrayImage ramp(4, 1);
  for (std::size_t x = 0; x < 4; ++x) ramp.at(x, 0) = static_cast<double>(x);
  const GrayImage r = resize_bilinear(ramp, 2, 1);
  CHECK(r.at(0, 0) == doctest::Approx(0.5));
  CHECK(r.at(1, 0) == doctest::Approx(2.5));
  const Tensor t = image_to_tensor(ramp);
  CHECK(t.dim(0) == 1);
  CHECK(t.dim(1) == 4);
  CHECK(t.dim(2) == 1);
  CHECK(t[3] == 3.0);
}

TEST_CASE("synthetic lines") {
  SynthConfig cfg;
  cfg.canvas_height = 32;
  const auto a = synth_generate(cfg, 6, "train"), b = synth_generate(cfg, 6, "train");
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a[i].image == b[i].image);
    CHECK(a[i].label == b[i].label);
    CHECK(a[i].image.height == 32);
    const std::size_t n = split_utf8(a[i].label).size();
    CHECK(n >= cfg.min_chars);
    CHECK(n <= cfg.max_chars);
    for (double v : a[i].image.pixels) CHECK((v >= 0.0 && v <= 1.0));
  }
  CHECK(a[0].id == "train_00000");
  CHECK_FALSE(synth_generate(cfg, 1, "val")[0].image == a[0].image);
  SynthConfig other = cfg;
  other.seed = 43;
  CHECK_FALSE(synth_generate(other, 1, "train")[0].image == a[0].image);
  CHECK(synth_generate(cfg, 0, "train").empty());
  CHECK(synth_vocabulary(cfg).symbol_count() == 5);

  SynthConfig small = cfg;
  small.canvas_height = 4;
  CHECK_THROWS_AS(small.validate(), std::invalid_argument);
  SynthConfig one = cfg;
  one.symbols = 1;
  CHECK_THROWS_AS(one.validate(), std::invalid_argument);
  CHECK(glyph_set(5).size() == 5);
}

TEST_CASE("two-symbol glyphs are separable by nearest centroid") {
  SynthConfig cfg;
  cfg.symbols = 2;
  cfg.min_chars = cfg.max_chars = 1;
  cfg.canvas_height = 32;
  const auto lines = synth_generate(cfg, 60, "train");
  const auto vocab = synth_vocabulary(cfg);
  std::vector<std::vector<double>> feats;
  std::vector<int> cls;
  for (const auto& l : lines) {
    feats.push_back(resize_bilinear(l.image, 16, 16).pixels);
    cls.push_back(vocab.id(l.label));
  }
  std::vector<double> centroid[3] = {std::vector<double>(256, 0.0), std::vector<double>(256, 0.0),
                                     std::vector<double>(256, 0.0)};
  int counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t k = 0; k < 256; ++k) centroid[cls[i]][k] += feats[i][k];
    ++counts[cls[i]];
  }
  REQUIRE(counts[1] > 0);
  REQUIRE(counts[2] > 0);
  for (int c = 1; c <= 2; ++c) {
    for (double& v : centroid[c]) v /= counts[c];
  }
  int correct = 0;
  for (std::size_t i = 30; i < 60; ++i) {
    double d[3] = {0, 0, 0};
    for (int c = 1; c <= 2; ++c) {
      for (std::size_t k = 0; k < 256; ++k) d[c] += std::pow(feats[i][k] - centroid[c][k], 2);
    }
    correct += (d[1] < d[2] ? 1 : 2) == cls[i];
  }
  CHECK(correct >= 27);
}

TEST_CASE("augmentation") {
  SynthConfig cfg;
  cfg.canvas_height = 32;
  const GrayImage img = synth_generate(cfg, 1, "train")[0].image;
  CHECK(augment(img, 5) == augment(img, 5));
  CHECK(augment(img, 9, AugmentOptions::disabled()) == img);
  bool changed = false;
  double ink_before = 0;
  for (double v : img.pixels) ink_before += v;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const GrayImage a = augment(img, s);
    CHECK(a.width == img.width);
    CHECK(a.height == img.height);
    for (double v : a.pixels) CHECK((v >= 0.0 && v <= 1.0));
    changed |= !(a == img);
  }
  CHECK(changed);
  AugmentOptions shift_only = AugmentOptions::disabled();
  shift_only.p_shift = 1.0;
  shift_only.max_shift = 0.5;
  for (std::uint64_t s = 0; s < 10; ++s) {
    double ink = 0;
    for (double v : augment(img, s, shift_only).pixels) ink += v;
    CHECK(ink == doctest::Approx(ink_before));
  }
}

TEST_CASE("manifests and vocabularies") {
  TempDir d("manifest");
  SynthConfig cfg;
  cfg.canvas_height = 16;
  cfg.num_samples = 4;
  cfg.num_val = 2;
  const SynthOutput out = write_synth_dataset(cfg, d.path);
  CHECK(fs::exists(d.path / "vocab.txt"));
  const DatasetManifest train = load_manifest(d.path / "train.tsv");
  CHECK(train.entries == out.train.entries);
  CHECK(train.split == "train");
  CHECK(train.vocab == synth_vocabulary(cfg));
  CHECK(load_manifest(d.path / "val.tsv").entries.size() == 2);
  const auto samples = load_samples(train, 16);
  REQUIRE(samples.size() == 4);
  CHECK(samples[0].label == train.vocab.encode(samples[0].text));
  CHECK(samples[0].image.height == 16);

  CHECK(Vocabulary::load(d.path / "vocab.txt") == train.vocab);
  DatasetManifest dup = train;
  dup.entries.push_back(dup.entries[0]);
  CHECK_THROWS_AS(dup.validate(), std::invalid_argument);
  DatasetManifest unknown = train;
  unknown.entries[0].label = "?";
  CHECK_THROWS(unknown.validate());
  CHECK_THROWS(Vocabulary({"a", "a"}));
  CHECK_THROWS(Vocabulary({"ab"}));
  CHECK(Vocabulary({"a", "b"}).decode(std::vector<int>{1, 0, 2}) == "ab");
}

TEST_CASE("config files") {
  const ExperimentConfig c = parse_experiment_config(
      "# comment\nseed = 7\nsynth.symbols = 3\nmodel.scales = 2,4\nmodel.infer_scale = 2\n"
      "train.halve_epochs = 10, 20\nbackbone.stages = 8:3:1:pool,8:3:1\n");
  CHECK(c.synth.seed == 7);
  CHECK(c.train.seed == 7);
  CHECK(c.synth.symbols == 3);
  CHECK(c.model.scales == std::vector<int>{2, 4});
  CHECK(c.train.halve_epochs == std::vector<int>{10, 20});
  CHECK(c.model.backbone.stages.size() == 2);
  const ExperimentConfig again = parse_experiment_config(format_experiment_config(c));
  CHECK(again.synth == c.synth);
  CHECK(again.model == c.model);
  CHECK(again.train == c.train);
  CHECK(parse_model_config(format_model_config(c.model)) == c.model);
  CHECK_THROWS_AS(parse_experiment_config("model.nope = 1\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config("train.lr = fast\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config("just words\n"), std::invalid_argument);
  CHECK_THROWS_AS(parse_experiment_config("backbone.stages = 3:3:1\n"), std::invalid_argument);
}

TEST_CASE("command line") {
  TempDir d("cli");
  CHECK(run_cli("selftest").status == 0);
  CHECK(run_cli("selftest --bogus").status != 0);
  CHECK(run_cli("").status != 0);
  const auto missing = run_cli("train --config " + (d.path / "none.cfg").string() + " --train x --out y");
  CHECK(missing.status != 0);

  ModelBundle b = create_bundle(tiny_model(), Vocabulary({"a", "b"}), 3);
  b.params.at(branch_prefix(3) + "cls.b").mutable_values()[0] = 100.0;
  save_checkpoint(b, d.path / "m.ckpt");
  save_pgm(GrayImage(40, 16, 0.0), d.path / "blank.pgm");
  const auto infer = run_cli("infer --model " + (d.path / "m.ckpt").string() + " --image " + (d.path / "blank.pgm").string());
  CHECK(infer.status == 0);
  CHECK(infer.output == "\n");

  const auto viz = run_cli("viz --model " + (d.path / "m.ckpt").string() + " --image " +
                           (d.path / "blank.pgm").string() + " --out " + (d.path / "maps").string());
  CHECK(viz.status == 0);
  std::size_t maps = 0;
  for (const auto& e : fs::directory_iterator(d.path / "maps")) {
    ++maps;
    const GrayImage m = load_image(e.path());
    CHECK(m.width == 40);
    CHECK(m.height == 16);
  }
  CHECK(maps == block_count(backbone_output_width(b.config.backbone, 40), 3));

  const auto bad = run_cli("infer --model " + (d.path / "blank.pgm").string() + " --image " + (d.path / "blank.pgm").string());
  CHECK(bad.status != 0);
  CHECK(bad.output.find("error:") != std::string::npos);
}
