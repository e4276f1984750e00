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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "htr/checkpoint.hpp"
#include "htr/synth.hpp"
#include "htr/trainer.hpp"

using namespace htr;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.backbone.input_height = 16;
  c.backbone.stages = parse_stages("4:3:1:pool,4:3:1:pool");
  c.ffn_dim = 4;
  c.agg_dim = 3;
  c.decoder_attn_dim = 3;
  c.decoder_hidden = 3;
  c.decoder_embed = 2;
  return c;
}

Vocabulary abc() { return Vocabulary({"a", "b", "c"}); }

GrayImage noise_image(std::size_t w, std::size_t h, std::uint64_t seed) {
  Rng rng(seed);
  GrayImage img(w, h);
  for (double& v : img.pixels) v = rng.uniform();
  return img;
}

std::vector<Sample> toy_samples(std::size_t n, std::size_t symbols, std::uint64_t seed) {
  SynthConfig s;
  s.num_samples = n;
  s.symbols = symbols;
  s.min_chars = 1;
  s.max_chars = 3;
  s.canvas_height = 16;
  s.seed = seed;
  return to_samples(synth_generate(s, n, "train"), synth_vocabulary(s));
}

std::vector<double> grads_of(const ParameterStore& store, const std::string& name) {
  const auto g = store.at(name).grad();
  return {g.begin(), g.end()};
}

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag)
      : path(std::filesystem::temp_directory_path() / ("htr_test_" + tag)) {
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

}  // namespace

TEST_CASE("branch sequence lengths follow the frame length") {
  ModelBundle b = create_bundle(tiny_config(), abc(), 1);
  const TrainForward fwd = forward_train(image_to_tensor(noise_image(48, 16, 2)), b, Mode::eval);
  REQUIRE(fwd.branches.size() == 3);
  CHECK(fwd.volume.data.dim(1) == 12);
  CHECK(fwd.branches[0].logits.dim(0) == 6);
  CHECK(fwd.branches[1].logits.dim(0) == 4);
  CHECK(fwd.branches[2].logits.dim(0) == 3);
  CHECK(fwd.branches[1].logits.dim(1) == 4);
  CHECK(fwd.branches[1].features.dim() == tiny_config().feature_dim());
}

TEST_CASE("inference uses the configured branch") {
  ModelBundle b = create_bundle(tiny_config(), abc(), 3);
  const Tensor img = image_to_tensor(noise_image(40, 16, 4));
  const TrainForward fwd = forward_train(img, b, Mode::eval);
  const Tensor logits = infer_logits(img, b);
  REQUIRE(logits.size() == fwd.branches[1].logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == fwd.branches[1].logits[i]);
  CHECK(forward_infer(img, b) == greedy_decode(fwd.branches[1].logits));
}

TEST_CASE("pruning leaves the kept branch bit-identical") {
  ModelBundle b = create_bundle(tiny_config(), abc(), 5);
  init_decoders(b, 5);
  const Tensor img = image_to_tensor(noise_image(52, 16, 6));
  const Tensor before = infer_logits(img, b);
  prune_branches(b, {3});
  CHECK(b.config.scales == std::vector<int>{3});
  CHECK_FALSE(b.has_branch(2));
  CHECK_FALSE(b.has_decoder(4));
  CHECK(b.has_decoder(3));
  const Tensor after = infer_logits(img, b);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == before[i]);
  prune_branches(b, {2});
  CHECK_THROWS_AS(infer_logits(img, b), std::invalid_argument);
}

TEST_CASE("adding a branch does not disturb the others") {
  ModelConfig one = tiny_config();
  one.scales = {3};
  ModelBundle a = create_bundle(one, abc(), 9), b = create_bundle(tiny_config(), abc(), 9);
  for (const auto& [name, t] : a.params) {
    REQUIRE(b.params.contains(name));
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(b.params.at(name)[i] == t[i]);
  }
}

TEST_CASE("checkpoint round trip is bit-exact") {
  ModelBundle b = create_bundle(tiny_config(), abc(), 7);
  init_decoders(b, 7);
  TrainConfig cfg;
  cfg.stage1_epochs = 1;
  cfg.augment = false;
  train_stage1(toy_samples(4, 3, 1), {}, b, cfg);
  const std::string bytes = serialize_bundle(b);
  ModelBundle r = deserialize_bundle(bytes);
  CHECK(serialize_bundle(r) == bytes);
  CHECK(r.config == b.config);
  CHECK(r.vocab == b.vocab);
  CHECK(r.epochs_completed == 1);
  CHECK(r.adam.step == b.adam.step);
  const Tensor img = image_to_tensor(noise_image(40, 16, 8));
  const Tensor x = infer_logits(img, b), y = infer_logits(img, r);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(x[i] == y[i]);

  TempDir dir("ckpt");
  save_checkpoint(b, dir.path / "m.ckpt");
  CHECK(serialize_bundle(load_checkpoint(dir.path / "m.ckpt")) == bytes);
  CHECK_THROWS(deserialize_bundle(bytes.substr(0, bytes.size() / 2)));
  CHECK_THROWS(deserialize_bundle("NOTACKPT" + bytes.substr(8)));
  CHECK_THROWS(deserialize_bundle(bytes + "x"));
  CHECK_THROWS(load_checkpoint(dir.path / "missing.ckpt"));
}

TEST_CASE("adam update rules") {
  ParameterStore store;
  Tensor& x = store.add("x", Tensor::vector({1.0, -2.0, 0.5}));
  x.mutable_grad()[0] = 3.0;
  x.mutable_grad()[1] = -0.01;
  AdamState state;
  adam_step(store, state, 0.1);
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(x[1] == doctest::Approx(-1.9).epsilon(1e-5));
  CHECK(x[2] == 0.5);
  CHECK(state.step == 1);

  ParameterStore bowl;
  Tensor& w = bowl.add("w", Tensor::scalar(1.0));
  AdamState s2;
  int steps = 0;
  while (std::abs(w.item()) >= 1e-3 && steps < 500) {
    w.zero_grad();
    w.mutable_grad()[0] = 2.0 * w.item();
    adam_step(bowl, s2, 0.05);
    ++steps;
  }
  CHECK(std::abs(w.item()) < 1e-3);

  x.mutable_grad()[2] = std::nan("");
  const double before = x[0];
  try {
    adam_step(store, state, 0.1);
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("'x'") != std::string::npos);
  }
  CHECK(x[0] == before);

  ParameterStore two;
  two.add("decoder.a", Tensor::scalar(1.0)).mutable_grad()[0] = 1.0;
  two.add("enc.a", Tensor::scalar(1.0)).mutable_grad()[0] = 1.0;
  AdamState s3;
  adam_step(two, s3, 0.1, {}, [](const std::string& n) { return !n.starts_with("decoder."); });
  CHECK(two.at("decoder.a").item() == 1.0);
  CHECK(two.at("enc.a").item() < 1.0);
}

TEST_CASE("learning rate halves after each listed epoch") {
  TrainConfig c;
  c.lr = 0.4;
  c.halve_epochs = {10, 20};
  CHECK(learning_rate(c, 1) == 0.4);
  CHECK(learning_rate(c, 10) == 0.4);
  CHECK(learning_rate(c, 11) == 0.2);
  CHECK(learning_rate(c, 20) == 0.2);
  CHECK(learning_rate(c, 21) == 0.1);
}

TEST_CASE("joint loss gradient is the weighted sum of its parts") {
  ModelBundle b = create_bundle(tiny_config(), abc(), 11);
  init_decoders(b, 11);
  const Tensor img = image_to_tensor(noise_image(48, 16, 12));
  const std::vector<int> label = {1, 3};
  TrainConfig cfg;
  cfg.lambda1 = 0.7;
  cfg.lambda2 = 1.6;
  auto run = [&](double l1, double l2) {
    b.params.zero_grad();
    BufferStore saved = b.buffers;
    for (auto& [n, t] : saved) t = t.clone();
    ad::Tape tape;
    LossTerms terms = sample_losses(img, label, b, cfg, true, Mode::eval);
    tape.backward(ad::scale(terms.ctc, l1) + ad::scale(terms.ce, l2));
    std::map<std::string, std::vector<double>> out;
    for (const auto& [n, t] : b.params) out[n] = grads_of(b.params, n);
    return out;
  };
  const auto both = run(cfg.lambda1, cfg.lambda2);
  const auto ctc = run(1, 0);
  const auto ce = run(0, 1);
  double worst = 0;
  for (const auto& [n, g] : both) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      worst = std::max(worst, std::abs(g[i] - (cfg.lambda1 * ctc.at(n)[i] + cfg.lambda2 * ce.at(n)[i])));
    }
  }
  CHECK(worst < 1e-10);
  for (double g : ce.at(branch_prefix(2) + "cls.w")) CHECK(g == 0.0);
  for (double g : ctc.at(decoder_prefix(b.config, 2) + "out.w")) CHECK(g == 0.0);
}

TEST_CASE("zero decoder weight reproduces continued stage 1") {
  const auto train = toy_samples(6, 3, 2);
  TrainConfig cfg;
  cfg.augment = false;
  cfg.batch_size = 3;
  cfg.lr = 0.003;
  cfg.stage1_epochs = 3;
  cfg.stage2_epochs = 2;
  cfg.lambda2 = 0;
  ModelBundle a = create_bundle(tiny_config(), abc(), 3), b = create_bundle(tiny_config(), abc(), 3);
  train_stage1(train, {}, a, cfg);
  train_stage2(train, {}, a, cfg);
  TrainConfig longer = cfg;
  longer.stage1_epochs = 5;
  train_stage1(train, {}, b, longer);
  for (const auto& [name, t] : b.params) {
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(a.params.at(name)[i] == doctest::Approx(t[i]).epsilon(1e-12));
  }
}

TEST_CASE("stage 1 leaves decoder parameters untouched") {
  const auto train = toy_samples(4, 3, 3);
  ModelBundle b = create_bundle(tiny_config(), abc(), 4);
  init_decoders(b, 4);
  const std::string before = serialize_bundle(b);
  const Tensor w = b.params.at(decoder_prefix(b.config, 3) + "out.w").clone();
  TrainConfig cfg;
  cfg.stage1_epochs = 2;
  train_stage1(train, {}, b, cfg);
  const Tensor& now = b.params.at(decoder_prefix(b.config, 3) + "out.w");
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(now[i] == w[i]);
  CHECK(serialize_bundle(b) != before);
}

TEST_CASE("training is deterministic and writes its outputs") {
  const auto train = toy_samples(6, 3, 4);
  TrainConfig cfg;
  cfg.stage1_epochs = 2;
  cfg.stage2_epochs = 1;
  cfg.batch_size = 4;
  TempDir d1("det1"), d2("det2");
  std::string bytes[2];
  int k = 0;
  for (const auto* dir : {&d1, &d2}) {
    ModelBundle b = create_bundle(tiny_config(), abc(), 8);
    TrainHooks hooks;
    hooks.out_dir = dir->path;
    train_stage1(train, train, b, cfg, hooks);
    train_stage2(train, train, b, cfg, hooks);
    bytes[k++] = serialize_bundle(b);
  }
  CHECK(bytes[0] == bytes[1]);
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  const std::string m1 = slurp(d1.path / "metrics.csv");
  CHECK(m1 == slurp(d2.path / "metrics.csv"));
  CHECK(slurp(d1.path / "model.ckpt") == slurp(d2.path / "model.ckpt"));
  std::istringstream lines(m1);
  std::string header, row;
  std::getline(lines, header);
  CHECK(header == "epoch,stage,loss_ctc,loss_ce,val_ar");
  std::getline(lines, row);
  CHECK(row.rfind("1,1,", 0) == 0);
  CHECK(row.find(",,") != std::string::npos);
  std::getline(lines, row);
  std::getline(lines, row);
  CHECK(row.rfind("3,2,", 0) == 0);
}

TEST_CASE("early stop hook and infeasible samples") {
  std::vector<Sample> train;
  for (std::uint64_t i = 0; i < 4; ++i) train.push_back({"s" + std::to_string(i), "ab", {1, 2}, noise_image(64, 16, i)});
  train[0].label = LabelSequence(40, 1);
  TrainConfig cfg;
  cfg.stage1_epochs = 5;
  ModelBundle b = create_bundle(tiny_config(), abc(), 6);
  TrainHooks hooks;
  hooks.on_epoch = [](const EpochMetrics& m, ModelBundle&) { return m.epoch < 2; };
  const auto hist = train_stage1(train, {}, b, cfg, hooks);
  REQUIRE(hist.size() == 2);
  CHECK(hist[0].skipped == 1);
  CHECK(std::isnan(hist[0].loss_ce));
  for (auto& s : train) s.label = LabelSequence(40, 1);
  CHECK_THROWS_AS(train_stage1(train, {}, b, cfg), std::invalid_argument);
}

TEST_CASE("a small toy set trains with decreasing loss") {
  const auto train = toy_samples(8, 2, 6);
  ModelBundle b = create_bundle(tiny_config(), Vocabulary({"a", "b"}), 12);
  TrainConfig cfg;
  cfg.augment = false;
  cfg.batch_size = 8;
  cfg.lr = 0.003;
  cfg.stage1_epochs = 5;
  const auto hist = train_stage1(train, {}, b, cfg);
  for (std::size_t i = 1; i < hist.size(); ++i) CHECK(hist[i].loss_ctc < hist[i - 1].loss_ctc);
}
