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
// htr: synthetic data, training, evaluation, inference and attention maps.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "htr/ablation.hpp"
#include "htr/checkpoint.hpp"
#include "htr/config.hpp"
#include "htr/dataset.hpp"
#include "htr/eval.hpp"
#include "htr/selftest.hpp"
#include "htr/trainer.hpp"

namespace fs = std::filesystem;
using namespace htr;

namespace {

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_experiment_config(path);
}

void require_same_vocab(const Vocabulary& model, const Vocabulary& data, const std::string& what) {
  if (!(model == data)) {
    throw std::runtime_error("checkpoint/vocabulary mismatch: " + what + " uses " +
                             std::to_string(data.symbol_count()) + " symbols, model has " +
                             std::to_string(model.symbol_count()));
  }
}

int cmd_synth(const std::string& config_path, const std::string& out) {
  const ExperimentConfig cfg = config_or_default(config_path);
  const SynthOutput data = write_synth_dataset(cfg.synth, out);
  std::cout << "wrote " << data.train.entries.size() << " train and " << data.val.entries.size()
            << " val lines to " << out << '\n';
  return 0;
}

struct TrainArgs {
  std::string config, train, val, out, init;
  bool joint = false;
  int stage = 0;
  std::vector<int> frame_lengths;
};

int cmd_train(const TrainArgs& a) {
  ExperimentConfig cfg = load_experiment_config(a.config);
  if (!a.frame_lengths.empty()) {
    cfg.model.scales = a.frame_lengths;
    cfg.model.validate();
  }
  const DatasetManifest train_m = load_manifest(a.train);
  const auto height = static_cast<std::size_t>(cfg.model.backbone.input_height);
  const std::vector<Sample> train = load_samples(train_m, height);
  std::vector<Sample> val;
  if (!a.val.empty()) {
    const DatasetManifest val_m = load_manifest(a.val);
    require_same_vocab(train_m.vocab, val_m.vocab, a.val);
    val = load_samples(val_m, height);
  }

  ModelBundle bundle;
  if (!a.init.empty()) {
    bundle = load_checkpoint(a.init);
    require_same_vocab(bundle.vocab, train_m.vocab, a.train);
  } else {
    bundle = create_bundle(cfg.model, train_m.vocab, cfg.train.seed);
  }

  fs::create_directories(a.out);
  if (a.init.empty()) fs::remove(fs::path(a.out) / "metrics.csv");
  {
    std::ofstream snap(fs::path(a.out) / "config.txt");
    snap << format_experiment_config(cfg);
  }
  TrainHooks hooks;
  hooks.out_dir = a.out;
  hooks.log = &std::cout;
  const bool run1 = a.stage == 0 || a.stage == 1;
  const bool run2 = a.stage == 2 || (a.stage == 0 && a.joint);
  if (run1) train_stage1(train, val, bundle, cfg.train, hooks);
  if (run2) {
    if (a.init.empty() && !run1) throw std::runtime_error("stage 2 needs a stage-1 checkpoint (--init)");
    train_stage2(train, val, bundle, cfg.train, hooks);
  }
  std::cout << "checkpoint: " << (fs::path(a.out) / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_eval(const std::string& model, const std::string& manifest, const std::string& report_path) {
  ModelBundle bundle = load_checkpoint(model);
  const DatasetManifest m = load_manifest(manifest);
  require_same_vocab(bundle.vocab, m.vocab, manifest);
  const CorpusReport report = evaluate_manifest(bundle, m);
  std::printf("AR %.6f  N %zu  Ns %zu  Ni %zu  Nd %zu  failures %zu\n", report.ar, report.total_chars,
              report.counts.substitutions, report.counts.insertions, report.counts.deletions,
              report.failures);
  if (!report.confusions.empty()) std::cout << "top confusions:\n" << format_confusions(report);
  if (!report_path.empty()) write_report_csv(report, report_path);
  return 0;
}

int cmd_infer(const std::string& model, const std::string& image) {
  ModelBundle bundle = load_checkpoint(model);
  std::cout << recognize(load_image(image), bundle) << '\n';
  return 0;
}

int cmd_viz(const std::string& model, const std::string& image, const std::string& out) {
  ModelBundle bundle = load_checkpoint(model);
  const GrayImage input = load_image(image);
  const auto maps = attention_heatmaps(input, bundle);
  fs::create_directories(out);
  for (std::size_t t = 0; t < maps.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof name, "block_%03zu.pgm", t);
    save_pgm(maps[t], fs::path(out) / name);
  }
  std::cout << "wrote " << maps.size() << " heatmaps (" << input.width << "x" << input.height << ") to "
            << out << '\n';
  return 0;
}

int cmd_selftest() {
  bool ok = true;
  double worst = 0.0;
  for (const auto& r : gradient_suite()) {
    std::printf("%-28s rel err %.3e  %s\n", r.name.c_str(), r.value, r.passed() ? "ok" : "FAIL");
    worst = std::max(worst, r.value);
    ok = ok && r.passed();
  }
  for (const auto& r : {ctc_oracle_suite(), ctc_total_probability()}) {
    std::printf("%-28s err %.3e  %s\n", r.name.c_str(), r.value, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  std::printf("max gradcheck error: %.3e\n", worst);
  return ok ? 0 : 1;
}

int cmd_prune(const std::string& model, const std::vector<int>& keep, const std::string& out) {
  ModelBundle bundle = load_checkpoint(model);
  prune_branches(bundle, keep);
  save_checkpoint(bundle, out);
  std::cout << "kept frame lengths:";
  for (int s : bundle.config.scales) std::cout << ' ' << s;
  std::cout << '\n';
  return 0;
}

int cmd_ablate(const std::string& config, const std::string& train_path, const std::string& val_path,
               const std::string& out) {
  const ExperimentConfig cfg = load_experiment_config(config);
  const DatasetManifest train_m = load_manifest(train_path);
  const DatasetManifest val_m = load_manifest(val_path);
  require_same_vocab(train_m.vocab, val_m.vocab, val_path);
  const auto height = static_cast<std::size_t>(cfg.model.backbone.input_height);
  const auto rows = run_ablation(load_samples(train_m, height), load_samples(val_m, height), cfg.model,
                                 cfg.train, train_m.vocab, &std::cout);
  const std::string table = format_ablation_table(rows);
  std::cout << table;
  if (!out.empty()) std::ofstream(out) << table;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Handwritten text line recognition with 3D attention and context"};
  app.require_subcommand(1);

  std::string config, out, model, manifest, report, image, train_path, val_path;
  TrainArgs ta;
  std::vector<int> keep;

  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  synth->add_option("--config", config, "Experiment config file");
  synth->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train (stage 1, then stage 2 with --joint)");
  train->add_option("--config", ta.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  train->add_option("--train", ta.train, "Training manifest")->required();
  train->add_option("--val", ta.val, "Validation manifest");
  train->add_option("--out", ta.out, "Output directory")->required();
  train->add_flag("--joint", ta.joint, "Continue with joint CTC + CE training");
  train->add_option("--init", ta.init, "Resume from a checkpoint");
  train->add_option("--stage", ta.stage, "Run only stage 1 or stage 2")->check(CLI::IsMember({1, 2}));
  train->add_option("--frame-length", ta.frame_lengths, "Frame lengths to train (repeatable)");

  auto* eval = app.add_subcommand("eval", "Corpus accuracy report");
  eval->add_option("--model", model, "Checkpoint")->required();
  eval->add_option("--manifest", manifest, "Dataset manifest")->required();
  eval->add_option("--report", report, "Per-sample CSV output");

  auto* infer = app.add_subcommand("infer", "Recognize one image");
  infer->add_option("--model", model, "Checkpoint")->required();
  infer->add_option("--image", image, "PGM or PNG image")->required();

  auto* viz = app.add_subcommand("viz", "Export 3D attention maps as PGM heatmaps");
  viz->add_option("--model", model, "Checkpoint")->required();
  viz->add_option("--image", image, "PGM or PNG image")->required();
  viz->add_option("--out", out, "Output directory")->required();

  auto* selftest = app.add_subcommand("selftest", "Gradient checks and the CTC oracle");

  auto* prune = app.add_subcommand("prune", "Keep only some frame-length branches");
  prune->add_option("--model", model, "Checkpoint")->required();
  prune->add_option("--keep", keep, "Frame lengths to keep")->required();
  prune->add_option("--out", out, "Output checkpoint")->required();

  auto* ablate = app.add_subcommand("ablate", "3D attention / context ablation table");
  ablate->add_option("--config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
  ablate->add_option("--train", train_path, "Training manifest")->required();
  ablate->add_option("--val", val_path, "Validation manifest")->required();
  ablate->add_option("--out", out, "Write the table here too");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(config, out);
    if (*train) return cmd_train(ta);
    if (*eval) return cmd_eval(model, manifest, report);
    if (*infer) return cmd_infer(model, image);
    if (*viz) return cmd_viz(model, image, out);
    if (*selftest) return cmd_selftest();
    if (*prune) return cmd_prune(model, keep, out);
    if (*ablate) return cmd_ablate(config, train_path, val_path, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
