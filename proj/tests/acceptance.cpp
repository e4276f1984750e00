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
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "htr/ablation.hpp"
#include "htr/checkpoint.hpp"
#include "htr/config.hpp"
#include "htr/eval.hpp"
#include "htr/selftest.hpp"
#include "htr/synth.hpp"
#include "htr/trainer.hpp"
#include "oracles.hpp"

using namespace htr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  if (!o.pass) ++failures;
  std::cout << (o.pass ? "PASS " : "FAIL ") << name << ": " << o.detail << std::endl;
}

struct CommandResult {
  int status = -1;
  std::string output;
};

CommandResult run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + HTR_CLI_PATH + "\" " + args + " 2>&1";
  std::unique_ptr<FILE, int (*)(FILE*)> pipe(popen(cmd.c_str(), "r"), pclose);
  if (!pipe) throw std::runtime_error("cannot run " + cmd);
  std::string out;
  std::array<char, 512> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe.get())) out += buf.data();
  const int raw = pclose(pipe.release());
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, out};
}

void must(const CommandResult& r, const std::string& what) {
  if (r.status != 0) throw std::runtime_error(what + " failed:\n" + r.output);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string quote(const fs::path& p) { return "\"" + p.string() + "\""; }

ExperimentConfig acceptance_config() {
  return load_experiment_config(fs::path(HTR_SOURCE_DIR) / "configs" / "acceptance.cfg");
}

struct Corpus {
  Vocabulary vocab;
  std::vector<Sample> train, val;
};

Corpus make_corpus(const SynthConfig& s) {
  Corpus c;
  c.vocab = synth_vocabulary(s);
  c.train = to_samples(synth_generate(s, s.num_samples, "train"), c.vocab);
  c.val = to_samples(synth_generate(s, s.num_val, "val"), c.vocab);
  return c;
}

Outcome ctc_oracle() {
  const auto start = Clock::now();
  Rng rng(20261015);
  double worst_lib = 0, worst_oracle = 0;
  std::size_t cases = 0;
  while (cases < 1000) {
    const std::size_t t = 1 + rng.below(6), k = 2 + rng.below(3), n = rng.below(4);
    LabelSequence label;
    for (std::size_t i = 0; i < n; ++i) label.push_back(1 + static_cast<int>(rng.below(k - 1)));
    if (!ctc_feasible(t, label)) continue;
    Tensor logits({t, k});
    for (double& v : logits.mutable_values()) v = rng.uniform(-3, 3);
    const double fast = ctc_loss(logits, label).item();
    const double brute = brute_force_ctc(logits.values(), t, k, label);
    const double ref = oracle::ctc_nll({logits.values().begin(), logits.values().end()}, t, k, label);
    worst_lib = std::max(worst_lib, std::abs(fast - brute) / std::max(std::abs(brute), 1e-300));
    worst_oracle = std::max(worst_oracle, std::abs(fast - ref) / std::max(std::abs(ref), 1e-300));
    ++cases;
  }
  const double secs = seconds_since(start);
  return {worst_lib < 1e-10 && worst_oracle < 1e-10 && secs < 30,
          "1000 cases, max rel err vs brute_force_ctc " + fmt("%.3g", worst_lib) + ", vs independent oracle " +
              fmt("%.3g", worst_oracle) + " (< 1e-10), " + fmt("%.2f", secs) + " s (< 30 s)"};
}

Outcome total_probability() {
  Rng rng(77);
  double worst = 0;
  int draws = 0;
  for (std::size_t frames = 1; frames <= 4; ++frames) {
    for (std::size_t classes = 2; classes <= 3; ++classes) {
      for (int rep = 0; rep < 5; ++rep, ++draws) {
        std::vector<double> logits(frames * classes);
        for (double& v : logits) v = rng.uniform(-3, 3);
        std::vector<LabelSequence> labels = {{}};
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (labels[i].size() == frames) continue;
          for (int c = 1; c < static_cast<int>(classes); ++c) {
            LabelSequence l = labels[i];
            l.push_back(c);
            labels.push_back(l);
          }
        }
        double total = 0;
        for (const auto& l : labels) {
          const double nll = brute_force_ctc(logits, frames, classes, l);
          if (std::isfinite(nll)) total += std::exp(-nll);
        }
        worst = std::max(worst, std::abs(total - 1.0));
      }
    }
  }
  return {worst <= 1e-9, std::to_string(draws) + " logit draws over T<=4, K<=3, max |sum - 1| = " +
                             fmt("%.3g", worst) + " (<= 1e-9)"};
}

Outcome gradient_integrity() {
  const auto start = Clock::now();
  const auto results = gradient_suite(7, 1e-4);
  const double secs = seconds_since(start);
  bool ok = results.size() == 5 && secs < 120;
  std::string detail;
  for (const auto& r : results) {
    ok = ok && r.passed();
    detail += r.name + " " + fmt("%.3g", r.value) + "; ";
  }
  return {ok, detail + "threshold 1e-4, " + fmt("%.2f", secs) + " s (< 120 s)"};
}

Outcome positional_exactness() {
  double worst = 0;
  for (std::size_t c : {2u, 4u, 16u, 32u, 64u, 128u, 256u}) {
    PositionalTable table(c);
    for (std::size_t p = 0; p < 512; ++p) {
      for (std::size_t j = 0; j < c / 2; ++j) {
        worst = std::max(worst, std::abs(table.at(p, j) - oracle::positional(p, j, c)));
      }
    }
  }
  return {worst <= 1e-12, "p < 512, C in {2..256}, max abs err " + fmt("%.3g", worst) + " (<= 1e-12)"};
}

Outcome overfit() {
  ExperimentConfig cfg = acceptance_config();
  cfg.train.augment = false;
  cfg.train.stage1_epochs = 60;
  const Corpus corpus = make_corpus(cfg.synth);
  ModelBundle bundle = create_bundle(cfg.model, corpus.vocab, cfg.train.seed);
  double ar = 0;
  std::size_t reached = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochMetrics& m, ModelBundle& b) {
    ar = evaluate_corpus(b, corpus.train).ar;
    if (ar >= 0.99 && reached == 0) reached = m.epoch;
    return reached == 0;
  };
  const auto start = Clock::now();
  const auto history = train_stage1(corpus.train, {}, bundle, cfg.train, hooks);
  const double secs = seconds_since(start);
  return {reached > 0 && reached <= 60 && secs < 600,
          "32 lines, K=5, 2-6 chars, seed 42: corpus AR " + fmt("%.4f", ar) + " (>= 0.99) after " +
              std::to_string(history.size()) + " epochs (<= 60), " + fmt("%.1f", secs) + " s (< 600 s), " +
              std::to_string(history.back().skipped) + " infeasible lines skipped"};
}

Outcome joint_direction() {
  const ExperimentConfig base = acceptance_config();
  const Corpus corpus = make_corpus(base.synth);
  std::string detail;
  int per_seed = 0;
  double sum_ctc = 0, sum_joint = 0;
  for (std::uint64_t seed : {42u, 43u, 44u}) {
    TrainConfig tc = base.train;
    tc.seed = seed;
    ModelBundle warm = create_bundle(base.model, corpus.vocab, seed);
    train_stage1(corpus.train, {}, warm, tc);
    const std::string snapshot = serialize_bundle(warm);

    TrainConfig more = tc;
    more.stage1_epochs = tc.stage2_epochs;
    ModelBundle ctc_only = deserialize_bundle(snapshot);
    train_stage1(corpus.train, {}, ctc_only, more);
    ModelBundle joint = deserialize_bundle(snapshot);
    train_stage2(corpus.train, {}, joint, tc);

    const double a = evaluate_corpus(ctc_only, corpus.val).ar;
    const double b = evaluate_corpus(joint, corpus.val).ar;
    sum_ctc += a;
    sum_joint += b;
    per_seed += b >= a - 0.01;
    detail += "seed " + std::to_string(seed) + ": CTC " + fmt("%.4f", a) + ", CTC+CE " + fmt("%.4f", b) + "; ";
  }
  const double mean_ctc = sum_ctc / 3, mean_joint = sum_joint / 3;
  return {mean_joint >= mean_ctc - 0.01,
          detail + "mean CTC " + fmt("%.4f", mean_ctc) + ", mean CTC+CE " + fmt("%.4f", mean_joint) +
              " (mean CTC+CE >= mean CTC - 0.01 over 3 seeds, 16-line val split; per-seed holds on " +
              std::to_string(per_seed) + "/3)"};
}

Outcome multiscale(const fs::path& work) {
  ExperimentConfig cfg = acceptance_config();
  cfg.train.stage1_epochs = 3;
  const fs::path data = work / "data", cfg_path = work / "short.cfg", run = work / "multiscale";
  {
    std::ofstream out(cfg_path);
    out << format_experiment_config(cfg);
  }
  must(run_cli("synth --config " + quote(cfg_path) + " --out " + quote(data)), "synth");
  must(run_cli("train --config " + quote(cfg_path) + " --train " + quote(data / "train.tsv") + " --out " + quote(run)),
       "train");
  must(run_cli("prune --model " + quote(run / "model.ckpt") + " --keep 3 --out " + quote(run / "pruned.ckpt")),
       "prune");

  const DatasetManifest val = load_manifest(data / "val.tsv");
  std::size_t same_text = 0;
  for (const auto& e : val.entries) {
    const auto a = run_cli("infer --model " + quote(run / "model.ckpt") + " --image " + quote(val.resolve(e)));
    const auto b = run_cli("infer --model " + quote(run / "pruned.ckpt") + " --image " + quote(val.resolve(e)));
    same_text += a.status == 0 && b.status == 0 && a.output == b.output;
  }
  ModelBundle full = load_checkpoint(run / "model.ckpt"), pruned = load_checkpoint(run / "pruned.ckpt");
  const bool branches_gone = pruned.config.scales == std::vector<int>{3} && !pruned.has_branch(2) &&
                             !pruned.has_branch(4) && full.has_branch(2) && full.has_branch(4);
  std::size_t same_logits = 0;
  const auto height = static_cast<std::size_t>(cfg.model.backbone.input_height);
  for (const auto& e : val.entries) {
    const Tensor img = image_to_tensor(load_image(val.resolve(e), height));
    const Tensor x = infer_logits(img, full), y = infer_logits(img, pruned);
    bool eq = x.shape() == y.shape();
    for (std::size_t i = 0; eq && i < x.size(); ++i) eq = x[i] == y[i];
    same_logits += eq;
  }

  std::size_t widths = 0, length_errors = 0;
  ModelBundle fresh = create_bundle(cfg.model, full.vocab, 1);
  for (std::size_t w = 12; w <= 260; w += 4) {
    const TrainForward fwd = forward_train(Tensor({1, w, height}, 0.5), fresh, Mode::eval);
    const std::size_t fw = fwd.volume.data.dim(1);
    length_errors += fw != (w / 2) / 2;
    for (const auto& b : fwd.branches) {
      const auto s = static_cast<std::size_t>(b.scale);
      length_errors += b.logits.dim(0) != (fw + s - 1) / s;
    }
    ++widths;
  }
  const std::size_t n = val.entries.size();
  return {branches_gone && same_text == n && same_logits == n && length_errors == 0,
          "infer text identical on " + std::to_string(same_text) + "/" + std::to_string(n) +
              " lines, logits bit-identical on " + std::to_string(same_logits) + "/" + std::to_string(n) +
              ", sequence length = ceil(W/S) for " + std::to_string(widths) + " widths x 3 scales (" +
              std::to_string(length_errors) + " mismatches)"};
}

Outcome ablation() {
  ExperimentConfig cfg = acceptance_config();
  cfg.train.stage1_epochs = 20;
  const Corpus corpus = make_corpus(cfg.synth);
  const auto start = Clock::now();
  const auto rows = run_ablation(corpus.train, corpus.val, cfg.model, cfg.train, corpus.vocab);
  const double secs = seconds_since(start);
  std::cout << format_ablation_table(rows);
  bool ok = rows.size() == 4;
  for (const auto& r : rows) ok = ok && std::isfinite(r.final_loss) && std::isfinite(r.ar);
  return {ok, "4 configurations trained for 20 epochs and reported (table above), " + fmt("%.1f", secs) +
                  " s; no accuracy target"};
}

Outcome metric_correctness() {
  std::vector<std::vector<int>> strings = {{}};
  for (std::size_t i = 0; i < strings.size(); ++i) {
    if (strings[i].size() == 5) continue;
    for (int c = 0; c < 3; ++c) {
      auto s = strings[i];
      s.push_back(c);
      strings.push_back(s);
    }
  }
  std::size_t pairs = 0, mismatches = 0;
  for (const auto& a : strings) {
    for (const auto& b : strings) {
      const EditCounts got = edit_distance(a, b);
      const oracle::Counts want = oracle::best_alignment(a, b);
      mismatches += got.substitutions != static_cast<std::size_t>(want.subs) ||
                    got.insertions != static_cast<std::size_t>(want.ins) ||
                    got.deletions != static_cast<std::size_t>(want.dels);
      ++pairs;
    }
  }
  struct ArCase {
    long n;
    EditCounts counts;
    double want;
  };
  const ArCase ar_cases[] = {{100, {3, 2, 1}, 0.94}, {10, {0, 0, 0}, 1.0}, {2, {1, 2, 0}, -0.5}, {7, {7, 0, 0}, 0.0}};
  bool ar_ok = true;
  for (const auto& c : ar_cases) {
    const double expect = 1.0 - static_cast<double>(c.counts.total()) / static_cast<double>(c.n);
    ar_ok = ar_ok && accuracy_rate(c.n, c.counts) == expect && std::abs(expect - c.want) < 1e-15;
  }
  bool throws = false;
  try {
    accuracy_rate(0, {});
  } catch (const std::invalid_argument&) {
    throws = true;
  }
  return {mismatches == 0 && ar_ok && throws,
          std::to_string(pairs) + " string pairs (length <= 5, 3 symbols), " + std::to_string(mismatches) +
              " mismatches vs exhaustive alignment; accuracy_rate arithmetic " + (ar_ok ? "exact" : "WRONG") +
              ", N <= 0 " + (throws ? "rejected" : "accepted")};
}

Outcome determinism(const fs::path& work) {
  ExperimentConfig cfg = acceptance_config();
  cfg.train.stage1_epochs = 3;
  cfg.train.stage2_epochs = 2;
  const fs::path data = work / "det_data", cfg_path = work / "det.cfg";
  {
    std::ofstream out(cfg_path);
    out << format_experiment_config(cfg);
  }
  must(run_cli("synth --config " + quote(cfg_path) + " --out " + quote(data)), "synth");
  for (const char* name : {"run_a", "run_b"}) {
    must(run_cli("train --config " + quote(cfg_path) + " --train " + quote(data / "train.tsv") + " --val " +
                 quote(data / "val.tsv") + " --joint --out " + quote(work / name)),
         "train");
  }
  const std::string ca = slurp(work / "run_a" / "model.ckpt"), cb = slurp(work / "run_b" / "model.ckpt");
  const std::string ma = slurp(work / "run_a" / "metrics.csv"), mb = slurp(work / "run_b" / "metrics.csv");
  return {ca == cb && ma == mb && !ca.empty(),
          "two joint train runs (3 + 2 epochs, augmentation on): checkpoints " +
              std::string(ca == cb ? "identical" : "DIFFER") + " (" + std::to_string(ca.size()) +
              " bytes), metrics.csv " + (ma == mb ? "identical" : "DIFFER")};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "htr_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  report("ctc_oracle_equivalence", ctc_oracle);
  report("total_probability", total_probability);
  report("gradient_integrity", gradient_integrity);
  report("positional_encoding_exactness", positional_exactness);
  report("overfit_milestone", overfit);
  report("joint_training_direction", joint_direction);
  report("multiscale_parity_isolation", [&] { return multiscale(work); });
  report("ablation_harness", ablation);
  report("metric_correctness", metric_correctness);
  report("determinism", [&] { return determinism(work); });

  fs::remove_all(work);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
