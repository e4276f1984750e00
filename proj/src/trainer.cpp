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
#include "htr/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "htr/autodiff.hpp"
#include "htr/checkpoint.hpp"
#include "htr/eval.hpp"

namespace htr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> branch_weights(const TrainConfig& config, std::size_t branches) {
  std::vector<double> w = config.scale_weights;
  if (w.empty()) w.assign(branches, 1.0);
  if (w.size() != branches) {
    throw std::invalid_argument("train: " + std::to_string(w.size()) + " scale weights for " +
                                std::to_string(branches) + " branches");
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<double>& weights) {
  Tensor acc = ad::scale(terms[0], weights[0]);
  for (std::size_t i = 1; i < terms.size(); ++i) acc = acc + ad::scale(terms[i], weights[i]);
  return acc;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix_seed(seed, 0x73687566ULL, epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<EpochMetrics> run_stage(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                    ModelBundle& bundle, const TrainConfig& config, int stage,
                                    std::size_t epochs, const TrainHooks& hooks) {
  config.validate();
  if (epochs < 1) throw std::invalid_argument("train: stage " + std::to_string(stage) + " needs at least one epoch");
  if (train.empty()) throw std::invalid_argument("train: training set is empty");
  const bool joint = stage == 2;
  const auto h = static_cast<std::size_t>(bundle.config.backbone.input_height);
  ParamFilter select;
  if (!joint) select = [](const std::string& name) { return !name.starts_with("decoder."); };

  std::vector<GrayImage> images;
  std::vector<bool> feasible;
  std::size_t infeasible = 0;
  for (const auto& s : train) {
    images.push_back(resize_to_height(s.image, h));
    feasible.push_back(sample_feasible(images.back(), s.label, bundle));
    infeasible += !feasible.back();
  }
  if (infeasible > 0 && hooks.log) {
    *hooks.log << "warning: skipping " << infeasible << " of " << train.size()
               << " samples whose labels do not fit every branch\n";
  }
  if (infeasible == train.size()) throw std::invalid_argument("train: no feasible training samples");

  std::vector<EpochMetrics> history;
  for (std::size_t k = 0; k < epochs; ++k) {
    EpochMetrics m;
    m.epoch = bundle.epochs_completed + 1;
    m.stage = stage;
    m.lr = learning_rate(config, m.epoch);
    m.skipped = infeasible;
    double sum_ctc = 0, sum_ce = 0;
    std::size_t seen = 0;

    const auto order = epoch_order(train.size(), config.seed, m.epoch);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      std::vector<std::size_t> batch;
      for (std::size_t i = start; i < stop; ++i) {
        if (feasible[order[i]]) batch.push_back(order[i]);
      }
      if (batch.empty()) continue;
      bundle.params.zero_grad();
      for (std::size_t idx : batch) {
        const GrayImage img = config.augment
                                  ? augment(images[idx], mix_seed(config.seed, m.epoch, idx))
                                  : images[idx];
        ad::Tape tape;
        LossTerms terms = sample_losses(image_to_tensor(img), train[idx].label, bundle, config, joint);
        Tensor loss = ad::scale(terms.ctc, config.lambda1);
        if (joint) loss = loss + ad::scale(terms.ce, config.lambda2);
        loss = ad::scale(loss, 1.0 / static_cast<double>(batch.size()));
        tape.backward(loss);
        sum_ctc += terms.ctc.item();
        if (joint) sum_ce += terms.ce.item();
        ++seen;
      }
      adam_step(bundle.params, bundle.adam, m.lr, config.adam, select);
    }
    bundle.params.zero_grad();
    bundle.epochs_completed = m.epoch;
    m.loss_ctc = sum_ctc / static_cast<double>(seen);
    m.loss_ce = joint ? sum_ce / static_cast<double>(seen) : kNaN;
    m.val_ar = val.empty() ? kNaN : evaluate_corpus(bundle, val).ar;
    history.push_back(m);

    if (hooks.log) {
      *hooks.log << "epoch " << m.epoch << " stage " << stage << " lr " << m.lr << " ctc " << m.loss_ctc;
      if (joint) *hooks.log << " ce " << m.loss_ce;
      if (!val.empty()) *hooks.log << " val_ar " << m.val_ar;
      *hooks.log << '\n';
    }
    if (!hooks.out_dir.empty()) {
      std::filesystem::create_directories(hooks.out_dir);
      append_metrics(hooks.out_dir / "metrics.csv", m);
      save_checkpoint(bundle, hooks.out_dir / "model.ckpt");
    }
    if (hooks.on_epoch && !hooks.on_epoch(m, bundle)) break;
  }
  return history;
}

}  // namespace

void TrainConfig::validate() const {
  if (lr <= 0) throw std::invalid_argument("train: learning rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("train: batch size must be at least 1");
  if (lambda1 < 0 || lambda2 < 0) throw std::invalid_argument("train: loss weights must be non-negative");
  for (double w : scale_weights) {
    if (!(w > 0)) throw std::invalid_argument("train: scale weights must be positive");
  }
}

double learning_rate(const TrainConfig& config, std::size_t epoch) {
  double lr = config.lr;
  for (int h : config.halve_epochs) {
    if (h >= 0 && epoch > static_cast<std::size_t>(h)) lr *= 0.5;
  }
  return lr;
}

bool sample_feasible(const GrayImage& image, std::span<const int> label, const ModelBundle& bundle) {
  if (label.empty()) return false;
  std::size_t width = 0;
  try {
    width = backbone_output_width(bundle.config.backbone, image.width);
  } catch (const std::invalid_argument&) {
    return false;
  }
  for (int s : bundle.config.scales) {
    if (!ctc_feasible(block_count(width, static_cast<std::size_t>(s)), label)) return false;
  }
  return true;
}

LossTerms sample_losses(const Tensor& image, std::span<const int> label, ModelBundle& bundle,
                        const TrainConfig& config, bool joint, Mode mode) {
  TrainForward fwd = forward_train(image, bundle, mode);
  const auto weights = branch_weights(config, fwd.branches.size());
  std::vector<Tensor> ctc, ce;
  for (const auto& b : fwd.branches) {
    ctc.push_back(ctc_loss(b.logits, label));
    if (joint) {
      const DecoderParams dec = decoder_params(bundle.params, decoder_prefix(bundle.config, b.scale));
      ce.push_back(ce_loss(b.features.matrix(), label, dec));
    }
  }
  LossTerms out;
  out.ctc = weighted_sum(ctc, weights);
  if (joint) out.ce = weighted_sum(ce, weights);
  return out;
}

std::vector<EpochMetrics> train_stage1(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                       ModelBundle& bundle, const TrainConfig& config,
                                       const TrainHooks& hooks) {
  return run_stage(train, val, bundle, config, 1, config.stage1_epochs, hooks);
}

std::vector<EpochMetrics> train_stage2(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                       ModelBundle& bundle, const TrainConfig& config,
                                       const TrainHooks& hooks) {
  init_decoders(bundle, config.seed);
  return run_stage(train, val, bundle, config, 2, config.stage2_epochs, hooks);
}

void append_metrics(const std::filesystem::path& path, const EpochMetrics& m) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios::app);
  if (!out) throw std::runtime_error("cannot write metrics " + path.string());
  if (fresh) out << "epoch,stage,loss_ctc,loss_ce,val_ar\n";
  out << m.epoch << ',' << m.stage << ',' << fmt(m.loss_ctc) << ',' << fmt(m.loss_ce) << ','
      << fmt(m.val_ar) << '\n';
}

}  // namespace htr
