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
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "htr/adam.hpp"
#include "htr/augment.hpp"
#include "htr/dataset.hpp"
#include "htr/model.hpp"

namespace htr {

struct TrainConfig {
  double lambda1 = 1.0;  // CTC weight
  double lambda2 = 1.0;  // CE weight
  double lr = 1e-3;
  std::vector<int> halve_epochs;  // lr *= 0.5 after each listed epoch
  AdamOptions adam;
  std::size_t stage1_epochs = 60;
  std::size_t stage2_epochs = 30;
  std::size_t batch_size = 8;
  bool augment = true;
  std::vector<double> scale_weights;  // empty: plain mean over branches
  std::uint64_t seed = 42;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

// Learning rate for 1-based global epoch `epoch`.
double learning_rate(const TrainConfig& config, std::size_t epoch);

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based, counted across stages
  int stage = 1;
  double loss_ctc = 0.0;
  double loss_ce = 0.0;   // NaN in stage 1
  double val_ar = 0.0;    // NaN without a validation set
  double lr = 0.0;
  std::size_t skipped = 0;
};

struct TrainHooks {
  std::filesystem::path out_dir;  // metrics.csv and model.ckpt; empty disables
  std::ostream* log = nullptr;
  // Called after every epoch; returning false stops the stage.
  std::function<bool(const EpochMetrics&, ModelBundle&)> on_epoch;
};

struct LossTerms {
  Tensor ctc;  // weighted mean over branches
  Tensor ce;   // undefined unless joint
};

// Per-sample losses; gradients flow when a tape is active.
LossTerms sample_losses(const Tensor& image, std::span<const int> label, ModelBundle& bundle,
                        const TrainConfig& config, bool joint, Mode mode = Mode::train);

// True when the label fits the frame count of every branch.
bool sample_feasible(const GrayImage& image, std::span<const int> label, const ModelBundle& bundle);

std::vector<EpochMetrics> train_stage1(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                       ModelBundle& bundle, const TrainConfig& config,
                                       const TrainHooks& hooks = {});
// Adds decoders when missing, then optimizes lambda1 * CTC + lambda2 * CE.
std::vector<EpochMetrics> train_stage2(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                       ModelBundle& bundle, const TrainConfig& config,
                                       const TrainHooks& hooks = {});

void append_metrics(const std::filesystem::path& path, const EpochMetrics& metrics);

}  // namespace htr
