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

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "htr/model.hpp"
#include "htr/synth.hpp"
#include "htr/trainer.hpp"

namespace htr {

struct ExperimentConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;

  bool operator==(const ExperimentConfig&) const = default;
};

// Ordered `key = value` pairs; blank lines and # comments are ignored.
std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                  const std::string& source = "config");

// Unknown keys and malformed values throw. The key `seed` sets both
// synth.seed and train.seed.
ExperimentConfig parse_experiment_config(std::string_view text);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Every field, in a stable order, round-trippable through the parser.
std::string format_experiment_config(const ExperimentConfig& config);

std::string format_model_config(const ModelConfig& config);
ModelConfig parse_model_config(std::string_view text);

}  // namespace htr
