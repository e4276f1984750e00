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
#include <iosfwd>
#include <string>
#include <vector>

#include "htr/dataset.hpp"
#include "htr/model.hpp"
#include "htr/trainer.hpp"

namespace htr {

struct AblationRow {
  bool attention3d = true;
  bool context = true;
  double ar = 0.0;          // on the validation split
  double final_loss = 0.0;  // last-epoch mean CTC loss
  std::size_t parameters = 0;
};

// Trains the four on/off combinations of 3D attention and context with a
// single frame length (the inference one) and stage 1 only.
std::vector<AblationRow> run_ablation(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                      const ModelConfig& base, const TrainConfig& config,
                                      const Vocabulary& vocab, std::ostream* log = nullptr);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace htr
