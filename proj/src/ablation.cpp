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
#include "htr/ablation.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "htr/eval.hpp"

namespace htr {

std::vector<AblationRow> run_ablation(const std::vector<Sample>& train, const std::vector<Sample>& val,
                                      const ModelConfig& base, const TrainConfig& config,
                                      const Vocabulary& vocab, std::ostream* log) {
  if (val.empty()) throw std::invalid_argument("ablation: validation split is empty");
  std::vector<AblationRow> rows;
  for (bool attention : {true, false}) {
    for (bool context : {true, false}) {
      ModelConfig mc = base;
      mc.scales = {base.infer_scale};
      mc.use_3d_attention = attention;
      mc.use_context = context;
      if (log) {
        *log << "ablation: 3d attention " << (attention ? "on" : "off") << ", context "
             << (context ? "on" : "off") << '\n';
      }
      ModelBundle bundle = create_bundle(mc, vocab, config.seed);
      TrainHooks hooks;
      hooks.log = log;
      const auto history = train_stage1(train, {}, bundle, config, hooks);
      AblationRow row;
      row.attention3d = attention;
      row.context = context;
      row.final_loss = history.back().loss_ctc;
      row.ar = evaluate_corpus(bundle, val).ar;
      row.parameters = bundle.params.scalar_count();
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "| 3D attention | Global-local context | AR (val) | final CTC loss | parameters |\n"
                    "|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "| %s | %s | %.4f | %.4f | %zu |\n", r.attention3d ? "yes" : "no",
                  r.context ? "yes" : "no", r.ar, r.final_loss, r.parameters);
    out += buf;
  }
  return out;
}

}  // namespace htr
