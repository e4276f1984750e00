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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "htr/dataset.hpp"
#include "htr/model.hpp"

namespace htr {

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;

  std::size_t total() const { return substitutions + insertions + deletions; }
  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    return *this;
  }
  bool operator==(const EditCounts&) const = default;
};

enum class EditOp { match, substitute, insert, remove };

struct AlignmentStep {
  EditOp op;
  int ref = -1;  // position in the reference, -1 for insertions
  int hyp = -1;  // position in the hypothesis, -1 for deletions
};

// Unit-cost alignment. Among minimal alignments the one with the most
// substitutions wins, then deletions are preferred over insertions.
std::vector<AlignmentStep> align(std::span<const int> reference, std::span<const int> hypothesis);
EditCounts edit_distance(std::span<const int> reference, std::span<const int> hypothesis);
// Over Unicode scalar values of UTF-8 text.
EditCounts edit_distance(std::string_view reference, std::string_view hypothesis);

// 1 - (Ns + Ni + Nd) / N. Not clamped.
double accuracy_rate(long total_chars, const EditCounts& counts);

struct SampleResult {
  std::string id;
  std::string reference;
  std::string hypothesis;
  EditCounts counts;
  bool failed = false;
  std::string error;
};

struct CorpusReport {
  double ar = 0.0;
  std::size_t total_chars = 0;
  EditCounts counts;
  std::size_t failures = 0;
  std::vector<SampleResult> samples;
  // (reference char, hypothesis char) -> count over substitutions.
  std::map<std::pair<std::string, std::string>, std::size_t> confusions;
};

struct EvalItem {
  std::string id;
  std::string reference;
  std::filesystem::path image_path;  // used when `image` is empty
  GrayImage image;
};

CorpusReport evaluate_corpus(ModelBundle& bundle, const std::vector<EvalItem>& items);
CorpusReport evaluate_corpus(ModelBundle& bundle, const std::vector<Sample>& samples);
CorpusReport evaluate_manifest(ModelBundle& bundle, const DatasetManifest& manifest);
std::string recognize(const GrayImage& image, ModelBundle& bundle);

// One map per 3D block of the inference branch at the image's own size;
// each block's aggregation weights are spread over the columns it covers
// and scaled so the block peak is 1.
std::vector<GrayImage> attention_heatmaps(const GrayImage& image, ModelBundle& bundle);

// sample_id, reference, hypothesis, Ns, Ni, Nd
void write_report_csv(const CorpusReport& report, const std::filesystem::path& path);
std::string format_confusions(const CorpusReport& report, std::size_t limit = 10);

}  // namespace htr
