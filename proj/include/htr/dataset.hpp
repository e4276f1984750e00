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
#include <vector>

#include "htr/ctc.hpp"
#include "htr/image.hpp"
#include "htr/synth.hpp"
#include "htr/vocabulary.hpp"

namespace htr {

struct ManifestEntry {
  std::string path;  // relative to the manifest's directory unless absolute
  std::string label;
  std::string id;
  bool operator==(const ManifestEntry&) const = default;
};

struct DatasetManifest {
  int version = 1;
  std::string split = "train";
  Vocabulary vocab;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  // Unique ids and every label encodable.
  void validate() const;
  std::filesystem::path resolve(const ManifestEntry& entry) const;
};

// TSV with "# version=", "# split=" and "# vocab=" header comments. The
// vocabulary file is resolved next to the manifest.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const std::string& vocab_file = "vocab.txt");

struct Sample {
  std::string id;
  std::string text;
  LabelSequence label;
  GrayImage image;
};

std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t height);
std::vector<Sample> to_samples(const std::vector<SampleRecord>& records, const Vocabulary& vocab);

struct SynthOutput {
  DatasetManifest train;
  DatasetManifest val;
};

// Writes images/, train.tsv, val.tsv and vocab.txt under `dir`.
SynthOutput write_synth_dataset(const SynthConfig& config, const std::filesystem::path& dir);

}  // namespace htr
