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
#include "htr/dataset.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace htr {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

}  // namespace

void DatasetManifest::validate() const {
  std::set<std::string> ids;
  for (const auto& e : entries) {
    if (e.id.empty()) throw std::invalid_argument("manifest entry with empty id");
    if (!ids.insert(e.id).second) throw std::invalid_argument("duplicate sample id '" + e.id + "'");
    try {
      vocab.encode(e.label);
    } catch (const std::invalid_argument& err) {
      throw std::invalid_argument("sample '" + e.id + "': " + err.what());
    }
  }
}

std::filesystem::path DatasetManifest::resolve(const ManifestEntry& entry) const {
  const std::filesystem::path p(entry.path);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string vocab_file = "vocab.txt";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string body = line.substr(line.find_first_not_of("# "));
      const auto eq = body.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = body.substr(0, eq), value = body.substr(eq + 1);
      if (key == "version") {
        m.version = std::stoi(value);
        if (m.version != 1) {
          throw std::runtime_error("unsupported manifest version " + value + " in " + path.string());
        }
      } else if (key == "split") {
        m.split = value;
      } else if (key == "vocab") {
        vocab_file = value;
      }
      continue;
    }
    const auto fields = split_tabs(line);
    if (fields.size() != 3) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected path<TAB>label<TAB>id");
    }
    m.entries.push_back({fields[0], fields[1], fields[2]});
  }
  m.vocab = Vocabulary::load(m.base_dir / vocab_file);
  m.validate();
  return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path,
                   const std::string& vocab_file) {
  manifest.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# version=" << manifest.version << "\n# split=" << manifest.split
      << "\n# vocab=" << vocab_file << '\n';
  for (const auto& e : manifest.entries) out << e.path << '\t' << e.label << '\t' << e.id << '\n';
  manifest.vocab.save(path.parent_path() / vocab_file);
}

std::vector<Sample> load_samples(const DatasetManifest& manifest, std::size_t height) {
  std::vector<Sample> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) {
    Sample s;
    s.id = e.id;
    s.text = e.label;
    s.label = manifest.vocab.encode(e.label);
    s.image = load_image(manifest.resolve(e), height);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Sample> to_samples(const std::vector<SampleRecord>& records, const Vocabulary& vocab) {
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r.id, r.label, vocab.encode(r.label), r.image});
  return out;
}

SynthOutput write_synth_dataset(const SynthConfig& config, const std::filesystem::path& dir) {
  const Vocabulary vocab = synth_vocabulary(config);
  std::filesystem::create_directories(dir / "images");
  SynthOutput result;
  auto emit = [&](const std::string& split, std::size_t count, DatasetManifest& m) {
    m.split = split;
    m.vocab = vocab;
    m.base_dir = dir;
    for (const auto& rec : synth_generate(config, count, split)) {
      const std::string rel = "images/" + rec.id + ".pgm";
      save_pgm(rec.image, dir / rel);
      m.entries.push_back({rel, rec.label, rec.id});
    }
    save_manifest(m, dir / (split + ".tsv"));
  };
  emit("train", config.num_samples, result.train);
  emit("val", config.num_val, result.val);
  return result;
}

}  // namespace htr
