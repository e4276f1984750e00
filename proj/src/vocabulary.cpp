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
#include "htr/vocabulary.hpp"

#include <fstream>
#include <stdexcept>

#include "htr/utf8.hpp"

namespace htr {

Vocabulary::Vocabulary() : symbols_{std::string(kBlankSymbol)} {}

Vocabulary::Vocabulary(const std::vector<std::string>& symbols) : Vocabulary() {
  for (const std::string& s : symbols) {
    if (decode_utf8(s).size() != 1) {
      throw std::invalid_argument("vocabulary symbol '" + s + "' is not a single character");
    }
    if (!index_.emplace(s, static_cast<int>(symbols_.size())).second) {
      throw std::invalid_argument("duplicate vocabulary symbol '" + s + "'");
    }
    symbols_.push_back(s);
  }
}

const std::string& Vocabulary::symbol(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= symbols_.size()) {
    throw std::out_of_range("class id " + std::to_string(id) + " outside vocabulary");
  }
  return symbols_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(std::string_view symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) {
    throw std::invalid_argument("symbol '" + std::string(symbol) + "' not in vocabulary");
  }
  return it->second;
}

bool Vocabulary::contains(std::string_view symbol) const { return index_.find(symbol) != index_.end(); }

LabelSequence Vocabulary::encode(std::string_view text) const {
  LabelSequence ids;
  for (const std::string& ch : split_utf8(text)) ids.push_back(id(ch));
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kBlank) continue;
    out += symbol(id);
  }
  return out;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kBlankSymbol) {
    throw std::runtime_error("vocabulary file " + path.string() + " must start with " +
                             std::string(kBlankSymbol));
  }
  std::vector<std::string> symbols;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    symbols.push_back(line);
  }
  return Vocabulary(symbols);
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
  for (const std::string& s : symbols_) out << s << '\n';
}

}  // namespace htr
