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
#include <vector>

#include "htr/ctc.hpp"

namespace htr {

// Symbol table with the CTC blank reserved at index 0. Symbols are single
// Unicode scalar values stored as UTF-8.
class Vocabulary {
 public:
  static constexpr std::string_view kBlankSymbol = "<blank>";

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& symbols);

  // Including the blank.
  std::size_t classes() const { return symbols_.size(); }
  std::size_t symbol_count() const { return symbols_.size() - 1; }
  const std::vector<std::string>& symbols() const { return symbols_; }
  const std::string& symbol(int id) const;
  int id(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;

  LabelSequence encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;

  // One symbol per line; line 0 is the blank marker.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  bool operator==(const Vocabulary& other) const { return symbols_ == other.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::map<std::string, int, std::less<>> index_;
};

}  // namespace htr
