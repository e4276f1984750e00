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
#include "htr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "htr/config.hpp"

namespace htr {

namespace {

class Writer {
 public:
  void u32(std::uint32_t v) { uint(v, 4); }
  void u64(std::uint64_t v) { uint(v, 8); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u64(s.size());
    out_ += s;
  }
  void raw(const char* p, std::size_t n) { out_.append(p, n); }
  void tensor(const Tensor& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) u64(d);
    for (double v : t.values()) f64(v);
  }
  void doubles(const std::vector<double>& xs) {
    u64(xs.size());
    for (double v : xs) f64(v);
  }
  std::string take() { return std::move(out_); }

 private:
  void uint(std::uint64_t v, int bytes) {
    for (int i = 0; i < bytes; ++i) out_ += static_cast<char>((v >> (8 * i)) & 0xff);
  }
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::uint64_t u64() { return uint(8); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const std::uint64_t n = u64();
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void raw(char* p, std::size_t n) {
    need(n);
    std::memcpy(p, bytes_.data() + pos_, n);
    pos_ += n;
  }
  Tensor tensor() {
    const std::uint32_t rank = u32();
    if (rank > 8) throw std::runtime_error("checkpoint: corrupt tensor rank");
    ad::Shape shape(rank);
    for (auto& d : shape) d = u64();
    const std::size_t n = ad::shape_numel(shape);
    need(n * 8);
    std::vector<double> data(n);
    for (double& v : data) v = f64();
    return Tensor(std::move(shape), std::move(data));
  }
  std::vector<double> doubles() {
    const std::uint64_t n = u64();
    need(n * 8);
    std::vector<double> xs(n);
    for (double& v : xs) v = f64();
    return xs;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw std::runtime_error("checkpoint: truncated file");
  }
  std::uint64_t uint(int bytes) {
    need(static_cast<std::uint64_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
    }
    return v;
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_bundle(const ModelBundle& bundle) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(kCheckpointVersion);
  const auto& symbols = bundle.vocab.symbols();
  w.u64(symbols.size() - 1);
  for (std::size_t i = 1; i < symbols.size(); ++i) w.str(symbols[i]);
  w.str(format_model_config(bundle.config));
  w.u64(bundle.epochs_completed);

  w.u64(bundle.params.size());
  for (const auto& [name, t] : bundle.params) {
    w.str(name);
    w.tensor(t);
  }
  w.u64(bundle.buffers.size());
  for (const auto& [name, t] : bundle.buffers) {
    w.str(name);
    w.tensor(t);
  }
  w.u64(bundle.adam.step);
  w.u64(bundle.adam.moments.size());
  for (const auto& [name, m] : bundle.adam.moments) {
    w.str(name);
    w.u64(m.step);
    w.doubles(m.m);
    w.doubles(m.v);
  }
  return w.take();
}

ModelBundle deserialize_bundle(const std::string& bytes) {
  Reader r(bytes);
  char magic[sizeof kCheckpointMagic];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw std::runtime_error("not a model checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  }
  ModelBundle b;
  std::vector<std::string> symbols(r.u64());
  for (auto& s : symbols) s = r.str();
  b.vocab = Vocabulary(symbols);
  b.config = parse_model_config(r.str());
  b.epochs_completed = r.u64();

  const std::uint64_t n_params = r.u64();
  for (std::uint64_t i = 0; i < n_params; ++i) {
    std::string name = r.str();
    b.params.add(name, r.tensor());
  }
  const std::uint64_t n_buffers = r.u64();
  for (std::uint64_t i = 0; i < n_buffers; ++i) {
    std::string name = r.str();
    b.buffers[name] = r.tensor();
  }
  b.adam.step = r.u64();
  const std::uint64_t n_moments = r.u64();
  for (std::uint64_t i = 0; i < n_moments; ++i) {
    std::string name = r.str();
    AdamMoments m;
    m.step = r.u64();
    m.m = r.doubles();
    m.v = r.doubles();
    b.adam.moments[name] = std::move(m);
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes");
  for (int s : b.config.scales) {
    if (!b.has_branch(s)) {
      throw std::runtime_error("checkpoint: missing parameters for frame length " + std::to_string(s));
    }
  }
  const std::string cls = branch_prefix(b.config.scales.empty() ? 0 : b.config.scales.front()) + "cls.b";
  if (b.params.contains(cls) && b.params.at(cls).size() != b.vocab.classes()) {
    throw std::runtime_error("checkpoint: classifier width does not match the vocabulary");
  }
  return b;
}

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  const std::string bytes = serialize_bundle(bundle);
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return deserialize_bundle(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

}  // namespace htr
