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
#include "htr/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace htr {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += fmt_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

struct Codec {
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

std::size_t parse_size(const std::string& v) {
  std::size_t pos = 0;
  if (v.empty() || v[0] == '-') throw std::invalid_argument("expected a non-negative integer");
  const unsigned long long x = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("expected a non-negative integer");
  return static_cast<std::size_t>(x);
}

int parse_int(const std::string& v) {
  std::size_t pos = 0;
  const int x = std::stoi(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("expected an integer");
  return x;
}

double parse_double(const std::string& v) {
  std::size_t pos = 0;
  const double x = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("expected a number");
  return x;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw std::invalid_argument("expected true or false");
}

Codec size_field(std::size_t& f) {
  return {[&f] { return std::to_string(f); }, [&f](const std::string& v) { f = parse_size(v); }};
}
Codec u64_field(std::uint64_t& f) {
  return {[&f] { return std::to_string(f); }, [&f](const std::string& v) { f = parse_size(v); }};
}
Codec int_field(int& f) {
  return {[&f] { return std::to_string(f); }, [&f](const std::string& v) { f = parse_int(v); }};
}
Codec double_field(double& f) {
  return {[&f] { return fmt_double(f); }, [&f](const std::string& v) { f = parse_double(v); }};
}
Codec bool_field(bool& f) {
  return {[&f] { return std::string(f ? "true" : "false"); }, [&f](const std::string& v) { f = parse_bool(v); }};
}
Codec string_field(std::string& f) {
  return {[&f] { return f; }, [&f](const std::string& v) { f = v; }};
}
Codec int_list_field(std::vector<int>& f) {
  return {[&f] { return join(f); },
          [&f](const std::string& v) {
            f.clear();
            for (const auto& x : split_commas(v)) f.push_back(parse_int(x));
          }};
}
Codec double_list_field(std::vector<double>& f) {
  return {[&f] { return join(f); },
          [&f](const std::string& v) {
            f.clear();
            for (const auto& x : split_commas(v)) f.push_back(parse_double(x));
          }};
}
Codec stages_field(std::vector<ConvStage>& f) {
  return {[&f] { return format_stages(f); }, [&f](const std::string& v) { f = parse_stages(v); }};
}

using Fields = std::vector<std::pair<std::string, Codec>>;

void model_fields(ModelConfig& m, Fields& out) {
  BackboneConfig& b = m.backbone;
  out.insert(out.end(), {
      {"backbone.input_height", int_field(b.input_height)},
      {"backbone.input_channels", int_field(b.input_channels)},
      {"backbone.stages", stages_field(b.stages)},
      {"backbone.bn_momentum", double_field(b.bn_momentum)},
      {"backbone.bn_eps", double_field(b.bn_eps)},
      {"model.ffn_dim", size_field(m.ffn_dim)},
      {"model.agg_dim", size_field(m.agg_dim)},
      {"model.lstm_hidden", size_field(m.lstm_hidden)},
      {"model.scales", int_list_field(m.scales)},
      {"model.infer_scale", int_field(m.infer_scale)},
      {"model.use_3d_attention", bool_field(m.use_3d_attention)},
      {"model.use_context", bool_field(m.use_context)},
      {"model.global_sublayer", bool_field(m.global_sublayer)},
      {"model.sum_normalized_weights", bool_field(m.sum_normalized_weights)},
      {"model.ln_eps", double_field(m.ln_eps)},
      {"model.decoder_attn_dim", size_field(m.decoder_attn_dim)},
      {"model.decoder_hidden", size_field(m.decoder_hidden)},
      {"model.decoder_embed", size_field(m.decoder_embed)},
      {"model.share_decoder", bool_field(m.share_decoder)},
  });
}

Fields experiment_fields(ExperimentConfig& c) {
  SynthConfig& s = c.synth;
  TrainConfig& t = c.train;
  Fields out = {
      {"synth.num_samples", size_field(s.num_samples)},
      {"synth.num_val", size_field(s.num_val)},
      {"synth.symbols", size_field(s.symbols)},
      {"synth.min_chars", size_field(s.min_chars)},
      {"synth.max_chars", size_field(s.max_chars)},
      {"synth.canvas_height", size_field(s.canvas_height)},
      {"synth.glyph_width", size_field(s.glyph_width)},
      {"synth.min_gap", size_field(s.min_gap)},
      {"synth.max_gap", size_field(s.max_gap)},
      {"synth.jitter", double_field(s.jitter)},
      {"synth.alphabet", string_field(s.alphabet)},
      {"synth.seed", u64_field(s.seed)},
  };
  model_fields(c.model, out);
  out.insert(out.end(), {
      {"train.lambda1", double_field(t.lambda1)},
      {"train.lambda2", double_field(t.lambda2)},
      {"train.lr", double_field(t.lr)},
      {"train.halve_epochs", int_list_field(t.halve_epochs)},
      {"train.adam_beta1", double_field(t.adam.beta1)},
      {"train.adam_beta2", double_field(t.adam.beta2)},
      {"train.adam_eps", double_field(t.adam.eps)},
      {"train.stage1_epochs", size_field(t.stage1_epochs)},
      {"train.stage2_epochs", size_field(t.stage2_epochs)},
      {"train.batch_size", size_field(t.batch_size)},
      {"train.augment", bool_field(t.augment)},
      {"train.scale_weights", double_list_field(t.scale_weights)},
      {"train.seed", u64_field(t.seed)},
  });
  return out;
}

void apply_fields(Fields& fields, const std::vector<std::pair<std::string, std::string>>& kv,
           const std::function<bool(const std::string&, const std::string&)>& extra = {}) {
  std::map<std::string, Codec*> index;
  for (auto& [k, codec] : fields) index[k] = &codec;
  for (const auto& [key, value] : kv) {
    if (extra && extra(key, value)) continue;
    auto it = index.find(key);
    if (it == index.end()) throw std::invalid_argument("unknown config key '" + key + "'");
    try {
      it->second->set(value);
    } catch (const std::exception& e) {
      throw std::invalid_argument("config key '" + key + "': bad value '" + value + "' (" + e.what() + ")");
    }
  }
}

std::string render(const Fields& fields) {
  std::string out;
  for (const auto& [k, codec] : fields) out += k + " = " + codec.get() + '\n';
  return out;
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_key_values(std::string_view text,
                                                                  const std::string& source) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": empty key");
    out.emplace_back(std::move(key), trim(std::string_view(t).substr(eq + 1)));
  }
  return out;
}

ExperimentConfig parse_experiment_config(std::string_view text) {
  ExperimentConfig c;
  Fields fields = experiment_fields(c);
  apply_fields(fields, parse_key_values(text), [&c](const std::string& key, const std::string& value) {
    if (key != "seed") return false;
    c.synth.seed = c.train.seed = parse_size(value);
    return true;
  });
  c.synth.validate();
  c.model.validate();
  c.train.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_experiment_config(ss.str());
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string format_experiment_config(const ExperimentConfig& config) {
  ExperimentConfig copy = config;
  return render(experiment_fields(copy));
}

std::string format_model_config(const ModelConfig& config) {
  ModelConfig copy = config;
  Fields fields;
  model_fields(copy, fields);
  return render(fields);
}

ModelConfig parse_model_config(std::string_view text) {
  ModelConfig m;
  Fields fields;
  model_fields(m, fields);
  apply_fields(fields, parse_key_values(text, "model config"));
  m.validate();
  return m;
}

}  // namespace htr
