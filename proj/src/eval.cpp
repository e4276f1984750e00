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
#include "htr/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

#include "htr/utf8.hpp"

namespace htr {

namespace {

// Ordered cost: fewer edits, then more substitutions, then more deletions.
struct Cost {
  std::size_t edits = 0;
  std::size_t subs = 0;
  std::size_t dels = 0;
  bool better_than(const Cost& o) const {
    return std::make_tuple(edits, o.subs, o.dels) < std::make_tuple(o.edits, subs, dels);
  }
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace

std::vector<AlignmentStep> align(std::span<const int> reference, std::span<const int> hypothesis) {
  const std::size_t n = reference.size(), m = hypothesis.size();
  std::vector<Cost> table((n + 1) * (m + 1));
  std::vector<EditOp> from((n + 1) * (m + 1), EditOp::match);
  auto at = [m](std::size_t i, std::size_t j) { return i * (m + 1) + j; };
  for (std::size_t i = 1; i <= n; ++i) {
    table[at(i, 0)] = {i, 0, i};
    from[at(i, 0)] = EditOp::remove;
  }
  for (std::size_t j = 1; j <= m; ++j) {
    table[at(0, j)] = {j, 0, 0};
    from[at(0, j)] = EditOp::insert;
  }
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const bool same = reference[i - 1] == hypothesis[j - 1];
      Cost diag = table[at(i - 1, j - 1)];
      if (!same) {
        ++diag.edits;
        ++diag.subs;
      }
      Cost best = diag;
      EditOp op = same ? EditOp::match : EditOp::substitute;
      Cost del = table[at(i - 1, j)];
      ++del.edits;
      ++del.dels;
      if (del.better_than(best)) {
        best = del;
        op = EditOp::remove;
      }
      Cost ins = table[at(i, j - 1)];
      ++ins.edits;
      if (ins.better_than(best)) {
        best = ins;
        op = EditOp::insert;
      }
      table[at(i, j)] = best;
      from[at(i, j)] = op;
    }
  }
  std::vector<AlignmentStep> steps;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    const EditOp op = from[at(i, j)];
    switch (op) {
      case EditOp::match:
      case EditOp::substitute:
        --i;
        --j;
        steps.push_back({op, static_cast<int>(i), static_cast<int>(j)});
        break;
      case EditOp::remove:
        --i;
        steps.push_back({op, static_cast<int>(i), -1});
        break;
      case EditOp::insert:
        --j;
        steps.push_back({op, -1, static_cast<int>(j)});
        break;
    }
  }
  std::reverse(steps.begin(), steps.end());
  return steps;
}

EditCounts edit_distance(std::span<const int> reference, std::span<const int> hypothesis) {
  EditCounts c;
  for (const auto& s : align(reference, hypothesis)) {
    if (s.op == EditOp::substitute) ++c.substitutions;
    if (s.op == EditOp::insert) ++c.insertions;
    if (s.op == EditOp::remove) ++c.deletions;
  }
  return c;
}

EditCounts edit_distance(std::string_view reference, std::string_view hypothesis) {
  auto to_ints = [](std::string_view s) {
    std::vector<int> out;
    for (char32_t c : decode_utf8(s)) out.push_back(static_cast<int>(c));
    return out;
  };
  const auto r = to_ints(reference), h = to_ints(hypothesis);
  return edit_distance(std::span<const int>(r), std::span<const int>(h));
}

double accuracy_rate(long total_chars, const EditCounts& counts) {
  if (total_chars <= 0) {
    throw std::invalid_argument("accuracy_rate: character count must be positive, got " +
                                std::to_string(total_chars));
  }
  return 1.0 - static_cast<double>(counts.total()) / static_cast<double>(total_chars);
}

std::string recognize(const GrayImage& image, ModelBundle& bundle) {
  const GrayImage sized = resize_to_height(image, static_cast<std::size_t>(bundle.config.backbone.input_height));
  const LabelSequence ids = forward_infer(image_to_tensor(sized), bundle);
  return bundle.vocab.decode(ids);
}

std::vector<GrayImage> attention_heatmaps(const GrayImage& image, ModelBundle& bundle) {
  if (!bundle.config.use_3d_attention) throw std::invalid_argument("model has no 3D attention blocks");
  const int scale = bundle.config.infer_scale;
  const GrayImage sized = resize_to_height(image, static_cast<std::size_t>(bundle.config.backbone.input_height));
  const FeatureVolume volume = backbone_forward(image_to_tensor(sized), bundle.config.backbone, bundle.params,
                                                bundle.buffers, Mode::eval);
  const BranchOutput branch = forward_branch(volume, bundle, scale);
  const std::size_t fw = volume.data.dim(1), fh = volume.data.dim(2);
  const auto s = static_cast<std::size_t>(scale);
  std::vector<GrayImage> maps;
  for (std::size_t t = 0; t < branch.visual.alphas.size(); ++t) {
    const auto& alpha = branch.visual.alphas[t];
    const double peak = *std::max_element(alpha.begin(), alpha.end());
    GrayImage map(sized.width, sized.height);
    for (std::size_t x = 0; x < sized.width; ++x) {
      const auto col = std::min(fw - 1, static_cast<std::size_t>(static_cast<double>(x) / volume.downsample_width));
      if (col / s != t) continue;
      for (std::size_t y = 0; y < sized.height; ++y) {
        const auto row = std::min(fh - 1, static_cast<std::size_t>(static_cast<double>(y) / volume.downsample_height));
        map.at(x, y) = peak > 0 ? alpha[(col % s) * fh + row] / peak : 0.0;
      }
    }
    maps.push_back(resize_bilinear(map, image.width, image.height));
  }
  return maps;
}

CorpusReport evaluate_corpus(ModelBundle& bundle, const std::vector<EvalItem>& items) {
  if (items.empty()) throw std::invalid_argument("evaluate_corpus: dataset is empty");
  CorpusReport report;
  for (const auto& item : items) {
    SampleResult r;
    r.id = item.id;
    r.reference = item.reference;
    try {
      const GrayImage image = item.image.pixels.empty() ? load_image(item.image_path) : item.image;
      r.hypothesis = recognize(image, bundle);
    } catch (const std::exception& e) {
      r.failed = true;
      r.error = e.what();
      ++report.failures;
      std::cerr << "warning: sample '" << item.id << "' failed: " << e.what() << '\n';
      report.samples.push_back(std::move(r));
      continue;
    }
    const auto ref = split_utf8(r.reference), hyp = split_utf8(r.hypothesis);
    std::vector<int> ref_ids, hyp_ids;
    std::map<std::string, int> codes;
    auto code = [&](const std::string& ch) {
      return codes.emplace(ch, static_cast<int>(codes.size())).first->second;
    };
    for (const auto& ch : ref) ref_ids.push_back(code(ch));
    for (const auto& ch : hyp) hyp_ids.push_back(code(ch));
    for (const auto& step : align(ref_ids, hyp_ids)) {
      if (step.op == EditOp::substitute) {
        ++r.counts.substitutions;
        ++report.confusions[{ref[static_cast<std::size_t>(step.ref)], hyp[static_cast<std::size_t>(step.hyp)]}];
      } else if (step.op == EditOp::insert) {
        ++r.counts.insertions;
      } else if (step.op == EditOp::remove) {
        ++r.counts.deletions;
      }
    }
    report.counts += r.counts;
    report.total_chars += ref.size();
    report.samples.push_back(std::move(r));
  }
  report.ar = accuracy_rate(static_cast<long>(report.total_chars), report.counts);
  return report;
}

CorpusReport evaluate_corpus(ModelBundle& bundle, const std::vector<Sample>& samples) {
  std::vector<EvalItem> items;
  items.reserve(samples.size());
  for (const auto& s : samples) items.push_back({s.id, s.text, {}, s.image});
  return evaluate_corpus(bundle, items);
}

CorpusReport evaluate_manifest(ModelBundle& bundle, const DatasetManifest& manifest) {
  std::vector<EvalItem> items;
  items.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) items.push_back({e.id, e.label, manifest.resolve(e), {}});
  return evaluate_corpus(bundle, items);
}

void write_report_csv(const CorpusReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report " + path.string());
  out << "sample_id,reference,hypothesis,Ns,Ni,Nd\n";
  for (const auto& s : report.samples) {
    out << csv_field(s.id) << ',' << csv_field(s.reference) << ',';
    if (s.failed) {
      out << csv_field("ERROR: " + s.error) << ",,,\n";
      continue;
    }
    out << csv_field(s.hypothesis) << ',' << s.counts.substitutions << ',' << s.counts.insertions
        << ',' << s.counts.deletions << '\n';
  }
}

std::string format_confusions(const CorpusReport& report, std::size_t limit) {
  std::vector<std::pair<std::pair<std::string, std::string>, std::size_t>> rows(
      report.confusions.begin(), report.confusions.end());
  std::stable_sort(rows.begin(), rows.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size() && i < limit; ++i) {
    os << "  " << rows[i].first.first << " -> " << rows[i].first.second << ": " << rows[i].second << '\n';
  }
  return os.str();
}

}  // namespace htr
