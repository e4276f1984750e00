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
#include "htr/ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

namespace htr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

void check_label(std::span<const int> label, std::size_t classes, int blank) {
  for (int id : label) {
    if (id == blank || id < 0 || static_cast<std::size_t>(id) >= classes) {
      throw std::invalid_argument("ctc: label id " + std::to_string(id) +
                                  " is the blank or outside [0, " + std::to_string(classes) + ")");
    }
  }
}

std::vector<double> log_softmax_rows(std::span<const double> logits, std::size_t frames,
                                     std::size_t classes) {
  std::vector<double> out(frames * classes);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* row = logits.data() + t * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t k = 0; k < classes; ++k) z += std::exp(row[k] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t k = 0; k < classes; ++k) out[t * classes + k] = row[k] - lz;
  }
  return out;
}

}  // namespace

LabelSequence collapse_phi(std::span<const int> path, int blank) {
  LabelSequence out;
  int prev = -1;
  for (int id : path) {
    if (id != prev && id != blank) out.push_back(id);
    prev = id;
  }
  return out;
}

std::size_t ctc_min_frames(std::span<const int> label) {
  std::size_t n = label.size();
  for (std::size_t i = 1; i < label.size(); ++i) {
    if (label[i] == label[i - 1]) ++n;
  }
  return n;
}

bool ctc_feasible(std::size_t frames, std::span<const int> label) {
  return frames >= 1 && frames >= ctc_min_frames(label);
}

Tensor ctc_loss(const Tensor& logits, std::span<const int> label, int blank) {
  if (logits.rank() != 2 || logits.dim(1) < 2) {
    throw ad::ShapeError("ctc_loss: logits must be [T x K] with K >= 2, got " +
                         ad::shape_str(logits.shape()));
  }
  const std::size_t frames = logits.dim(0), classes = logits.dim(1);
  if (blank < 0 || static_cast<std::size_t>(blank) >= classes) {
    throw std::invalid_argument("ctc_loss: blank index out of range");
  }
  check_label(label, classes, blank);
  if (!ctc_feasible(frames, label)) {
    throw std::invalid_argument("ctc_loss: label of length " + std::to_string(label.size()) +
                                " needs at least " + std::to_string(ctc_min_frames(label)) +
                                " frames, got " + std::to_string(frames));
  }

  // Extended label: blank, l1, blank, l2, ..., blank.
  const std::size_t states = 2 * label.size() + 1;
  std::vector<int> ext(states, blank);
  for (std::size_t i = 0; i < label.size(); ++i) ext[2 * i + 1] = label[i];
  auto skip_allowed = [&](std::size_t s) {
    return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
  };

  const auto lp = std::make_shared<std::vector<double>>(
      log_softmax_rows(logits.values(), frames, classes));
  auto emit = [&](std::size_t t, std::size_t s) { return (*lp)[t * classes + ext[s]]; };

  std::vector<double> alpha(frames * states, kNegInf), beta(frames * states, kNegInf);
  alpha[0] = emit(0, 0);
  if (states > 1) alpha[1] = emit(0, 1);
  for (std::size_t t = 1; t < frames; ++t) {
    for (std::size_t s = 0; s < states; ++s) {
      double a = alpha[(t - 1) * states + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * states + s - 1]);
      if (skip_allowed(s)) a = log_add(a, alpha[(t - 1) * states + s - 2]);
      alpha[t * states + s] = a == kNegInf ? kNegInf : a + emit(t, s);
    }
  }
  const std::size_t last = frames - 1;
  beta[last * states + states - 1] = emit(last, states - 1);
  if (states > 1) beta[last * states + states - 2] = emit(last, states - 2);
  for (std::size_t t = last; t-- > 0;) {
    for (std::size_t s = 0; s < states; ++s) {
      double b = beta[(t + 1) * states + s];
      if (s + 1 < states) b = log_add(b, beta[(t + 1) * states + s + 1]);
      if (s + 2 < states && skip_allowed(s + 2)) b = log_add(b, beta[(t + 1) * states + s + 2]);
      beta[t * states + s] = b == kNegInf ? kNegInf : b + emit(t, s);
    }
  }

  double log_p = alpha[last * states + states - 1];
  if (states > 1) log_p = log_add(log_p, alpha[last * states + states - 2]);
  if (log_p == kNegInf) throw std::invalid_argument("ctc_loss: label unreachable");

  Tensor out = ad::make_output(ad::Shape{}, {&logits});
  out.mutable_values()[0] = -log_p;

  // d(-log p)/d logits[t][k] = y[t][k] - sum_{s: ext[s]=k} alpha*beta/(y p).
  auto grad = std::make_shared<std::vector<double>>(frames * classes);
  for (std::size_t t = 0; t < frames; ++t) {
    std::vector<double> occupancy(classes, kNegInf);
    for (std::size_t s = 0; s < states; ++s) {
      const double ab = alpha[t * states + s] + beta[t * states + s];
      if (ab == kNegInf) continue;
      occupancy[ext[s]] = log_add(occupancy[ext[s]], ab - emit(t, s));
    }
    for (std::size_t k = 0; k < classes; ++k) {
      const double y = std::exp((*lp)[t * classes + k]);
      const double occ = occupancy[k] == kNegInf ? 0.0 : std::exp(occupancy[k] - log_p);
      (*grad)[t * classes + k] = y - occ;
    }
  }
  ad::record_op(out, {&logits}, [logits, out, grad]() {
    if (!logits.requires_grad()) return;
    const double g = out.impl()->grad[0];
    auto gx = logits.impl()->grad.data();
    for (std::size_t i = 0; i < grad->size(); ++i) gx[i] += g * (*grad)[i];
  });
  return out;
}

double brute_force_ctc(std::span<const double> logits, std::size_t frames, std::size_t classes,
                       std::span<const int> label, int blank) {
  if (frames == 0 || classes < 2 || logits.size() != frames * classes) {
    throw std::invalid_argument("brute_force_ctc: logits do not match frames x classes");
  }
  double paths = 1.0;
  for (std::size_t t = 0; t < frames; ++t) paths *= static_cast<double>(classes);
  if (paths > 1e6) {
    throw std::invalid_argument("brute_force_ctc: " + std::to_string(classes) + "^" +
                                std::to_string(frames) + " paths exceeds 1e6");
  }
  const std::vector<double> lp = log_softmax_rows(logits, frames, classes);
  std::vector<int> path(frames, 0);
  double total = 0.0;
  while (true) {
    if (collapse_phi(path, blank) == LabelSequence(label.begin(), label.end())) {
      double log_prob = 0.0;
      for (std::size_t t = 0; t < frames; ++t) log_prob += lp[t * classes + path[t]];
      total += std::exp(log_prob);
    }
    std::size_t t = 0;
    while (t < frames && ++path[t] == static_cast<int>(classes)) path[t++] = 0;
    if (t == frames) break;
  }
  return total > 0.0 ? -std::log(total) : std::numeric_limits<double>::infinity();
}

std::vector<int> best_path(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ad::ShapeError("best_path: logits must be [T x K], got " + ad::shape_str(logits.shape()));
  }
  const std::size_t frames = logits.dim(0), classes = logits.dim(1);
  std::vector<int> path(frames);
  auto v = logits.values();
  for (std::size_t t = 0; t < frames; ++t) {
    auto row = v.subspan(t * classes, classes);
    path[t] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return path;
}

LabelSequence greedy_decode(const Tensor& logits, int blank) {
  return collapse_phi(best_path(logits), blank);
}

}  // namespace htr
