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
#include <doctest.h>

#include <cmath>
#include <vector>

#include "htr/attention3d.hpp"
#include "htr/gradcheck.hpp"

using namespace htr;

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t[i * t.dim(1) + j];
  }
  return m;
}

std::vector<double> softmax(std::vector<double> e) {
  double mx = e[0];
  for (double v : e) mx = std::max(mx, v);
  double z = 0;
  for (double& v : e) z += (v = std::exp(v - mx));
  for (double& v : e) v /= z;
  return e;
}

// softmax(F F^T / s) F, written out with loops.
Mat self_attention_ref(const Mat& f, double s) {
  const std::size_t n = f.size(), c = f[0].size();
  Mat out(n, std::vector<double>(c, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> scores(n);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < c; ++k) scores[j] += f[i][k] * f[j][k] / s;
    }
    const auto a = softmax(scores);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t k = 0; k < c; ++k) out[i][k] += a[j] * f[j][k];
    }
  }
  return out;
}

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.mutable_values()) v = rng.uniform(-1, 1);
  return t;
}

Attention3DParams make_params(ParameterStore& store, std::size_t c, Rng& rng) {
  init_attention3d(store, "a.", c, 5, 4, rng);
  for (auto& [name, t] : store) {
    for (double& v : t.mutable_values()) v += rng.uniform(-0.2, 0.2);
  }
  return attention3d_params(store, "a.", std::sqrt(static_cast<double>(c)));
}

}  // namespace

TEST_CASE("self attention on one position is the identity") {
  Tensor f = Tensor::matrix(1, 3, {0.5, -2, 3});
  Tensor out = self_attention(f, 1.7);
  for (std::size_t i = 0; i < 3; ++i) CHECK(out[i] == doctest::Approx(f[i]));
}

TEST_CASE("identical rows attend uniformly and reproduce themselves") {
  Tensor f = Tensor::matrix(3, 2, {1, 2, 1, 2, 1, 2});
  Tensor out = self_attention(f, 1.0);
  for (std::size_t i = 0; i < 6; ++i) CHECK(out[i] == doctest::Approx(f[i]).epsilon(1e-14));
}

TEST_CASE("self attention matches a direct evaluation") {
  Rng rng(1);
  Tensor f = random_matrix(3, 4, rng);
  const Mat ref = self_attention_ref(to_mat(f), 2.0);
  const Mat got = to_mat(self_attention(f, 2.0));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) CHECK(got[i][k] == doctest::Approx(ref[i][k]).epsilon(1e-13));
  }
}

TEST_CASE("self attention is permutation equivariant") {
  Rng rng(2);
  Tensor f = random_matrix(5, 3, rng);
  const std::vector<std::size_t> perm = {3, 0, 4, 1, 2};
  Tensor g({5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 3; ++k) g.mutable_values()[i * 3 + k] = f[perm[i] * 3 + k];
  }
  Tensor a = self_attention(f, 1.3), b = self_attention(g, 1.3);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t k = 0; k < 3; ++k) CHECK(b[i * 3 + k] == doctest::Approx(a[perm[i] * 3 + k]).epsilon(1e-13));
  }
}

TEST_CASE("sublayer zero cases") {
  Rng rng(3);
  ParameterStore store;
  init_sublayer(store, "s.", 3, 4, rng);
  SublayerParams p = sublayer_params(store, "s.");
  Tensor x = random_matrix(2, 3, rng);
  for (double& v : p.w2.mutable_values()) v = 0;
  for (std::size_t i = 0; i < 3; ++i) p.b2.mutable_values()[i] = 0.5 * static_cast<double>(i);
  Tensor y = sublayer(x, p);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t i = 0; i < 3; ++i) CHECK(y[r * 3 + i] == 0.5 * static_cast<double>(i));
  }
  for (double& v : p.w1.mutable_values()) v = 0;
  for (double& v : p.b2.mutable_values()) v = 0;
  Tensor z = sublayer(x, p);
  for (double v : z.values()) CHECK(v == 0.0);
}

TEST_CASE("sublayer gradients") {
  Rng rng(4);
  ParameterStore store;
  init_sublayer(store, "s.", 3, 4, rng);
  const SublayerParams p = sublayer_params(store, "s.");
  Tensor x = random_matrix(2, 3, rng).set_requires_grad();
  std::vector<Tensor> wrt = {x};
  for (auto& [n, t] : store) wrt.push_back(t);
  CHECK(ad::gradcheck([&]() { return ad::sum(ad::tanh(sublayer(x, p))); }, wrt) < 1e-5);
}

TEST_CASE("aggregation") {
  Rng rng(5);
  ParameterStore store;
  const Attention3DParams p = make_params(store, 3, rng);

  Tensor single = random_matrix(1, 3, rng);
  const Aggregation one = aggregate(single, p);
  CHECK(one.alpha[0] == doctest::Approx(1.0));
  for (std::size_t i = 0; i < 3; ++i) CHECK(one.r[i] == doctest::Approx(single[i]));

  Tensor same = Tensor::matrix(3, 3, {1, -1, 2, 1, -1, 2, 1, -1, 2});
  const Aggregation eq = aggregate(same, p);
  for (std::size_t i = 0; i < 3; ++i) CHECK(eq.r[i] == doctest::Approx(same[i]).epsilon(1e-14));

  Tensor f = random_matrix(4, 3, rng);
  const Aggregation agg = aggregate(f, p);
  std::vector<double> e(4, 0.0);
  for (std::size_t r = 0; r < 4; ++r) {
    for (std::size_t a = 0; a < 4; ++a) {
      double pre = p.agg_b[a];
      for (std::size_t k = 0; k < 3; ++k) pre += p.agg_W[a * 3 + k] * f[r * 3 + k];
      e[r] += p.agg_w[a] * std::tanh(pre);
    }
  }
  const auto alpha = softmax(e);
  double total = 0;
  for (std::size_t r = 0; r < 4; ++r) {
    CHECK(agg.alpha[r] == doctest::Approx(alpha[r]).epsilon(1e-13));
    CHECK(agg.alpha[r] >= 0);
    total += agg.alpha[r];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t k = 0; k < 3; ++k) {
    double r = 0, lo = 1e9, hi = -1e9;
    for (std::size_t p_ = 0; p_ < 4; ++p_) {
      r += alpha[p_] * f[p_ * 3 + k];
      lo = std::min(lo, f[p_ * 3 + k]);
      hi = std::max(hi, f[p_ * 3 + k]);
    }
    CHECK(agg.r[k] == doctest::Approx(r).epsilon(1e-13));
    CHECK(agg.r[k] >= lo - 1e-12);
    CHECK(agg.r[k] <= hi + 1e-12);
  }

  const Aggregation lit = aggregate(f, p, true);
  double esum = 0;
  for (double v : e) esum += v;
  CHECK(lit.alpha[2] == doctest::Approx(e[2] / esum).epsilon(1e-10));
}

TEST_CASE("3d attention over block sequences") {
  Rng rng(6);
  ParameterStore store;
  const Attention3DParams p = make_params(store, 2, rng);
  PositionalTable table(2);
  CHECK(forward_3d_attention(BlockSequence{}, p, table).size() == 0);

  Tensor block({2, 3, 2});
  for (double& v : block.mutable_values()) v = rng.uniform(-1, 1);
  BlockSequence seq;
  seq.blocks = {block, block.clone()};
  seq.frame_length = 3;
  const VisualSequence out = forward_3d_attention(seq, p, table);
  REQUIRE(out.size() == 2);
  CHECK(out.plane_height == 2);
  REQUIRE(out.alphas.size() == 2);
  CHECK(out.alphas[0].size() == 6);
  for (std::size_t i = 0; i < 2; ++i) CHECK(out.features[0][i] == out.features[1][i]);

  const VisualSequence pooled = pooled_visual_features(seq);
  double mean0 = 0;
  for (std::size_t i = 0; i < 6; ++i) mean0 += block[i] / 6;
  CHECK(pooled.features[0][0] == doctest::Approx(mean0));
}

TEST_CASE("gradcheck through the full 3d attention block") {
  Rng rng(7);
  ParameterStore store;
  const Attention3DParams p = make_params(store, 2, rng);
  PositionalTable table(2);
  Tensor block({2, 3, 2});
  for (double& v : block.mutable_values()) v = rng.uniform(-1, 1);
  block.set_requires_grad();
  std::vector<Tensor> wrt = {block};
  for (auto& [n, t] : store) wrt.push_back(t);
  for (bool literal : {false, true}) {
    auto f = [&]() {
      BlockSequence seq;
      seq.blocks = {block};
      seq.frame_length = 3;
      AttentionOptions o;
      o.sum_normalized_weights = literal;
      const auto out = forward_3d_attention(seq, p, table, o);
      return ad::sum(ad::mul(out.features[0], Tensor::vector({0.7, -1.3})));
    };
    CHECK(ad::gradcheck(f, wrt) < 1e-4);
  }
}
