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

#include <cstddef>
#include <vector>

#include "htr/tensor.hpp"

// Differentiable primitives. Every function here records its gradient rule on
// the active Tape when one of its inputs requires a gradient.
namespace htr::ad {

// 2-D x 2-D, 1-D x 2-D (row vector) and 2-D x 1-D (column vector) products.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise binary ops. `b` may have the same shape as `a` or a suffix of
// it (including scalar), in which case it is broadcast over leading axes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor reciprocal(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);
Tensor log_softmax_lastdim(const Tensor& x);

// Normalizes each last-axis vector to zero mean and unit population
// variance, then applies the affine gamma/beta (both shaped [n]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis = 0);
// Contiguous range [start, start + length) along `axis`.
Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start,
              std::size_t length);
// Zero-pads `axis` on the high side up to `new_length`.
Tensor pad_axis(const Tensor& x, std::size_t axis, std::size_t new_length);
Tensor reshape(const Tensor& x, Shape shape);
Tensor row(const Tensor& x, std::size_t index);
Tensor stack(const std::vector<Tensor>& rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Scalar x[index] over the flat buffer.
Tensor pick(const Tensor& x, std::size_t index);

// y = W x + b for x: [in] or [n x in], W: [out x in], b: [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// Convolution over a [C_in x W x H] volume with weights [C_out x C_in x k x k],
// symmetric zero padding `pad` and equal stride along both plane axes.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad);
// Non-overlapping max pooling over the plane, floor semantics.
Tensor max_pool2d(const Tensor& x, std::size_t window);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> var;  // population variance
};

// Batch normalization of a [C x W x H] volume. With `running == nullptr` the
// statistics are taken from `x` itself (and written to `batch_stats` when
// non-null); otherwise the supplied statistics are treated as constants.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps, const ChannelStats* running,
                    ChannelStats* batch_stats = nullptr);

}  // namespace htr::ad
