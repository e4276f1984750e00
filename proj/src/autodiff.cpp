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
#include "htr/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace htr::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

double* grad_ptr(const Tensor& t) { return t.impl()->grad.data(); }
const double* grad_cptr(const Tensor& t) { return t.impl()->grad.data(); }
double* data_ptr(Tensor& t) { return t.impl()->data.data(); }
const double* data_cptr(const Tensor& t) { return t.impl()->data.data(); }

bool wants(const Tensor& t) { return t.requires_grad(); }

// Size of the broadcast block of `b` inside `a`; throws unless b's shape is a
// suffix of a's.
std::size_t suffix_block(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  bool ok = sb.size() <= sa.size() &&
            std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!ok) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(sb) +
                     " onto " + shape_str(sa));
  }
  return b.size();
}

template <class Fwd, class Bwd>
Tensor unary(const Tensor& x, Fwd fwd, Bwd dydx) {
  Tensor out = make_output(x.shape(), {&x});
  const double* xs = data_cptr(x);
  double* ys = data_ptr(out);
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] = fwd(xs[i]);
  record_op(out, {&x}, [x, out, dydx]() {
    if (!wants(x)) return;
    const double* xs = data_cptr(x);
    const double* ys = data_cptr(out);
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * dydx(xs[i], ys[i]);
  });
  return out;
}

// Number of rows when treating `x` as [rows x last].
std::size_t leading(const Tensor& x) {
  return x.rank() == 0 ? 1 : x.size() / x.shape().back();
}
std::size_t last(const Tensor& x) { return x.rank() == 0 ? 1 : x.shape().back(); }

std::size_t outer_of(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < axis; ++i) n *= s[i];
  return n;
}
std::size_t inner_of(const Shape& s, std::size_t axis) {
  std::size_t n = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  std::size_t m, k, k2, n;
  Shape out_shape;
  if (a.rank() == 2 && b.rank() == 2) {
    m = a.dim(0); k = a.dim(1); k2 = b.dim(0); n = b.dim(1);
    out_shape = {m, n};
  } else if (a.rank() == 1 && b.rank() == 2) {
    m = 1; k = a.dim(0); k2 = b.dim(0); n = b.dim(1);
    out_shape = {n};
  } else if (a.rank() == 2 && b.rank() == 1) {
    m = a.dim(0); k = a.dim(1); k2 = b.dim(0); n = 1;
    out_shape = {m};
  } else {
    throw ShapeError("matmul: unsupported ranks " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  Tensor out = make_output(out_shape, {&a, &b});
  MapMat(data_ptr(out), m, n).noalias() =
      MapConstMat(data_cptr(a), m, k) * MapConstMat(data_cptr(b), k, n);
  record_op(out, {&a, &b}, [a, b, out, m, k, n]() {
    MapConstMat gy(grad_cptr(out), m, n);
    if (wants(a)) {
      MapMat(grad_ptr(a), m, k).noalias() +=
          gy * MapConstMat(data_cptr(b), k, n).transpose();
    }
    if (wants(b)) {
      MapMat(grad_ptr(b), k, n).noalias() +=
          MapConstMat(data_cptr(a), m, k).transpose() * gy;
    }
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(a.shape()));
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor out = make_output({n, m}, {&a});
  MapMat(data_ptr(out), n, m) = MapConstMat(data_cptr(a), m, n).transpose();
  record_op(out, {&a}, [a, out, m, n]() {
    if (!wants(a)) return;
    MapMat(grad_ptr(a), m, n) += MapConstMat(grad_cptr(out), n, m).transpose();
  });
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  const std::size_t block = suffix_block(a, b, "add");
  Tensor out = make_output(a.shape(), {&a, &b});
  const double* xa = data_cptr(a);
  const double* xb = data_cptr(b);
  double* y = data_ptr(out);
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = xa[i] + xb[i % block];
  record_op(out, {&a, &b}, [a, b, out, block]() {
    const double* gy = grad_cptr(out);
    if (wants(a)) {
      double* ga = grad_ptr(a);
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gy[i];
    }
    if (wants(b)) {
      double* gb = grad_ptr(b);
      for (std::size_t i = 0; i < a.size(); ++i) gb[i % block] += gy[i];
    }
  });
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  const std::size_t block = suffix_block(a, b, "sub");
  Tensor out = make_output(a.shape(), {&a, &b});
  const double* xa = data_cptr(a);
  const double* xb = data_cptr(b);
  double* y = data_ptr(out);
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = xa[i] - xb[i % block];
  record_op(out, {&a, &b}, [a, b, out, block]() {
    const double* gy = grad_cptr(out);
    if (wants(a)) {
      double* ga = grad_ptr(a);
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gy[i];
    }
    if (wants(b)) {
      double* gb = grad_ptr(b);
      for (std::size_t i = 0; i < a.size(); ++i) gb[i % block] -= gy[i];
    }
  });
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  const std::size_t block = suffix_block(a, b, "mul");
  Tensor out = make_output(a.shape(), {&a, &b});
  const double* xa = data_cptr(a);
  const double* xb = data_cptr(b);
  double* y = data_ptr(out);
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = xa[i] * xb[i % block];
  record_op(out, {&a, &b}, [a, b, out, block]() {
    const double* gy = grad_cptr(out);
    const double* xa = data_cptr(a);
    const double* xb = data_cptr(b);
    if (wants(a)) {
      double* ga = grad_ptr(a);
      for (std::size_t i = 0; i < a.size(); ++i) ga[i] += gy[i] * xb[i % block];
    }
    if (wants(b)) {
      double* gb = grad_ptr(b);
      for (std::size_t i = 0; i < a.size(); ++i) gb[i % block] += gy[i] * xa[i];
    }
  });
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& x) {
  return unary(
      x, [](double v) { return std::exp(v); },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Tensor reciprocal(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / v; },
      [](double, double y) { return -y * y; });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t rows = leading(x), n = last(x);
  Tensor out = make_output(x.shape(), {&x});
  const double* xs = data_cptr(x);
  double* ys = data_ptr(out);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xs + r * n;
    double* yr = ys + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= z;
  }
  record_op(out, {&x}, [x, out, rows, n]() {
    if (!wants(x)) return;
    const double* ys = data_cptr(out);
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += gy[r * n + j] * ys[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += ys[r * n + j] * (gy[r * n + j] - dot);
      }
    }
  });
  return out;
}

Tensor log_softmax_lastdim(const Tensor& x) {
  const std::size_t rows = leading(x), n = last(x);
  Tensor out = make_output(x.shape(), {&x});
  const double* xs = data_cptr(x);
  double* ys = data_ptr(out);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xs + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xr[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) ys[r * n + j] = xr[j] - lz;
  }
  record_op(out, {&x}, [x, out, rows, n]() {
    if (!wants(x)) return;
    const double* ys = data_cptr(out);
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += gy[r * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        gx[r * n + j] += gy[r * n + j] - std::exp(ys[r * n + j]) * total;
      }
    }
  });
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t rows = leading(x), n = last(x);
  if (gamma.size() != n || beta.size() != n) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(n) +
                     " entries");
  }
  Tensor out = make_output(x.shape(), {&x, &gamma, &beta});
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* xs = data_cptr(x);
  const double* g = data_cptr(gamma);
  const double* b = data_cptr(beta);
  double* ys = data_ptr(out);
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xs[r * n + j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = xs[r * n + j] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double is = (var + eps) > 0 ? 1.0 / std::sqrt(var + eps) : 0.0;
    (*inv_std)[r] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xs[r * n + j] - mu) * is;
      (*xhat)[r * n + j] = h;
      ys[r * n + j] = g[j] * h + b[j];
    }
  }
  record_op(out, {&x, &gamma, &beta}, [x, gamma, beta, out, xhat, inv_std, rows, n]() {
    const double* gy = grad_cptr(out);
    const double* g = data_cptr(gamma);
    const auto& h = *xhat;
    if (wants(gamma) || wants(beta)) {
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
          if (wants(gamma)) grad_ptr(gamma)[j] += gy[r * n + j] * h[r * n + j];
          if (wants(beta)) grad_ptr(beta)[j] += gy[r * n + j];
        }
      }
    }
    if (!wants(x)) return;
    double* gx = grad_ptr(x);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < rows; ++r) {
      double m1 = 0.0, m2 = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = gy[r * n + j] * g[j];
        m1 += dh;
        m2 += dh * h[r * n + j];
      }
      m1 *= inv_n;
      m2 *= inv_n;
      for (std::size_t j = 0; j < n; ++j) {
        const double dh = gy[r * n + j] * g[j];
        gx[r * n + j] += (*inv_std)[r] * (dh - m1 - h[r * n + j] * m2);
      }
    }
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
  Shape out_shape = s0;
  out_shape[axis] = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) {
      if (i != axis && s[i] != s0[i]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: incompatible shapes " + shape_str(s0) + " and " +
                       shape_str(s));
    }
    out_shape[axis] += s[axis];
  }
  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
  Tensor out(out_shape);
  if (any_grad && Tape::current() != nullptr) out.set_requires_grad(true);

  const std::size_t outer = outer_of(s0, axis);
  const std::size_t out_inner = out_shape[axis] * inner_of(s0, axis);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  double* y = data_ptr(out);
  for (const Tensor& p : parts) {
    offsets.push_back(offset);
    const std::size_t block = p.shape()[axis] * inner_of(s0, axis);
    const double* xs = data_cptr(p);
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(xs + o * block, xs + (o + 1) * block, y + o * out_inner + offset);
    }
    offset += block;
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& p : parts) ins.push_back(p.impl());
    Tape::current()->record(ins, out.impl(), [parts, out, offsets, outer, out_inner, axis]() {
      const double* gy = grad_cptr(out);
      for (std::size_t i = 0; i < parts.size(); ++i) {
        const Tensor& p = parts[i];
        if (!wants(p)) continue;
        const std::size_t block = p.shape()[axis] * inner_of(p.shape(), axis);
        double* gx = grad_ptr(p);
        for (std::size_t o = 0; o < outer; ++o) {
          for (std::size_t j = 0; j < block; ++j) {
            gx[o * block + j] += gy[o * out_inner + offsets[i] + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor narrow(const Tensor& x, std::size_t axis, std::size_t start,
              std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw ShapeError("narrow: range [" + std::to_string(start) + ", " +
                     std::to_string(start + length) + ") invalid for axis " +
                     std::to_string(axis) + " of " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[axis] = length;
  Tensor out = make_output(out_shape, {&x});
  const std::size_t outer = outer_of(s, axis), inner = inner_of(s, axis);
  const std::size_t in_block = s[axis] * inner, out_block = length * inner;
  const double* xs = data_cptr(x);
  double* y = data_ptr(out);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(xs + o * in_block + start * inner,
              xs + o * in_block + start * inner + out_block, y + o * out_block);
  }
  record_op(out, {&x}, [x, out, outer, inner, in_block, out_block, start]() {
    if (!wants(x)) return;
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < out_block; ++j) {
        gx[o * in_block + start * inner + j] += gy[o * out_block + j];
      }
    }
  });
  return out;
}

Tensor pad_axis(const Tensor& x, std::size_t axis, std::size_t new_length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || new_length < s[axis]) {
    throw ShapeError("pad_axis: cannot pad axis " + std::to_string(axis) + " of " +
                     shape_str(s) + " to " + std::to_string(new_length));
  }
  Shape out_shape = s;
  out_shape[axis] = new_length;
  Tensor out = make_output(out_shape, {&x});
  const std::size_t outer = outer_of(s, axis), inner = inner_of(s, axis);
  const std::size_t in_block = s[axis] * inner, out_block = new_length * inner;
  const double* xs = data_cptr(x);
  double* y = data_ptr(out);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(xs + o * in_block, xs + (o + 1) * in_block, y + o * out_block);
  }
  record_op(out, {&x}, [x, out, outer, in_block, out_block]() {
    if (!wants(x)) return;
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < in_block; ++j) gx[o * in_block + j] += gy[o * out_block + j];
    }
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.size()) {
    throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor out = make_output(std::move(shape), {&x});
  std::copy(x.values().begin(), x.values().end(), data_ptr(out));
  record_op(out, {&x}, [x, out]() {
    if (!wants(x)) return;
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i];
  });
  return out;
}

Tensor row(const Tensor& x, std::size_t index) {
  if (x.rank() < 1 || index >= x.dim(0)) {
    throw ShapeError("row: index " + std::to_string(index) + " out of range for " +
                     shape_str(x.shape()));
  }
  Shape out_shape(x.shape().begin() + 1, x.shape().end());
  const std::size_t width = shape_numel(out_shape);
  Tensor out = make_output(out_shape, {&x});
  std::copy(data_cptr(x) + index * width, data_cptr(x) + (index + 1) * width,
            data_ptr(out));
  record_op(out, {&x}, [x, out, index, width]() {
    if (!wants(x)) return;
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x) + index * width;
    for (std::size_t i = 0; i < width; ++i) gx[i] += gy[i];
  });
  return out;
}

Tensor stack(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ShapeError("stack: no inputs");
  Shape out_shape{rows.size()};
  out_shape.insert(out_shape.end(), rows.front().shape().begin(), rows.front().shape().end());
  for (const Tensor& r : rows) {
    if (r.shape() != rows.front().shape()) {
      throw ShapeError("stack: mismatched shapes " + shape_str(rows.front().shape()) +
                       " and " + shape_str(r.shape()));
    }
  }
  bool any_grad = false;
  for (const Tensor& r : rows) any_grad = any_grad || r.requires_grad();
  const std::size_t width = rows.front().size();
  Tensor out(out_shape);
  if (any_grad && Tape::current() != nullptr) out.set_requires_grad(true);
  double* y = data_ptr(out);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].values().begin(), rows[i].values().end(), y + i * width);
  }
  if (out.requires_grad()) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const Tensor& r : rows) ins.push_back(r.impl());
    Tape::current()->record(ins, out.impl(), [rows, out, width]() {
      const double* gy = grad_cptr(out);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!wants(rows[i])) continue;
        double* gx = grad_ptr(rows[i]);
        for (std::size_t j = 0; j < width; ++j) gx[j] += gy[i * width + j];
      }
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = make_output(Shape{}, {&x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  data_ptr(out)[0] = acc;
  record_op(out, {&x}, [x, out]() {
    if (!wants(x)) return;
    const double g = grad_cptr(out)[0];
    double* gx = grad_ptr(x);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g;
  });
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor pick(const Tensor& x, std::size_t index) {
  if (index >= x.size()) {
    throw ShapeError("pick: index " + std::to_string(index) + " out of range for " +
                     shape_str(x.shape()));
  }
  Tensor out = make_output(Shape{}, {&x});
  data_ptr(out)[0] = x[index];
  record_op(out, {&x}, [x, out, index]() {
    if (wants(x)) grad_ptr(x)[index] += grad_cptr(out)[0];
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || bias.rank() != 1 || bias.dim(0) != weight.dim(0)) {
    throw ShapeError("linear: weight " + shape_str(weight.shape()) + " and bias " +
                     shape_str(bias.shape()) + " disagree");
  }
  const std::size_t out_dim = weight.dim(0), in_dim = weight.dim(1);
  if (x.rank() < 1 || x.rank() > 2 || x.shape().back() != in_dim) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " does not match weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t n = x.rank() == 2 ? x.dim(0) : 1;
  Shape out_shape = x.rank() == 2 ? Shape{n, out_dim} : Shape{out_dim};
  Tensor out = make_output(out_shape, {&x, &weight, &bias});
  MapMat y(data_ptr(out), n, out_dim);
  y.noalias() = MapConstMat(data_cptr(x), n, in_dim) *
                MapConstMat(data_cptr(weight), out_dim, in_dim).transpose();
  y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(data_cptr(bias), out_dim);
  record_op(out, {&x, &weight, &bias}, [x, weight, bias, out, n, in_dim, out_dim]() {
    MapConstMat gy(grad_cptr(out), n, out_dim);
    if (wants(x)) {
      MapMat(grad_ptr(x), n, in_dim).noalias() +=
          gy * MapConstMat(data_cptr(weight), out_dim, in_dim);
    }
    if (wants(weight)) {
      MapMat(grad_ptr(weight), out_dim, in_dim).noalias() +=
          gy.transpose() * MapConstMat(data_cptr(x), n, in_dim);
    }
    if (wants(bias)) {
      Eigen::Map<Eigen::RowVectorXd>(grad_ptr(bias), out_dim) += gy.colwise().sum();
    }
  });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  if (x.rank() != 3 || weight.rank() != 4 || weight.dim(1) != x.dim(0) ||
      weight.dim(2) != weight.dim(3) || bias.size() != weight.dim(0)) {
    throw ShapeError("conv2d: input " + shape_str(x.shape()) + ", weight " +
                     shape_str(weight.shape()) + ", bias " + shape_str(bias.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d: stride must be positive");
  const std::size_t cin = x.dim(0), w_in = x.dim(1), h_in = x.dim(2);
  const std::size_t cout = weight.dim(0), k = weight.dim(2);
  if (w_in + 2 * pad < k || h_in + 2 * pad < k) {
    throw ShapeError("conv2d: input plane " + shape_str(x.shape()) +
                     " smaller than kernel " + std::to_string(k));
  }
  const std::size_t w_out = (w_in + 2 * pad - k) / stride + 1;
  const std::size_t h_out = (h_in + 2 * pad - k) / stride + 1;
  const std::size_t patch = cin * k * k, plane = w_out * h_out;

  auto cols = std::make_shared<std::vector<double>>(patch * plane, 0.0);
  const double* xs = data_cptr(x);
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t kw = 0; kw < k; ++kw) {
      for (std::size_t kh = 0; kh < k; ++kh) {
        double* dst = cols->data() + ((c * k + kw) * k + kh) * plane;
        for (std::size_t wo = 0; wo < w_out; ++wo) {
          const long wi = static_cast<long>(wo * stride + kw) - static_cast<long>(pad);
          if (wi < 0 || wi >= static_cast<long>(w_in)) continue;
          for (std::size_t ho = 0; ho < h_out; ++ho) {
            const long hi = static_cast<long>(ho * stride + kh) - static_cast<long>(pad);
            if (hi < 0 || hi >= static_cast<long>(h_in)) continue;
            dst[wo * h_out + ho] = xs[(c * w_in + wi) * h_in + hi];
          }
        }
      }
    }
  }
  Tensor out = make_output({cout, w_out, h_out}, {&x, &weight, &bias});
  MapMat y(data_ptr(out), cout, plane);
  y.noalias() = MapConstMat(data_cptr(weight), cout, patch) * MapConstMat(cols->data(), patch, plane);
  y.colwise() += Eigen::Map<const Eigen::VectorXd>(data_cptr(bias), cout);

  record_op(out, {&x, &weight, &bias},
            [x, weight, bias, out, cols, cin, w_in, h_in, cout, k, stride, pad, w_out, h_out,
             patch, plane]() {
              MapConstMat gy(grad_cptr(out), cout, plane);
              if (wants(weight)) {
                MapMat(grad_ptr(weight), cout, patch).noalias() +=
                    gy * MapConstMat(cols->data(), patch, plane).transpose();
              }
              if (wants(bias)) {
                Eigen::Map<Eigen::VectorXd>(grad_ptr(bias), cout) += gy.rowwise().sum();
              }
              if (!wants(x)) return;
              RowMat dcols = MapConstMat(data_cptr(weight), cout, patch).transpose() * gy;
              double* gx = grad_ptr(x);
              for (std::size_t c = 0; c < cin; ++c) {
                for (std::size_t kw = 0; kw < k; ++kw) {
                  for (std::size_t kh = 0; kh < k; ++kh) {
                    const double* src = dcols.data() + ((c * k + kw) * k + kh) * plane;
                    for (std::size_t wo = 0; wo < w_out; ++wo) {
                      const long wi = static_cast<long>(wo * stride + kw) - static_cast<long>(pad);
                      if (wi < 0 || wi >= static_cast<long>(w_in)) continue;
                      for (std::size_t ho = 0; ho < h_out; ++ho) {
                        const long hi =
                            static_cast<long>(ho * stride + kh) - static_cast<long>(pad);
                        if (hi < 0 || hi >= static_cast<long>(h_in)) continue;
                        gx[(c * w_in + wi) * h_in + hi] += src[wo * h_out + ho];
                      }
                    }
                  }
                }
              }
            });
  return out;
}

Tensor max_pool2d(const Tensor& x, std::size_t window) {
  if (x.rank() != 3 || window == 0) throw ShapeError("max_pool2d: bad input " + shape_str(x.shape()));
  const std::size_t c_n = x.dim(0), w_in = x.dim(1), h_in = x.dim(2);
  const std::size_t w_out = w_in / window, h_out = h_in / window;
  if (w_out == 0 || h_out == 0) {
    throw ShapeError("max_pool2d: plane " + shape_str(x.shape()) + " smaller than window " +
                     std::to_string(window));
  }
  Tensor out = make_output({c_n, w_out, h_out}, {&x});
  auto arg = std::make_shared<std::vector<std::size_t>>(out.size());
  const double* xs = data_cptr(x);
  double* y = data_ptr(out);
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t wo = 0; wo < w_out; ++wo) {
      for (std::size_t ho = 0; ho < h_out; ++ho) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_i = 0;
        for (std::size_t dw = 0; dw < window; ++dw) {
          for (std::size_t dh = 0; dh < window; ++dh) {
            const std::size_t i = (c * w_in + wo * window + dw) * h_in + ho * window + dh;
            if (xs[i] > best) {
              best = xs[i];
              best_i = i;
            }
          }
        }
        const std::size_t o = (c * w_out + wo) * h_out + ho;
        y[o] = best;
        (*arg)[o] = best_i;
      }
    }
  }
  record_op(out, {&x}, [x, out, arg]() {
    if (!wants(x)) return;
    const double* gy = grad_cptr(out);
    double* gx = grad_ptr(x);
    for (std::size_t o = 0; o < arg->size(); ++o) gx[(*arg)[o]] += gy[o];
  });
  return out;
}

Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    double eps, const ChannelStats* running, ChannelStats* batch_stats) {
  if (x.rank() != 3 || gamma.size() != x.dim(0) || beta.size() != x.dim(0)) {
    throw ShapeError("batch_norm2d: input " + shape_str(x.shape()) + " with affine of " +
                     std::to_string(gamma.size()) + " channels");
  }
  const std::size_t c_n = x.dim(0), plane = x.dim(1) * x.dim(2);
  ChannelStats stats;
  const double* xs = data_cptr(x);
  if (running != nullptr) {
    if (running->mean.size() != c_n || running->var.size() != c_n) {
      throw ShapeError("batch_norm2d: running statistics have wrong channel count");
    }
    stats = *running;
  } else {
    stats.mean.assign(c_n, 0.0);
    stats.var.assign(c_n, 0.0);
    for (std::size_t c = 0; c < c_n; ++c) {
      double mu = 0.0;
      for (std::size_t i = 0; i < plane; ++i) mu += xs[c * plane + i];
      mu /= static_cast<double>(plane);
      double var = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = xs[c * plane + i] - mu;
        var += d * d;
      }
      stats.mean[c] = mu;
      stats.var[c] = var / static_cast<double>(plane);
    }
    if (batch_stats != nullptr) *batch_stats = stats;
  }
  Tensor out = make_output(x.shape(), {&x, &gamma, &beta});
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(c_n);
  double* y = data_ptr(out);
  for (std::size_t c = 0; c < c_n; ++c) {
    const double is = 1.0 / std::sqrt(stats.var[c] + eps);
    (*inv_std)[c] = is;
    for (std::size_t i = 0; i < plane; ++i) {
      const double h = (xs[c * plane + i] - stats.mean[c]) * is;
      (*xhat)[c * plane + i] = h;
      y[c * plane + i] = gamma[c] * h + beta[c];
    }
  }
  const bool batch_mode = running == nullptr;
  record_op(out, {&x, &gamma, &beta},
            [x, gamma, beta, out, xhat, inv_std, c_n, plane, batch_mode]() {
              const double* gy = grad_cptr(out);
              const auto& h = *xhat;
              for (std::size_t c = 0; c < c_n; ++c) {
                double sg = 0.0, sgh = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                  sg += gy[c * plane + i];
                  sgh += gy[c * plane + i] * h[c * plane + i];
                }
                if (wants(gamma)) grad_ptr(gamma)[c] += sgh;
                if (wants(beta)) grad_ptr(beta)[c] += sg;
                if (!wants(x)) continue;
                double* gx = grad_ptr(x);
                const double g = gamma[c];
                const double is = (*inv_std)[c];
                if (!batch_mode) {
                  for (std::size_t i = 0; i < plane; ++i) gx[c * plane + i] += gy[c * plane + i] * g * is;
                  continue;
                }
                const double m1 = g * sg / static_cast<double>(plane);
                const double m2 = g * sgh / static_cast<double>(plane);
                for (std::size_t i = 0; i < plane; ++i) {
                  gx[c * plane + i] += is * (gy[c * plane + i] * g - m1 - h[c * plane + i] * m2);
                }
              }
            });
  return out;
}

}  // namespace htr::ad
