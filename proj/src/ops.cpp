// Copyright 2026 The CANet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "canet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "op_support.hpp"

namespace canet {
namespace {

struct PoolGeometry {
  std::size_t n, c, h, w, oh, ow;
  long k, stride, pad;
};

template <typename T>
PoolGeometry pool_geometry(const Tensor<T>& input, int k, int stride,
                           int padding, const char* op) {
  const Shape& s = input.shape();
  require(k >= 1 && stride >= 1 && padding >= 0, ErrorCode::kInvalidArgument,
          std::string(op) + ": k and stride must be >= 1, padding >= 0");
  require(2 * padding <= k, ErrorCode::kInvalidArgument,
          std::string(op) + ": padding must be at most k/2");
  const long oh_num = static_cast<long>(s.h) + 2L * padding - k;
  const long ow_num = static_cast<long>(s.w) + 2L * padding - k;
  require(oh_num >= 0 && ow_num >= 0, ErrorCode::kShapeMismatch,
          std::string(op) + ": output dimension would be non-positive for " +
              s.str());
  return PoolGeometry{s.n,
                      s.c,
                      s.h,
                      s.w,
                      static_cast<std::size_t>(oh_num / stride + 1),
                      static_cast<std::size_t>(ow_num / stride + 1),
                      k,
                      stride,
                      padding};
}

template <typename T, typename Fn, typename Dfn>
Tensor<T> unary(const Tensor<T>& input, Fn f, Dfn df, const char* name) {
  Tensor<T> out(input.shape());
  const T* x = input.ptr();
  T* y = out.mutable_ptr();
  const std::size_t size = input.size();
  for (std::size_t i = 0; i < size; ++i) y[i] = f(x[i]);
  detail::check_finite(out, name);
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi, df, size]() {
      T* gx = detail::grad_of(xi);
      const T* go = oi->grad.data();
      for (std::size_t i = 0; i < size; ++i) {
        gx[i] += go[i] * df(xi->data[i], oi->data[i]);
      }
    });
  }
  return out;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int k, int stride, int padding) {
  const PoolGeometry g = pool_geometry(input, k, stride, padding, "maxpool2d");
  Tensor<T> out(Shape{g.n, g.c, g.oh, g.ow});
  // Flat input index of each output's winner.
  std::vector<std::size_t> argmax(out.size());
  const T* x = input.ptr();
  T* y = out.mutable_ptr();
  std::size_t o = 0;
  for (std::size_t p = 0; p < g.n * g.c; ++p) {
    const std::size_t base = p * g.h * g.w;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox, ++o) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t best_idx = base;
        bool found = false;
        for (long ky = 0; ky < g.k; ++ky) {
          const long iy = static_cast<long>(oy) * g.stride - g.pad + ky;
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (long kx = 0; kx < g.k; ++kx) {
            const long ix = static_cast<long>(ox) * g.stride - g.pad + kx;
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            const std::size_t idx = base + iy * g.w + ix;
            if (!found || x[idx] > best) {
              best = x[idx];
              best_idx = idx;
              found = true;
            }
          }
        }
        y[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  detail::check_finite(out, "maxpool2d");
  if (BranchTrace::active()) {
    for (std::size_t i : argmax) BranchTrace::fold(i);
  }
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi, argmax = std::move(argmax)]() {
      T* gx = detail::grad_of(xi);
      const T* go = oi->grad.data();
      for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, int k, int stride, int padding) {
  const PoolGeometry g = pool_geometry(input, k, stride, padding, "avgpool2d");
  Tensor<T> out(Shape{g.n, g.c, g.oh, g.ow});
  const T* x = input.ptr();
  T* y = out.mutable_ptr();
  auto window = [g](std::size_t oy, std::size_t ox, long& y0, long& y1,
                    long& x0, long& x1) {
    y0 = std::max(0L, static_cast<long>(oy) * g.stride - g.pad);
    x0 = std::max(0L, static_cast<long>(ox) * g.stride - g.pad);
    y1 = std::min(static_cast<long>(g.h),
                  static_cast<long>(oy) * g.stride - g.pad + g.k);
    x1 = std::min(static_cast<long>(g.w),
                  static_cast<long>(ox) * g.stride - g.pad + g.k);
  };
  std::size_t o = 0;
  for (std::size_t p = 0; p < g.n * g.c; ++p) {
    const T* plane = x + p * g.h * g.w;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox, ++o) {
        long y0, y1, x0, x1;
        window(oy, ox, y0, y1, x0, x1);
        T acc = T(0);
        for (long iy = y0; iy < y1; ++iy) {
          for (long ix = x0; ix < x1; ++ix) acc += plane[iy * g.w + ix];
        }
        y[o] = acc / static_cast<T>((y1 - y0) * (x1 - x0));
      }
    }
  }
  detail::check_finite(out, "avgpool2d");
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi, g, window]() {
      T* gx = detail::grad_of(xi);
      const T* go = oi->grad.data();
      std::size_t o = 0;
      for (std::size_t p = 0; p < g.n * g.c; ++p) {
        T* plane = gx + p * g.h * g.w;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          for (std::size_t ox = 0; ox < g.ow; ++ox, ++o) {
            long y0, y1, x0, x1;
            window(oy, ox, y0, y1, x0, x1);
            const T share = go[o] / static_cast<T>((y1 - y0) * (x1 - x0));
            for (long iy = y0; iy < y1; ++iy) {
              for (long ix = x0; ix < x1; ++ix) plane[iy * g.w + ix] += share;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  const Shape& s = input.shape();
  const std::size_t plane = s.plane();
  require(plane > 0, ErrorCode::kShapeMismatch, "global_avg_pool: empty plane");
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const T* src = input.ptr() + p * plane;
    T acc = T(0);
    for (std::size_t i = 0; i < plane; ++i) acc += src[i];
    out.mutable_ptr()[p] = acc / static_cast<T>(plane);
  }
  detail::check_finite(out, "global_avg_pool");
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi, plane]() {
      T* gx = detail::grad_of(xi);
      const std::size_t count = oi->data.size();
      for (std::size_t p = 0; p < count; ++p) {
        const T share = oi->grad[p] / static_cast<T>(plane);
        for (std::size_t i = 0; i < plane; ++i) gx[p * plane + i] += share;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& input) {
  const Shape& s = input.shape();
  const std::size_t plane = s.plane();
  require(plane > 0, ErrorCode::kShapeMismatch, "global_max_pool: empty plane");
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  std::vector<std::size_t> argmax(s.n * s.c);
  for (std::size_t p = 0; p < s.n * s.c; ++p) {
    const T* src = input.ptr() + p * plane;
    std::size_t best = 0;
    for (std::size_t i = 1; i < plane; ++i) {
      if (src[i] > src[best]) best = i;
    }
    out.mutable_ptr()[p] = src[best];
    argmax[p] = p * plane + best;
  }
  detail::check_finite(out, "global_max_pool");
  if (BranchTrace::active()) {
    for (std::size_t i : argmax) BranchTrace::fold(i);
  }
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi, argmax = std::move(argmax)]() {
      T* gx = detail::grad_of(xi);
      for (std::size_t p = 0; p < argmax.size(); ++p) {
        gx[argmax[p]] += oi->grad[p];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> channel_reduce_max(const Tensor<T>& input) {
  const Shape& s = input.shape();
  require(s.c >= 1, ErrorCode::kShapeMismatch,
          "channel_reduce_max: needs at least one channel");
  const std::size_t plane = s.plane();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  std::vector<std::size_t> argmax(s.n * plane);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* base = input.ptr() + n * s.c * plane;
    for (std::size_t i = 0; i < plane; ++i) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < s.c; ++c) {
        if (base[c * plane + i] > base[best * plane + i]) best = c;
      }
      out.mutable_ptr()[n * plane + i] = base[best * plane + i];
      argmax[n * plane + i] = (n * s.c + best) * plane + i;
    }
  }
  detail::check_finite(out, "channel_reduce_max");
  if (BranchTrace::active()) {
    for (std::size_t i : argmax) BranchTrace::fold(i);
  }
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi, argmax = std::move(argmax)]() {
      T* gx = detail::grad_of(xi);
      for (std::size_t i = 0; i < argmax.size(); ++i) {
        gx[argmax[i]] += oi->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> channel_reduce_mean(const Tensor<T>& input) {
  const Shape& s = input.shape();
  require(s.c >= 1, ErrorCode::kShapeMismatch,
          "channel_reduce_mean: needs at least one channel");
  const std::size_t plane = s.plane();
  Tensor<T> out(Shape{s.n, 1, s.h, s.w});
  const T inv = T(1) / static_cast<T>(s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* base = input.ptr() + n * s.c * plane;
    T* dst = out.mutable_ptr() + n * plane;
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::size_t i = 0; i < plane; ++i) dst[i] += base[c * plane + i];
    }
    for (std::size_t i = 0; i < plane; ++i) dst[i] *= inv;
  }
  detail::check_finite(out, "channel_reduce_mean");
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    const Shape shape = s;
    detail::record(out, [xi, oi, shape, plane, inv]() {
      T* gx = detail::grad_of(xi);
      for (std::size_t n = 0; n < shape.n; ++n) {
        const T* go = oi->grad.data() + n * plane;
        for (std::size_t c = 0; c < shape.c; ++c) {
          T* dst = gx + (n * shape.c + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) dst[i] += go[i] * inv;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument,
          "concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  std::size_t channels = 0;
  for (const Tensor<T>& p : parts) {
    const Shape& s = p.shape();
    require(s.n == first.n && s.h == first.h && s.w == first.w,
            ErrorCode::kShapeMismatch,
            "concat_channels: " + s.str() + " incompatible with " +
                first.str());
    channels += s.c;
  }
  const std::size_t plane = first.plane();
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    T* dst = out.mutable_ptr() + n * channels * plane;
    for (const Tensor<T>& p : parts) {
      const std::size_t chunk = p.shape().c * plane;
      std::copy_n(p.ptr() + n * chunk, chunk, dst);
      dst += chunk;
    }
  }
  bool grad = false;
  if (active_tape<T>() != nullptr) {
    for (const Tensor<T>& p : parts) grad = grad || p.requires_grad();
  }
  if (grad) {
    std::vector<std::shared_ptr<TensorImpl<T>>> impls;
    for (const Tensor<T>& p : parts) impls.push_back(p.impl());
    auto oi = out.impl();
    const std::size_t batch = first.n;
    detail::record(out, [impls = std::move(impls), oi, batch, channels,
                         plane]() {
      for (std::size_t n = 0; n < batch; ++n) {
        const T* src = oi->grad.data() + n * channels * plane;
        for (const auto& pi : impls) {
          const std::size_t chunk = pi->shape.c * plane;
          if (T* gp = detail::grad_of(pi)) {
            T* dst = gp + n * chunk;
            for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
          }
          src += chunk;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  return unary(
      input, [](T x) { return stable_sigmoid(x); },
      [](T, T y) { return y * (T(1) - y); }, "sigmoid");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  if (BranchTrace::active()) {
    for (T x : input.data()) BranchTrace::fold(x > T(0));
  }
  return unary(
      input, [](T x) { return x <= T(0) ? T(0) : x; },  // NaN passes through
      [](T x, T) { return x > T(0) ? T(1) : T(0); }, "relu");
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& input) {
  if (BranchTrace::active()) {
    for (T x : input.data()) BranchTrace::fold((x > T(0)) + (x >= T(6)));
  }
  return unary(
      input, [](T x) { return std::min(std::max(x, T(0)), T(6)); },
      [](T x, T) { return (x > T(0) && x < T(6)) ? T(1) : T(0); }, "relu6");
}

template <typename T>
Tensor<T> one_minus(const Tensor<T>& input) {
  return unary(
      input, [](T x) { return T(1) - x; }, [](T, T) { return T(-1); },
      "one_minus");
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.shape() == b.shape(), ErrorCode::kShapeMismatch,
          "add: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.shape());
  const std::size_t size = a.size();
  for (std::size_t i = 0; i < size; ++i) {
    out.mutable_ptr()[i] = a.ptr()[i] + b.ptr()[i];
  }
  detail::check_finite(out, "add");
  if (detail::wants_grad<T>({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    detail::record(out, [ai, bi, oi, size]() {
      const T* go = oi->grad.data();
      if (T* ga = detail::grad_of(ai)) {
        for (std::size_t i = 0; i < size; ++i) ga[i] += go[i];
      }
      if (T* gb = detail::grad_of(bi)) {
        for (std::size_t i = 0; i < size; ++i) gb[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  auto compatible = [](std::size_t x, std::size_t y) { return y == x || y == 1; };
  require(compatible(as.n, bs.n) && compatible(as.c, bs.c) &&
              compatible(as.h, bs.h) && compatible(as.w, bs.w),
          ErrorCode::kShapeMismatch,
          "mul: cannot broadcast " + bs.str() + " onto " + as.str());
  // Strides into b, zero along broadcast axes.
  const std::size_t sw = bs.w == 1 ? 0 : 1;
  const std::size_t sh = bs.h == 1 ? 0 : bs.w;
  const std::size_t sc = bs.c == 1 ? 0 : bs.w * bs.h;
  const std::size_t sn = bs.n == 1 ? 0 : bs.w * bs.h * bs.c;
  auto for_each = [as, sw, sh, sc, sn](auto&& fn) {
    std::size_t i = 0;
    for (std::size_t n = 0; n < as.n; ++n) {
      for (std::size_t c = 0; c < as.c; ++c) {
        for (std::size_t h = 0; h < as.h; ++h) {
          const std::size_t row = n * sn + c * sc + h * sh;
          for (std::size_t w = 0; w < as.w; ++w, ++i) fn(i, row + w * sw);
        }
      }
    }
  };
  Tensor<T> out(as);
  const T* x = a.ptr();
  const T* y = b.ptr();
  T* z = out.mutable_ptr();
  for_each([&](std::size_t i, std::size_t j) { z[i] = x[i] * y[j]; });
  detail::check_finite(out, "mul");
  if (detail::wants_grad<T>({&a, &b})) {
    auto ai = a.impl();
    auto bi = b.impl();
    auto oi = out.impl();
    detail::record(out, [ai, bi, oi, for_each]() {
      const T* go = oi->grad.data();
      T* ga = detail::grad_of(ai);
      T* gb = detail::grad_of(bi);
      const T* x = ai->data.data();
      const T* y = bi->data.data();
      for_each([&](std::size_t i, std::size_t j) {
        if (ga != nullptr) ga[i] += go[i] * y[j];
        if (gb != nullptr) gb[j] += go[i] * x[i];
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& input) {
  T acc = T(0);
  for (T v : input.data()) acc += v;
  Tensor<T> out(Shape{1, 1, 1, 1}, acc);
  detail::check_finite(out, "sum");
  if (detail::wants_grad<T>({&input})) {
    auto xi = input.impl();
    auto oi = out.impl();
    detail::record(out, [xi, oi]() {
      T* gx = detail::grad_of(xi);
      const T g = oi->grad[0];
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  const std::size_t in = is.c * is.h * is.w;
  const std::size_t out_features = ws.n;
  require(ws.c * ws.h * ws.w == in, ErrorCode::kShapeMismatch,
          "linear: weight expects " + std::to_string(ws.c * ws.h * ws.w) +
              " features, input has " + std::to_string(in));
  if (bias.defined()) {
    require(bias.size() == out_features, ErrorCode::kShapeMismatch,
            "linear: bias length does not match output features");
  }
  Tensor<T> out(Shape{is.n, out_features, 1, 1});
  for (std::size_t n = 0; n < is.n; ++n) {
    const T* x = input.ptr() + n * in;
    for (std::size_t o = 0; o < out_features; ++o) {
      const T* wrow = weight.ptr() + o * in;
      T acc = bias.defined() ? bias.ptr()[o] : T(0);
      for (std::size_t i = 0; i < in; ++i) acc += wrow[i] * x[i];
      out.mutable_ptr()[n * out_features + o] = acc;
    }
  }
  detail::check_finite(out, "linear");
  if (detail::wants_grad<T>({&input, &weight, &bias})) {
    auto xi = input.impl();
    auto wi = weight.impl();
    auto bi = bias.impl();
    auto oi = out.impl();
    const std::size_t batch = is.n;
    detail::record(out, [xi, wi, bi, oi, batch, in, out_features]() {
      T* gx = detail::grad_of(xi);
      T* gw = detail::grad_of(wi);
      T* gb = detail::grad_of(bi);
      for (std::size_t n = 0; n < batch; ++n) {
        const T* x = xi->data.data() + n * in;
        for (std::size_t o = 0; o < out_features; ++o) {
          const T g = oi->grad[n * out_features + o];
          if (gb != nullptr) gb[o] += g;
          if (gw != nullptr) {
            T* gwrow = gw + o * in;
            for (std::size_t i = 0; i < in; ++i) gwrow[i] += g * x[i];
          }
          if (gx != nullptr) {
            const T* wrow = wi->data.data() + o * in;
            T* gxrow = gx + n * in;
            for (std::size_t i = 0; i < in; ++i) gxrow[i] += g * wrow[i];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const LabelMap& target) {
  const Shape& s = logits.shape();
  require(s.c == 2, ErrorCode::kShapeMismatch,
          "softmax_cross_entropy: logits must have 2 channels, got " +
              std::to_string(s.c));
  require(target.n == s.n && target.h == s.h && target.w == s.w &&
              target.values.size() == s.n * s.h * s.w,
          ErrorCode::kShapeMismatch,
          "softmax_cross_entropy: label map does not match logits " + s.str());
  for (std::uint8_t v : target.values) {
    require(v <= 1, ErrorCode::kInvalidArgument,
            "softmax_cross_entropy: target value out of range");
  }
  const std::size_t plane = s.plane();
  const std::size_t pixels = s.n * plane;
  double acc = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* l0 = logits.ptr() + n * 2 * plane;
    const T* l1 = l0 + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const T m = std::max(l0[i], l1[i]);
      const T lse = m + std::log(std::exp(l0[i] - m) + std::exp(l1[i] - m));
      const T picked = target.values[n * plane + i] ? l1[i] : l0[i];
      acc += static_cast<double>(lse - picked);
    }
  }
  Tensor<T> out(Shape{1, 1, 1, 1},
                static_cast<T>(acc / static_cast<double>(pixels)));
  detail::check_finite(out, "softmax_cross_entropy");
  if (detail::wants_grad<T>({&logits})) {
    auto li = logits.impl();
    auto oi = out.impl();
    const std::size_t batch = s.n;
    detail::record(out, [li, oi, labels = target.values, batch, plane,
                         pixels]() {
      T* gl = detail::grad_of(li);
      const T scale = oi->grad[0] / static_cast<T>(pixels);
      for (std::size_t n = 0; n < batch; ++n) {
        const T* l0 = li->data.data() + n * 2 * plane;
        const T* l1 = l0 + plane;
        T* g0 = gl + n * 2 * plane;
        T* g1 = g0 + plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T p1 = stable_sigmoid(l1[i] - l0[i]);
          const T y = labels[n * plane + i] ? T(1) : T(0);
          g1[i] += scale * (p1 - y);
          g0[i] += scale * (y - p1);
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> hflip(const Tensor<T>& input) {
  const Shape& s = input.shape();
  Tensor<T> out(s);
  for (std::size_t row = 0; row < s.n * s.c * s.h; ++row) {
    const T* src = input.ptr() + row * s.w;
    T* dst = out.mutable_ptr() + row * s.w;
    for (std::size_t x = 0; x < s.w; ++x) dst[x] = src[s.w - 1 - x];
  }
  return out;
}

void hflip(LabelMap& labels) {
  for (std::size_t row = 0; row < labels.n * labels.h; ++row) {
    auto first = labels.values.begin() + static_cast<long>(row * labels.w);
    std::reverse(first, first + static_cast<long>(labels.w));
  }
}

#define CANET_INSTANTIATE(T)                                                  \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int, int);          \
  template Tensor<T> avgpool2d<T>(const Tensor<T>&, int, int, int);          \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                   \
  template Tensor<T> global_max_pool<T>(const Tensor<T>&);                   \
  template Tensor<T> channel_reduce_max<T>(const Tensor<T>&);                \
  template Tensor<T> channel_reduce_mean<T>(const Tensor<T>&);               \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);         \
  template Tensor<T> sigmoid<T>(const Tensor<T>&);                           \
  template Tensor<T> relu<T>(const Tensor<T>&);                              \
  template Tensor<T> relu6<T>(const Tensor<T>&);                             \
  template Tensor<T> one_minus<T>(const Tensor<T>&);                         \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> sum<T>(const Tensor<T>&);                               \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&,           \
                               const Tensor<T>&);                            \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&,              \
                                              const LabelMap&);              \
  template Tensor<T> hflip<T>(const Tensor<T>&);

CANET_INSTANTIATE(float)
CANET_INSTANTIATE(double)

}  // namespace canet
