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

// Convolution and transposed convolution via im2col + GEMM.

#include <Eigen/Core>
#include <vector>

#include "canet/ops.hpp"
#include "op_support.hpp"

namespace canet {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct Geometry {
  long channels, height, width;  // image side
  long k, stride, pad;
  long out_h, out_w;             // column side
};

// cols is (channels*k*k, out_h*out_w).
template <typename T>
void im2col(const T* img, const Geometry& g, T* cols) {
  const long positions = g.out_h * g.out_w;
  for (long c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (long ki = 0; ki < g.k; ++ki) {
      for (long kj = 0; kj < g.k; ++kj) {
        T* row = cols + ((c * g.k + ki) * g.k + kj) * positions;
        for (long oy = 0; oy < g.out_h; ++oy) {
          const long iy = oy * g.stride - g.pad + ki;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            for (long ox = 0; ox < g.out_w; ++ox) dst[ox] = T(0);
            continue;
          }
          const T* src = plane + iy * g.width;
          for (long ox = 0; ox < g.out_w; ++ox) {
            const long ix = ox * g.stride - g.pad + kj;
            dst[ox] = (ix >= 0 && ix < g.width) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-accumulates columns into the image.
template <typename T>
void col2im(const T* cols, const Geometry& g, T* img) {
  const long positions = g.out_h * g.out_w;
  for (long c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (long ki = 0; ki < g.k; ++ki) {
      for (long kj = 0; kj < g.k; ++kj) {
        const T* row = cols + ((c * g.k + ki) * g.k + kj) * positions;
        for (long oy = 0; oy < g.out_h; ++oy) {
          const long iy = oy * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + iy * g.width;
          for (long ox = 0; ox < g.out_w; ++ox) {
            const long ix = ox * g.stride - g.pad + kj;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const Geometry& g) {
  return g.k == 1 && g.stride == 1 && g.pad == 0;
}

template <typename T>
void add_bias(T* out, const T* bias, long channels, long plane) {
  for (long c = 0; c < channels; ++c) {
    const T b = bias[c];
    T* p = out + c * plane;
    for (long i = 0; i < plane; ++i) p[i] += b;
  }
}

template <typename T>
void accumulate_bias_grad(const T* gout, T* gbias, long n, long channels,
                          long plane) {
  for (long s = 0; s < n; ++s) {
    for (long c = 0; c < channels; ++c) {
      const T* p = gout + (s * channels + c) * plane;
      T acc = T(0);
      for (long i = 0; i < plane; ++i) acc += p[i];
      gbias[c] += acc;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  require(stride >= 1 && padding >= 0, ErrorCode::kInvalidArgument,
          "conv2d: stride must be >= 1 and padding >= 0");
  require(ws.h == ws.w, ErrorCode::kInvalidArgument,
          "conv2d: kernel must be square");
  require(is.c == ws.c, ErrorCode::kShapeMismatch,
          "conv2d: input has " + std::to_string(is.c) +
              " channels, weight expects " + std::to_string(ws.c));
  const long k = static_cast<long>(ws.h);
  const long oh_num = static_cast<long>(is.h) + 2L * padding - k;
  const long ow_num = static_cast<long>(is.w) + 2L * padding - k;
  require(oh_num >= 0 && ow_num >= 0, ErrorCode::kShapeMismatch,
          "conv2d: output dimension would be non-positive for input " +
              is.str());
  if (bias.defined()) {
    require(bias.size() == ws.n, ErrorCode::kShapeMismatch,
            "conv2d: bias length does not match output channels");
  }

  Geometry g{static_cast<long>(is.c), static_cast<long>(is.h),
             static_cast<long>(is.w), k, stride, padding,
             oh_num / stride + 1, ow_num / stride + 1};
  const long cout = static_cast<long>(ws.n);
  const long ckk = g.channels * k * k;
  const long positions = g.out_h * g.out_w;
  const long in_plane = g.channels * g.height * g.width;
  const long batch = static_cast<long>(is.n);

  Tensor<T> out(Shape{is.n, ws.n, static_cast<std::size_t>(g.out_h),
                      static_cast<std::size_t>(g.out_w)});
  std::vector<T> cols(is_pointwise(g) ? 0 : ckk * positions);
  CMapMat<T> wmat(weight.ptr(), cout, ckk);
  for (long s = 0; s < batch; ++s) {
    const T* src = input.ptr() + s * in_plane;
    if (!is_pointwise(g)) {
      im2col(src, g, cols.data());
      src = cols.data();
    }
    MapMat<T> omat(out.mutable_ptr() + s * cout * positions, cout, positions);
    omat.noalias() = wmat * CMapMat<T>(src, ckk, positions);
    if (bias.defined()) {
      add_bias(out.mutable_ptr() + s * cout * positions, bias.ptr(), cout,
               positions);
    }
  }
  detail::check_finite(out, "conv2d");

  if (detail::wants_grad<T>({&input, &weight, &bias})) {
    auto xi = input.impl();
    auto wi = weight.impl();
    auto bi = bias.impl();
    auto oi = out.impl();
    detail::record(out, [xi, wi, bi, oi, g, cout, ckk, positions, in_plane,
                         batch]() {
      T* gx = detail::grad_of(xi);
      T* gw = detail::grad_of(wi);
      T* gb = detail::grad_of(bi);
      const T* gout = oi->grad.data();
      std::vector<T> cols(is_pointwise(g) ? 0 : ckk * positions);
      std::vector<T> dcols(gx != nullptr && !is_pointwise(g) ? ckk * positions
                                                             : 0);
      CMapMat<T> wmat(wi->data.data(), cout, ckk);
      for (long s = 0; s < batch; ++s) {
        CMapMat<T> gomat(gout + s * cout * positions, cout, positions);
        if (gw != nullptr) {
          const T* src = xi->data.data() + s * in_plane;
          if (!is_pointwise(g)) {
            im2col(src, g, cols.data());
            src = cols.data();
          }
          MapMat<T> gwmat(gw, cout, ckk);
          gwmat.noalias() += gomat * CMapMat<T>(src, ckk, positions).transpose();
        }
        if (gx != nullptr) {
          if (is_pointwise(g)) {
            MapMat<T> gxmat(gx + s * in_plane, ckk, positions);
            gxmat.noalias() += wmat.transpose() * gomat;
          } else {
            MapMat<T> dmat(dcols.data(), ckk, positions);
            dmat.noalias() = wmat.transpose() * gomat;
            col2im(dcols.data(), g, gx + s * in_plane);
          }
        }
      }
      if (gb != nullptr) accumulate_bias_grad(gout, gb, batch, cout, positions);
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride) {
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  require(stride >= 1, ErrorCode::kInvalidArgument,
          "conv_transpose2d: stride must be >= 1");
  require(ws.h == ws.w, ErrorCode::kInvalidArgument,
          "conv_transpose2d: kernel must be square");
  require(is.c == ws.n, ErrorCode::kShapeMismatch,
          "conv_transpose2d: input has " + std::to_string(is.c) +
              " channels, weight expects " + std::to_string(ws.n));
  const long k = static_cast<long>(ws.h);
  const long cin = static_cast<long>(ws.n);
  const long cout = static_cast<long>(ws.c);
  if (bias.defined()) {
    require(bias.size() == ws.c, ErrorCode::kShapeMismatch,
            "conv_transpose2d: bias length does not match output channels");
  }
  const long in_h = static_cast<long>(is.h);
  const long in_w = static_cast<long>(is.w);
  const long out_h = (in_h - 1) * stride + k;
  const long out_w = (in_w - 1) * stride + k;
  // Seen from the output image, the input grid is a strided conv's output.
  Geometry g{cout, out_h, out_w, k, stride, 0, in_h, in_w};
  const long ckk = cout * k * k;
  const long positions = in_h * in_w;
  const long out_plane = cout * out_h * out_w;
  const long batch = static_cast<long>(is.n);

  Tensor<T> out(Shape{is.n, ws.c, static_cast<std::size_t>(out_h),
                      static_cast<std::size_t>(out_w)});
  std::vector<T> cols(ckk * positions);
  CMapMat<T> wmat(weight.ptr(), cin, ckk);
  for (long s = 0; s < batch; ++s) {
    MapMat<T> cmat(cols.data(), ckk, positions);
    cmat.noalias() = wmat.transpose() *
                     CMapMat<T>(input.ptr() + s * cin * positions, cin, positions);
    col2im(cols.data(), g, out.mutable_ptr() + s * out_plane);
    if (bias.defined()) {
      add_bias(out.mutable_ptr() + s * out_plane, bias.ptr(), cout,
               out_h * out_w);
    }
  }
  detail::check_finite(out, "conv_transpose2d");

  if (detail::wants_grad<T>({&input, &weight, &bias})) {
    auto xi = input.impl();
    auto wi = weight.impl();
    auto bi = bias.impl();
    auto oi = out.impl();
    detail::record(out, [xi, wi, bi, oi, g, cin, ckk, positions, out_plane,
                         batch]() {
      T* gx = detail::grad_of(xi);
      T* gw = detail::grad_of(wi);
      T* gb = detail::grad_of(bi);
      std::vector<T> dcols(ckk * positions);
      CMapMat<T> wmat(wi->data.data(), cin, ckk);
      for (long s = 0; s < batch; ++s) {
        im2col(oi->grad.data() + s * out_plane, g, dcols.data());
        CMapMat<T> dmat(dcols.data(), ckk, positions);
        if (gx != nullptr) {
          MapMat<T> gxmat(gx + s * cin * positions, cin, positions);
          gxmat.noalias() += wmat * dmat;
        }
        if (gw != nullptr) {
          MapMat<T> gwmat(gw, cin, ckk);
          gwmat.noalias() +=
              CMapMat<T>(xi->data.data() + s * cin * positions, cin, positions) *
              dmat.transpose();
        }
      }
      if (gb != nullptr) {
        accumulate_bias_grad(oi->grad.data(), gb, batch, g.channels,
                             g.height * g.width);
      }
    });
  }
  return out;
}

#define CANET_INSTANTIATE(T)                                                 \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&,           \
                               const Tensor<T>&, int, int);                  \
  template Tensor<T> conv_transpose2d<T>(const Tensor<T>&, const Tensor<T>&, \
                                         const Tensor<T>&, int);

CANET_INSTANTIATE(float)
CANET_INSTANTIATE(double)

}  // namespace canet
