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

#ifndef CANET_OPS_HPP_
#define CANET_OPS_HPP_

#include <cstdint>
#include <span>
#include <vector>

#include "canet/tensor.hpp"

// Differentiable primitives. Every op records itself on the active tape when
// a tape is installed and at least one input requires a gradient.

namespace canet {

/// Per-pixel binary labels, (n, h, w) row-major, values in {0, 1}.
struct LabelMap {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> values;
};

/// weight (c_out, c_in, k, k); bias (1, c_out, 1, 1) or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding);

/// weight (c_in, c_out, k, k); bias (1, c_out, 1, 1) or undefined.
/// Output spatial size is (h - 1) * stride + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride);

/// Gradient goes to the first maximal element in row-major window order.
template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int k, int stride, int padding);

/// Padded positions are excluded from the divisor.
template <typename T>
Tensor<T> avgpool2d(const Tensor<T>& input, int k, int stride, int padding);

/// (n, c, h, w) -> (n, c, 1, 1)
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);
template <typename T>
Tensor<T> global_max_pool(const Tensor<T>& input);

/// (n, c, h, w) -> (n, 1, h, w)
template <typename T>
Tensor<T> channel_reduce_max(const Tensor<T>& input);
template <typename T>
Tensor<T> channel_reduce_mean(const Tensor<T>& input);

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);
template <typename T>
Tensor<T> concat_channels(std::initializer_list<Tensor<T>> parts) {
  std::vector<Tensor<T>> v(parts);
  return concat_channels<T>(std::span<const Tensor<T>>(v));
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);
template <typename T>
Tensor<T> relu(const Tensor<T>& input);
template <typename T>
Tensor<T> relu6(const Tensor<T>& input);
/// 1 - x
template <typename T>
Tensor<T> one_minus(const Tensor<T>& input);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

/// Elementwise product. `b` may broadcast along any axis where it has
/// extent 1 (per-channel gates (n,c,1,1), spatial gates (n,1,h,w)).
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

/// Sum of all elements, shape (1,1,1,1).
template <typename T>
Tensor<T> sum(const Tensor<T>& input);

/// Treats each sample as a flat feature vector of c*h*w values.
/// weight (out, in, 1, 1); bias (1, out, 1, 1) or undefined.
/// Output (n, out, 1, 1).
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias);

/// Mean over every pixel of every sample of the two-class softmax
/// cross-entropy. Returns shape (1,1,1,1).
template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const LabelMap& target);

/// Mirror along the width axis. Not differentiable; data augmentation only.
template <typename T>
Tensor<T> hflip(const Tensor<T>& input);
void hflip(LabelMap& labels);

}  // namespace canet

#endif  // CANET_OPS_HPP_
