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

#ifndef CANET_BLOCKS_HPP_
#define CANET_BLOCKS_HPP_

#include <cstdint>
#include <random>
#include <string>

#include "canet/batchnorm.hpp"
#include "canet/ops.hpp"
#include "canet/tensor.hpp"

namespace canet {

enum class Activation { kNone, kRelu, kRelu6 };

/// How the ICM block pools its entry features before the SE stage:
/// per-pixel max/mean across channels, or 3x3 same-size spatial windows.
enum class PoolingMode { kChannel, kSpatial };

/// Which BN entry a forward pass reads, and whether it may use batch
/// statistics. Entries whose gamma is frozen always run in eval mode.
struct BNRoute {
  std::string key;
  Mode mode = Mode::kEval;
};

/// Walks every parameter and BN layer of a block with hierarchical names.
template <typename T>
class ModuleVisitor {
 public:
  virtual ~ModuleVisitor() = default;
  virtual void param(const std::string& name, Parameter<T>& p) = 0;
  virtual void bank(const std::string& name, BNBank<T>& b) = 0;
};

/// Replaces every parameter and BN entry with an independent copy.
template <typename T>
class DeepCopyVisitor : public ModuleVisitor<T> {
 public:
  void param(const std::string&, Parameter<T>& p) override { p = p.copy(); }
  void bank(const std::string&, BNBank<T>& b) override {
    for (auto& [id, e] : b.entries()) e = e.copy();
  }
};

/// Blocks hold parameters by handle, so a plain copy aliases storage.
template <typename Block>
Block deep_copy(const Block& block) {
  Block out = block;
  using T = typename Block::Scalar;
  DeepCopyVisitor<T> v;
  out.visit("", v);
  return out;
}

/// Uniform(-b, b) with b = sqrt(6 / fan_in).
template <typename T>
void kaiming_uniform(Parameter<T>& p, std::size_t fan_in, std::mt19937_64& rng);

template <typename T>
Tensor<T> apply_bn(const Tensor<T>& x, BNBank<T>& bank, const BNRoute& route);

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act);

std::string join(const std::string& prefix, const std::string& name);

template <typename T>
class Conv2d {
 public:
  using Scalar = T;
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, int k, int stride, int padding,
         bool bias, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  Parameter<T> weight;
  Parameter<T> bias;  // value undefined when the conv has no bias
  int stride = 1;
  int padding = 0;
};

template <typename T>
class Linear {
 public:
  using Scalar = T;
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  Parameter<T> weight;
  Parameter<T> bias;
};

/// conv (no bias) -> batch norm -> activation.
template <typename T>
class ConvBlock {
 public:
  using Scalar = T;
  ConvBlock() = default;
  ConvBlock(std::size_t in, std::size_t out, int k, int stride,
            Activation act, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x, const BNRoute& route);
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  Conv2d<T> conv;
  BNBank<T> bn;
  Activation activation = Activation::kRelu;
};

/// Squeeze-and-excitation channel gate.
template <typename T>
class SEBlock {
 public:
  using Scalar = T;
  SEBlock() = default;
  SEBlock(std::size_t channels, std::size_t reduction, std::mt19937_64& rng);

  /// Per-channel gate in (0,1), shape (n, c, 1, 1).
  Tensor<T> gate(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  Linear<T> squeeze;
  Linear<T> excite;
};

/// Channel attention (shared MLP over global avg and max pools) followed by
/// spatial attention (7x7 conv over channel mean and max maps).
template <typename T>
class CBAMBlock {
 public:
  using Scalar = T;
  CBAMBlock() = default;
  CBAMBlock(std::size_t channels, std::size_t reduction, std::mt19937_64& rng);

  Tensor<T> channel_gate(const Tensor<T>& x) const;
  Tensor<T> spatial_gate(const Tensor<T>& x) const;
  Tensor<T> forward(const Tensor<T>& x) const;
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  Linear<T> mlp_in;
  Linear<T> mlp_out;
  Conv2d<T> spatial;
};

/// Decoder fusion: concat -> CBAM -> 2x transposed conv -> conv block.
template <typename T>
class FFBlock {
 public:
  using Scalar = T;
  FFBlock() = default;
  FFBlock(std::size_t in_channels, std::size_t out_channels,
          std::size_t reduction, std::mt19937_64& rng);

  /// `prev` may be undefined (first block of the decoder).
  Tensor<T> forward(const Tensor<T>& prev, const Tensor<T>& f1,
                    const Tensor<T>& f2, const BNRoute& route);
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  CBAMBlock<T> cbam;
  Parameter<T> upsample;  // (in, out, 2, 2)
  ConvBlock<T> conv;
};

template <typename T>
struct ICMOutput {
  Tensor<T> mask;    // (n, 2, h, w); channel 0 = sigmoid(x_m), 1 = 1 - sigmoid
  Tensor<T> masked;  // mask * p
};

/// Interesting-change-region mask over the 2-channel prediction p.
template <typename T>
class ICMBlock {
 public:
  using Scalar = T;
  ICMBlock() = default;
  ICMBlock(std::size_t width, PoolingMode pooling, std::size_t se_reduction,
           std::mt19937_64& rng);

  ICMOutput<T> forward(const Tensor<T>& p) const;
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  PoolingMode pooling = PoolingMode::kChannel;
  Conv2d<T> entry;
  SEBlock<T> se;
  Conv2d<T> mask_conv;
};

}  // namespace canet

#endif  // CANET_BLOCKS_HPP_
