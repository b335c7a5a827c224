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

#include "canet/blocks.hpp"

#include <algorithm>
#include <cmath>

namespace canet {

std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
void kaiming_uniform(Parameter<T>& p, std::size_t fan_in,
                     std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  // Fixed mapping from raw 64-bit draws keeps init identical across
  // standard library implementations.
  for (T& v : p.value.mutable_data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = static_cast<T>((2.0 * u - 1.0) * bound);
  }
}

template <typename T>
Tensor<T> apply_bn(const Tensor<T>& x, BNBank<T>& bank, const BNRoute& route) {
  BNEntry<T>& e = bank.entry(route.key);
  const Mode mode =
      (route.mode == Mode::kTrain && e.gamma.trainable) ? Mode::kTrain
                                                        : Mode::kEval;
  return batchnorm2d(x, e, mode);
}

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return relu(x);
    case Activation::kRelu6:
      return relu6(x);
    case Activation::kNone:
      break;
  }
  return x;
}

// Conv2d

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, int k, int stride_,
                  int padding_, bool with_bias, std::mt19937_64& rng)
    : weight("weight", Shape{out, in, static_cast<std::size_t>(k),
                             static_cast<std::size_t>(k)}),
      stride(stride_),
      padding(padding_) {
  kaiming_uniform(weight, in * k * k, rng);
  if (with_bias) bias = Parameter<T>("bias", Shape{1, out, 1, 1});
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight.value, bias.value, stride, padding);
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  v.param(join(prefix, "weight"), weight);
  if (bias.value.defined()) v.param(join(prefix, "bias"), bias);
}

// Linear

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight("weight", Shape{out, in, 1, 1}),
      bias("bias", Shape{1, out, 1, 1}) {
  kaiming_uniform(weight, in, rng);
}

template <typename T>
Tensor<T> Linear<T>::forward(const Tensor<T>& x) const {
  return linear(x, weight.value, bias.value);
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  v.param(join(prefix, "weight"), weight);
  v.param(join(prefix, "bias"), bias);
}

// ConvBlock

template <typename T>
ConvBlock<T>::ConvBlock(std::size_t in, std::size_t out, int k, int stride,
                        Activation act, std::mt19937_64& rng)
    : conv(in, out, k, stride, k / 2, false, rng),
      bn("bn", out),
      activation(act) {}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x, const BNRoute& route) {
  return activate(apply_bn(conv.forward(x), bn, route), activation);
}

template <typename T>
void ConvBlock<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  conv.visit(join(prefix, "conv"), v);
  v.bank(join(prefix, "bn"), bn);
}

// SEBlock

namespace {
std::size_t hidden_width(std::size_t channels, std::size_t reduction) {
  return std::max<std::size_t>(channels / std::max<std::size_t>(reduction, 1),
                               4);
}
}  // namespace

template <typename T>
SEBlock<T>::SEBlock(std::size_t channels, std::size_t reduction,
                    std::mt19937_64& rng)
    : squeeze(channels, hidden_width(channels, reduction), rng),
      excite(hidden_width(channels, reduction), channels, rng) {}

template <typename T>
Tensor<T> SEBlock<T>::gate(const Tensor<T>& x) const {
  return sigmoid(excite.forward(relu(squeeze.forward(global_avg_pool(x)))));
}

template <typename T>
Tensor<T> SEBlock<T>::forward(const Tensor<T>& x) const {
  return mul(x, gate(x));
}

template <typename T>
void SEBlock<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  squeeze.visit(join(prefix, "squeeze"), v);
  excite.visit(join(prefix, "excite"), v);
}

// CBAMBlock

template <typename T>
CBAMBlock<T>::CBAMBlock(std::size_t channels, std::size_t reduction,
                        std::mt19937_64& rng)
    : mlp_in(channels, hidden_width(channels, reduction), rng),
      mlp_out(hidden_width(channels, reduction), channels, rng),
      spatial(2, 1, 7, 1, 3, true, rng) {}

template <typename T>
Tensor<T> CBAMBlock<T>::channel_gate(const Tensor<T>& x) const {
  auto mlp = [this](const Tensor<T>& pooled) {
    return mlp_out.forward(relu(mlp_in.forward(pooled)));
  };
  return sigmoid(add(mlp(global_avg_pool(x)), mlp(global_max_pool(x))));
}

template <typename T>
Tensor<T> CBAMBlock<T>::spatial_gate(const Tensor<T>& x) const {
  return sigmoid(
      spatial.forward(concat_channels({channel_reduce_mean(x),
                                       channel_reduce_max(x)})));
}

template <typename T>
Tensor<T> CBAMBlock<T>::forward(const Tensor<T>& x) const {
  Tensor<T> refined = mul(x, channel_gate(x));
  return mul(refined, spatial_gate(refined));
}

template <typename T>
void CBAMBlock<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  mlp_in.visit(join(prefix, "mlp_in"), v);
  mlp_out.visit(join(prefix, "mlp_out"), v);
  spatial.visit(join(prefix, "spatial"), v);
}

// FFBlock

template <typename T>
FFBlock<T>::FFBlock(std::size_t in, std::size_t out, std::size_t reduction,
                    std::mt19937_64& rng)
    : in_channels(in),
      out_channels(out),
      cbam(in, reduction, rng),
      upsample("weight", Shape{in, out, 2, 2}),
      conv(out, out, 3, 1, Activation::kRelu, rng) {
  kaiming_uniform(upsample, in, rng);
}

template <typename T>
Tensor<T> FFBlock<T>::forward(const Tensor<T>& prev, const Tensor<T>& f1,
                              const Tensor<T>& f2, const BNRoute& route) {
  require(f1.shape() == f2.shape(), ErrorCode::kShapeMismatch,
          "FF block: temporal branches differ " + f1.shape().str() + " vs " +
              f2.shape().str());
  Tensor<T> fused = prev.defined() ? concat_channels({prev, f1, f2})
                                   : concat_channels({f1, f2});
  require(fused.shape().c == in_channels, ErrorCode::kShapeMismatch,
          "FF block expects " + std::to_string(in_channels) +
              " input channels, got " + std::to_string(fused.shape().c));
  Tensor<T> up = conv_transpose2d(cbam.forward(fused), upsample.value,
                                  Tensor<T>(), 2);
  return conv.forward(up, route);
}

template <typename T>
void FFBlock<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  cbam.visit(join(prefix, "cbam"), v);
  v.param(join(prefix, "upsample.weight"), upsample);
  conv.visit(join(prefix, "conv"), v);
}

// ICMBlock

template <typename T>
ICMBlock<T>::ICMBlock(std::size_t width, PoolingMode mode,
                      std::size_t se_reduction, std::mt19937_64& rng)
    : pooling(mode),
      entry(2, width, 3, 1, 1, true, rng),
      se(mode == PoolingMode::kChannel ? width + 2 : 3 * width, se_reduction,
         rng),
      mask_conv(mode == PoolingMode::kChannel ? width + 2 : 3 * width, 1, 3, 1,
                1, true, rng) {}

template <typename T>
ICMOutput<T> ICMBlock<T>::forward(const Tensor<T>& p) const {
  require(p.shape().c == 2, ErrorCode::kShapeMismatch,
          "ICM block expects a 2-channel prediction, got " + p.shape().str());
  Tensor<T> x = entry.forward(p);
  Tensor<T> fused;
  if (pooling == PoolingMode::kChannel) {
    fused = concat_channels({x, channel_reduce_max(x), channel_reduce_mean(x)});
  } else {
    fused = concat_channels({x, maxpool2d(x, 3, 1, 1), avgpool2d(x, 3, 1, 1)});
  }
  Tensor<T> gate = sigmoid(mask_conv.forward(se.forward(fused)));
  ICMOutput<T> out;
  out.mask = concat_channels({gate, one_minus(gate)});
  out.masked = mul(out.mask, p);
  return out;
}

template <typename T>
void ICMBlock<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  entry.visit(join(prefix, "entry"), v);
  se.visit(join(prefix, "se"), v);
  mask_conv.visit(join(prefix, "mask_conv"), v);
}

#define CANET_INSTANTIATE(T)                                                 \
  template void kaiming_uniform<T>(Parameter<T>&, std::size_t,               \
                                   std::mt19937_64&);                        \
  template Tensor<T> apply_bn<T>(const Tensor<T>&, BNBank<T>&,               \
                                 const BNRoute&);                            \
  template Tensor<T> activate<T>(const Tensor<T>&, Activation);              \
  template class Conv2d<T>;                                                  \
  template class Linear<T>;                                                  \
  template class ConvBlock<T>;                                               \
  template class SEBlock<T>;                                                 \
  template class CBAMBlock<T>;                                               \
  template class FFBlock<T>;                                                 \
  template class ICMBlock<T>;

CANET_INSTANTIATE(float)
CANET_INSTANTIATE(double)

}  // namespace canet
