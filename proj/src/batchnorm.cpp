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

#include "canet/batchnorm.hpp"

#include <cmath>

#include "op_support.hpp"

namespace canet {

template <typename T>
BNEntry<T>::BNEntry(const std::string& name, std::size_t channels)
    : gamma(name + ".gamma", Shape{1, channels, 1, 1}),
      beta(name + ".beta", Shape{1, channels, 1, 1}),
      running_mean(channels, T(0)),
      running_var(channels, T(1)) {
  for (T& g : gamma.value.mutable_data()) g = T(1);
}

template <typename T>
BNEntry<T> BNEntry<T>::copy() const {
  BNEntry<T> out;
  out.gamma = gamma.copy();
  out.beta = beta.copy();
  out.running_mean = running_mean;
  out.running_var = running_var;
  out.has_stats = has_stats;
  return out;
}

template <typename T>
BNBank<T>::BNBank(std::string name, std::size_t channels)
    : name_(std::move(name)), channels_(channels) {}

template <typename T>
BNEntry<T>& BNBank<T>::entry(const std::string& id) {
  auto it = entries_.find(id);
  if (it == entries_.end()) {
    fail(ErrorCode::kUnknownDataset,
         "batch norm layer '" + name_ + "' has no entry for dataset '" + id +
             "'");
  }
  return it->second;
}

template <typename T>
const BNEntry<T>& BNBank<T>::entry(const std::string& id) const {
  return const_cast<BNBank<T>*>(this)->entry(id);
}

template <typename T>
void BNBank<T>::add(const std::string& id,
                    const std::optional<std::string>& init_from) {
  require(!contains(id), ErrorCode::kDuplicateDataset,
          "batch norm layer '" + name_ + "' already has dataset '" + id + "'");
  if (init_from) {
    entries_.emplace(id, entry(*init_from).copy());
  } else {
    entries_.emplace(id, BNEntry<T>(name_, channels_));
  }
}

template <typename T>
void BNBank<T>::rename(const std::string& from, const std::string& to) {
  if (from == to) return;
  auto node = entries_.extract(from);
  require(!node.empty(), ErrorCode::kUnknownDataset,
          "batch norm layer '" + name_ + "' has no entry for '" + from + "'");
  node.key() = to;
  entries_.insert(std::move(node));
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BNEntry<T>& entry, Mode mode,
                      double eps, double momentum) {
  const Shape& s = input.shape();
  const std::size_t channels = s.c;
  require(entry.gamma.size() == channels, ErrorCode::kShapeMismatch,
          "batchnorm2d: layer has " + std::to_string(entry.gamma.size()) +
              " channels, input " + s.str());
  const std::size_t plane = s.plane();
  const std::size_t count = s.n * plane;
  const T* x = input.ptr();
  const T* gamma = entry.gamma.value.ptr();
  const T* beta = entry.beta.value.ptr();

  std::vector<T> mean(channels), inv_std(channels);
  if (mode == Mode::kTrain) {
    require(count >= 2, ErrorCode::kInvalidArgument,
            "batchnorm2d: train mode needs at least 2 values per channel");
    for (std::size_t c = 0; c < channels; ++c) {
      double m = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) m += p[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x + (n * channels + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = p[i] - m;
          v += d * d;
        }
      }
      const double biased = v / static_cast<double>(count);
      const double unbiased = v / static_cast<double>(count - 1);
      mean[c] = static_cast<T>(m);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(biased + eps));
      if (entry.has_stats) {
        entry.running_mean[c] = static_cast<T>(
            (1.0 - momentum) * entry.running_mean[c] + momentum * m);
        entry.running_var[c] = static_cast<T>(
            (1.0 - momentum) * entry.running_var[c] + momentum * unbiased);
      } else {
        entry.running_mean[c] = static_cast<T>(m);
        entry.running_var[c] = static_cast<T>(unbiased);
      }
    }
    entry.has_stats = true;
  } else {
    require(entry.has_stats, ErrorCode::kState,
            "batchnorm2d: eval mode before any running statistics exist (" +
                entry.gamma.name + ")");
    for (std::size_t c = 0; c < channels; ++c) {
      mean[c] = entry.running_mean[c];
      inv_std[c] = static_cast<T>(
          1.0 / std::sqrt(static_cast<double>(entry.running_var[c]) + eps));
    }
  }

  Tensor<T> out(s);
  T* y = out.mutable_ptr();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (n * channels + c) * plane;
      const T scale = gamma[c] * inv_std[c];
      const T shift = beta[c] - mean[c] * scale;
      for (std::size_t i = 0; i < plane; ++i) y[off + i] = x[off + i] * scale + shift;
    }
  }
  detail::check_finite(out, "batchnorm2d");

  if (detail::wants_grad<T>({&input, &entry.gamma.value, &entry.beta.value})) {
    auto xi = input.impl();
    auto gi = entry.gamma.value.impl();
    auto bi = entry.beta.value.impl();
    auto oi = out.impl();
    const bool batch_stats = mode == Mode::kTrain;
    detail::record(out, [xi, gi, bi, oi, s, plane, count, batch_stats,
                         mean = std::move(mean),
                         inv_std = std::move(inv_std)]() {
      T* gx = detail::grad_of(xi);
      T* ggamma = detail::grad_of(gi);
      T* gbeta = detail::grad_of(bi);
      const T* x = xi->data.data();
      const T* go = oi->grad.data();
      const std::size_t channels = s.c;
      for (std::size_t c = 0; c < channels; ++c) {
        // sum(dy) and sum(dy * xhat) over the channel.
        T sum_dy = T(0);
        T sum_dy_xhat = T(0);
        for (std::size_t n = 0; n < s.n; ++n) {
          const std::size_t off = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const T xhat = (x[off + i] - mean[c]) * inv_std[c];
            sum_dy += go[off + i];
            sum_dy_xhat += go[off + i] * xhat;
          }
        }
        if (gbeta != nullptr) gbeta[c] += sum_dy;
        if (ggamma != nullptr) ggamma[c] += sum_dy_xhat;
        if (gx == nullptr) continue;
        const T g = gi->data[c];
        const T inv_count = T(1) / static_cast<T>(count);
        for (std::size_t n = 0; n < s.n; ++n) {
          const std::size_t off = (n * channels + c) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            if (batch_stats) {
              const T xhat = (x[off + i] - mean[c]) * inv_std[c];
              gx[off + i] += g * inv_std[c] *
                             (go[off + i] - sum_dy * inv_count -
                              xhat * sum_dy_xhat * inv_count);
            } else {
              gx[off + i] += g * inv_std[c] * go[off + i];
            }
          }
        }
      }
    });
  }
  return out;
}

#define CANET_INSTANTIATE(T)                                              \
  template struct BNEntry<T>;                                             \
  template class BNBank<T>;                                               \
  template Tensor<T> batchnorm2d<T>(const Tensor<T>&, BNEntry<T>&, Mode, \
                                    double, double);

CANET_INSTANTIATE(float)
CANET_INSTANTIATE(double)

}  // namespace canet
