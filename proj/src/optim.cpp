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

#include "canet/optim.hpp"

namespace canet {

template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, double lr,
              double momentum, double weight_decay) {
  require(lr > 0.0, ErrorCode::kInvalidArgument, "sgd_step: lr must be > 0");
  for (Parameter<T>* p : params) {
    if (!p->trainable) continue;
    require(p->value.has_grad(), ErrorCode::kState,
            "sgd_step: missing gradient on trainable parameter '" + p->name +
                "'");
    if (p->momentum.size() != p->value.size()) {
      p->momentum.assign(p->value.size(), T(0));
    }
    std::span<T> value = p->value.mutable_data();
    std::span<const T> grad = p->value.grad();
    const T mu = static_cast<T>(momentum);
    const T wd = static_cast<T>(weight_decay);
    const T step = static_cast<T>(lr);
    for (std::size_t i = 0; i < value.size(); ++i) {
      p->momentum[i] = mu * p->momentum[i] + (grad[i] + wd * value[i]);
      value[i] -= step * p->momentum[i];
    }
  }
}

template <typename T>
void zero_grad(std::span<Parameter<T>* const> params) {
  for (Parameter<T>* p : params) p->value.zero_grad();
}

template void sgd_step<float>(std::span<Parameter<float>* const>, double,
                              double, double);
template void sgd_step<double>(std::span<Parameter<double>* const>, double,
                               double, double);
template void zero_grad<float>(std::span<Parameter<float>* const>);
template void zero_grad<double>(std::span<Parameter<double>* const>);

}  // namespace canet
