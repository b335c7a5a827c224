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

#ifndef CANET_OPTIM_HPP_
#define CANET_OPTIM_HPP_

#include <span>

#include "canet/tensor.hpp"

namespace canet {

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + (grad + weight_decay * value)
///   value <- value - lr * v
/// Parameters with trainable == false are skipped.
template <typename T>
void sgd_step(std::span<Parameter<T>* const> params, double lr,
              double momentum, double weight_decay);

/// Zero-fills the gradient buffer of every listed parameter.
template <typename T>
void zero_grad(std::span<Parameter<T>* const> params);

}  // namespace canet

#endif  // CANET_OPTIM_HPP_
