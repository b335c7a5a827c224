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

// Internal helpers shared by the op translation units.

#ifndef CANET_SRC_OP_SUPPORT_HPP_
#define CANET_SRC_OP_SUPPORT_HPP_

#include <cmath>
#include <initializer_list>
#include <string>
#include <utility>

#include "canet/tensor.hpp"

namespace canet::detail {

template <typename T>
bool wants_grad(std::initializer_list<const Tensor<T>*> inputs) {
  if (active_tape<T>() == nullptr) return false;
  for (const Tensor<T>* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T, typename Fn>
void record(Tensor<T>& out, Fn&& fn) {
  out.set_requires_grad(true);
  active_tape<T>()->record(out.impl(), std::forward<Fn>(fn));
}

/// Gradient buffer of an op input, or nullptr if it needs none.
template <typename T>
T* grad_of(const std::shared_ptr<TensorImpl<T>>& t) {
  if (!t || !t->requires_grad) return nullptr;
  if (t->grad.empty()) t->grad.assign(t->data.size(), T(0));
  return t->grad.data();
}

template <typename T>
void check_finite(const Tensor<T>& out, const char* op) {
  if (!checked_mode()) return;
  for (T v : out.data()) {
    if (!std::isfinite(v)) {
      fail(ErrorCode::kNumeric,
           std::string("non-finite value produced by ") + op);
    }
  }
}

}  // namespace canet::detail

#endif  // CANET_SRC_OP_SUPPORT_HPP_
