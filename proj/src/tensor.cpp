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

#include "canet/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

namespace canet {

std::string Shape::str() const {
  std::ostringstream os;
  os << "(" << n << "," << c << "," << h << "," << w << ")";
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  impl_->shape = shape;
  impl_->data.assign(shape.size(), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<TensorImpl<T>>()) {
  require(values.size() == shape.size(), ErrorCode::kShapeMismatch,
          "tensor data length " + std::to_string(values.size()) +
              " does not match shape " + shape.str());
  impl_->shape = shape;
  impl_->data = std::move(values);
}

template <typename T>
T Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h,
                std::size_t w) const {
  const Shape& s = impl_->shape;
  return impl_->data[((n * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  const Shape& s = impl_->shape;
  return impl_->data[((n * s.c + c) * s.h + h) * s.w + w];
}

template <typename T>
T Tensor<T>::item() const {
  require(size() == 1, ErrorCode::kShapeMismatch,
          "item() on non-scalar tensor " + shape().str());
  return impl_->data[0];
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  impl_->grad.assign(impl_->data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor<T>(impl_->shape, impl_->data);
}

template <typename T>
void Tape<T>::record(std::shared_ptr<TensorImpl<T>> output, BackwardFn fn) {
  require(!consumed_, ErrorCode::kState, "recording onto a consumed tape");
  nodes_.push_back(Node{std::move(output), std::move(fn)});
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  require(!consumed_, ErrorCode::kState,
          "backward called twice on a consumed tape");
  require(loss.defined() && loss.size() == 1, ErrorCode::kShapeMismatch,
          "backward requires a scalar loss");
  consumed_ = true;
  if (!loss.requires_grad()) return;
  loss.impl()->grad.assign(1, T(1));
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;  // nothing flowed here
    it->fn();
  }
  // Release intermediates; leaf gradients stay with their owners.
  nodes_.clear();
}

namespace {

template <typename T>
Tape<T>*& tape_slot() {
  thread_local Tape<T>* slot = nullptr;
  return slot;
}

std::atomic<bool> g_checked{false};

}  // namespace

template <typename T>
TapeScope<T>::TapeScope(Tape<T>& tape) : previous_(tape_slot<T>()) {
  tape_slot<T>() = &tape;
}

template <typename T>
TapeScope<T>::~TapeScope() {
  tape_slot<T>() = previous_;
}

template <typename T>
Tape<T>* active_tape() {
  return tape_slot<T>();
}

template <typename T>
void backward(const Tensor<T>& loss) {
  Tape<T>* tape = active_tape<T>();
  require(tape != nullptr, ErrorCode::kState, "backward without active tape");
  tape->backward(loss);
}

template <typename T>
Parameter<T>::Parameter(std::string param_name, Shape shape)
    : name(std::move(param_name)),
      value(shape),
      momentum(shape.size(), T(0)) {
  value.set_requires_grad(true);
}

template <typename T>
void Parameter<T>::set_trainable(bool on) {
  trainable = on;
  value.set_requires_grad(on);
}

template <typename T>
Parameter<T> Parameter<T>::copy() const {
  Parameter<T> out;
  out.name = name;
  out.value = value.clone();
  out.momentum.assign(momentum.size(), T(0));
  out.trainable = trainable;
  out.value.set_requires_grad(trainable);
  return out;
}

void set_checked_mode(bool on) { g_checked.store(on); }
bool checked_mode() { return g_checked.load(std::memory_order_relaxed); }

namespace {
thread_local BranchTrace* g_trace = nullptr;
}  // namespace

BranchTrace::BranchTrace() : outer_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = outer_; }

void BranchTrace::fold(std::uint64_t value) {
  if (g_trace == nullptr) return;
  g_trace->digest_ = (g_trace->digest_ ^ value) * 1099511628211ull;
}

bool BranchTrace::active() { return g_trace != nullptr; }

#define CANET_INSTANTIATE(T)                       \
  template class Tensor<T>;                        \
  template class Tape<T>;                          \
  template class TapeScope<T>;                     \
  template Tape<T>* active_tape<T>();              \
  template void backward<T>(const Tensor<T>&);     \
  template struct Parameter<T>;

CANET_INSTANTIATE(float)
CANET_INSTANTIATE(double)

}  // namespace canet
