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

#ifndef CANET_TENSOR_HPP_
#define CANET_TENSOR_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "canet/error.hpp"

namespace canet {

/// Dimensions of a rank-4 (n, c, h, w) tensor.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until a gradient flows into this tensor
  bool requires_grad = false;
};

/// Reference-counted handle to a contiguous row-major (n, c, h, w) array.
///
/// Copies share storage. Values produced by ops are never written again;
/// only leaves (parameters, inputs) are mutated in place, and only between
/// tape recordings.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t size() const { return impl_->data.size(); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> mutable_data() { return impl_->data; }
  const T* ptr() const { return impl_->data.data(); }
  T* mutable_ptr() { return impl_->data.data(); }

  T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  /// Value of a single-element tensor.
  T item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool on) { impl_->requires_grad = on; }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<T> grad_buffer();
  void zero_grad();

  /// Deep copy of the values; the copy is a fresh leaf.
  Tensor clone() const;

  const std::shared_ptr<TensorImpl<T>>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

/// Ordered record of differentiable primitive ops.
///
/// Nodes are appended in execution order, so reverse append order is a
/// valid reverse topological order. A tape can be run backward once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  void record(std::shared_ptr<TensorImpl<T>> output, BackwardFn fn);
  void backward(const Tensor<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

 private:
  struct Node {
    std::shared_ptr<TensorImpl<T>> output;
    BackwardFn fn;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

/// Installs a tape as the active recording target for the current thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* previous_;
};

template <typename T>
Tape<T>* active_tape();

/// Runs backward on the active tape.
template <typename T>
void backward(const Tensor<T>& loss);

/// Trainable leaf with its SGD momentum state.
template <typename T>
struct Parameter {
  Parameter() = default;
  Parameter(std::string param_name, Shape shape);

  std::string name;
  Tensor<T> value;
  std::vector<T> momentum;
  bool trainable = true;

  void set_trainable(bool on);
  std::size_t size() const { return value.size(); }
  /// Independent copy: new storage, same values, zeroed momentum.
  Parameter copy() const;
};

/// When enabled, every op checks its output for NaN/Inf and throws
/// ErrorCode::kNumeric. Off by default.
void set_checked_mode(bool on);
bool checked_mode();

/// While alive, relu, relu6 and the max reductions fold the branch each
/// element takes into a running digest on this thread. Two evaluations with
/// equal digests ran through the same linear piece of the network.
class BranchTrace {
 public:
  BranchTrace();
  ~BranchTrace();
  BranchTrace(const BranchTrace&) = delete;
  BranchTrace& operator=(const BranchTrace&) = delete;

  std::uint64_t digest() const { return digest_; }
  /// No-op when no trace is active.
  static void fold(std::uint64_t value);
  static bool active();

 private:
  std::uint64_t digest_ = 14695981039346656037ull;
  BranchTrace* outer_ = nullptr;
};

}  // namespace canet

#endif  // CANET_TENSOR_HPP_
