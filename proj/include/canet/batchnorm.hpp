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

#ifndef CANET_BATCHNORM_HPP_
#define CANET_BATCHNORM_HPP_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canet/tensor.hpp"

namespace canet {

enum class Mode { kTrain, kEval };

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Affine parameters and running statistics of one dataset in one BN layer.
template <typename T>
struct BNEntry {
  Parameter<T> gamma;
  Parameter<T> beta;
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool has_stats = false;

  BNEntry() = default;
  BNEntry(const std::string& name, std::size_t channels);
  BNEntry copy() const;
};

/// One batch-normalization layer holding an entry per dataset id.
template <typename T>
class BNBank {
 public:
  BNBank() = default;
  BNBank(std::string name, std::size_t channels);

  std::size_t channels() const { return channels_; }
  const std::string& name() const { return name_; }

  bool contains(const std::string& id) const { return entries_.count(id) > 0; }
  BNEntry<T>& entry(const std::string& id);
  const BNEntry<T>& entry(const std::string& id) const;

  /// Fresh entry (gamma=1, beta=0, no statistics) or a copy of `init_from`.
  void add(const std::string& id,
           const std::optional<std::string>& init_from = std::nullopt);
  void rename(const std::string& from, const std::string& to);

  std::map<std::string, BNEntry<T>>& entries() { return entries_; }
  const std::map<std::string, BNEntry<T>>& entries() const { return entries_; }

 private:
  std::string name_;
  std::size_t channels_ = 0;
  std::map<std::string, BNEntry<T>> entries_;
};

/// Train mode normalizes with batch statistics and folds them into the
/// entry's running statistics; eval mode uses the running statistics.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BNEntry<T>& entry, Mode mode,
                      double eps = kBatchNormEpsilon,
                      double momentum = kBatchNormMomentum);

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, BNBank<T>& bank,
                      const std::string& dataset_id, Mode mode) {
  return batchnorm2d(input, bank.entry(dataset_id), mode);
}

}  // namespace canet

#endif  // CANET_BATCHNORM_HPP_
