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

#ifndef CANET_CHECKPOINT_HPP_
#define CANET_CHECKPOINT_HPP_

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "canet/model.hpp"

namespace canet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Header-level view of a checkpoint, readable without building a model.
struct CheckpointIndex {
  ModelConfig config;
  Ablation ablation = Ablation::kNone;
  std::vector<std::string> dataset_ids;
  std::vector<std::string> record_names;
  /// 0 = f32, 1 = f64.
  std::uint8_t dtype = 0;
};

template <typename T>
std::vector<std::uint8_t> serialize_model(CANetModel<T>& model);
/// Throws kFormat on bad magic, version, truncation or checksum failure.
template <typename T>
std::unique_ptr<CANetModel<T>> deserialize_model(
    std::span<const std::uint8_t> bytes);

template <typename T>
void save_checkpoint(CANetModel<T>& model, const std::string& path);
template <typename T>
std::unique_ptr<CANetModel<T>> load_checkpoint(const std::string& path);

CheckpointIndex read_checkpoint_index(std::span<const std::uint8_t> bytes);
CheckpointIndex read_checkpoint_index(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace canet

#endif  // CANET_CHECKPOINT_HPP_
