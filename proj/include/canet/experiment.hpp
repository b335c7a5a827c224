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

#ifndef CANET_EXPERIMENT_HPP_
#define CANET_EXPERIMENT_HPP_

#include <optional>
#include <string>
#include <vector>

#include "canet/config.hpp"
#include "canet/model.hpp"
#include "canet/synthdata.hpp"
#include "canet/trainer.hpp"

namespace canet {

enum class AdaptInit { kFresh, kClone };

/// Everything one run needs, from a [model]/[train]/[data] config file.
struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  /// How a new dataset's adapter starts: fresh init or a copy of the
  /// historical (first registered) dataset's adapter and BN entries.
  AdaptInit adapt_init = AdaptInit::kClone;
  /// Fraction of the training split used, taken from its front.
  double train_fraction = 1.0;
  /// Split reported after every epoch and at the end.
  Split eval_split = Split::kTest;
  /// [data] section: a spec (generated in memory) when any spec key is set.
  std::optional<DatasetSpec> data;
};

/// Unknown sections or keys throw ErrorCode::kConfig naming them.
ExperimentConfig parse_experiment_config(const std::vector<ConfigEntry>& entries);
ExperimentConfig load_experiment_config(const std::string& path);
/// Fully resolved config, every key written out; parses back to the same
/// values.
std::string to_text(const ExperimentConfig& config);

/// Spec files for gen-data: a plain dataset spec, or `family = <seed>`
/// plus optional size overrides, which produces all four family members.
struct DataRequest {
  std::optional<std::uint64_t> family_seed;
  DatasetSpec spec;
  std::vector<ConfigEntry> overrides;
};
DataRequest parse_data_request(const std::vector<ConfigEntry>& entries);
/// Writes one dataset to `out`, or the family to out/{hist,style,label,both}.
void generate_data(const DataRequest& request, const std::string& out);

/// Dataset id of a dataset directory: `name` from its spec.txt, else the
/// directory name.
std::string dataset_name(const std::string& root);

const char* to_string(AdaptInit init);
AdaptInit parse_adapt_init(const std::string& s);

}  // namespace canet

#endif  // CANET_EXPERIMENT_HPP_
