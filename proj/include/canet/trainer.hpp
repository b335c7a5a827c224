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

#ifndef CANET_TRAINER_HPP_
#define CANET_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "canet/model.hpp"
#include "canet/synthdata.hpp"

namespace canet {

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t batch_size = 8;
  std::size_t epochs = 30;
  std::uint64_t seed = 0;
  bool augment_hflip = true;
  Scope scope = Scope::kFull;
  Ablation ablation = Ablation::kNone;

  /// Throws ErrorCode::kConfig.
  void validate() const;
};

struct Metrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0, recall = 0, f1 = 0, iou = 0;

  /// Recomputes the derived rates from the counts. Empty prediction and
  /// empty truth count as perfect; otherwise an empty denominator gives 0.
  void finalize();
  void merge(const Metrics& other);
  static Metrics from_counts(std::uint64_t tp, std::uint64_t fp,
                             std::uint64_t fn, std::uint64_t tn);
};

/// Accumulates confusion counts; prediction and truth are 0/1 per pixel.
void accumulate(Metrics& m, const std::vector<std::uint8_t>& pred,
                const std::vector<std::uint8_t>& truth);

/// changed iff logit(changed) > logit(unchanged), per pixel.
template <typename T>
std::vector<std::uint8_t> predict(const Tensor<T>& logits, std::size_t n);

struct RunRow {
  std::size_t epoch = 0;
  std::string split;
  std::string dataset_id;
  double loss = 0;
  std::optional<Metrics> metrics;
  double seconds = 0;
};

struct RunRecord {
  std::vector<RunRow> rows;
  /// Mean training loss per epoch.
  std::vector<double> epoch_loss;
  double seconds = 0;
  std::size_t updated_params = 0;
  std::size_t total_params = 0;

  std::string csv() const;
  /// Wall-clock seconds per row, kept apart so csv() is reproducible.
  std::string timing_csv() const;
  void write_csv(const std::string& path) const;
  void write_timing_csv(const std::string& path) const;
};

struct EvalResult {
  Metrics metrics;
  double loss = 0;
};

/// Named evaluation set reported after every epoch.
struct EvalSet {
  std::string split;
  std::string dataset_id;
  const std::vector<SamplePair>* data = nullptr;
};

using RowCallback = std::function<void(const RunRow&)>;

/// Batch assembly: samples `indices` of `data`, optionally mirrored.
struct Batch {
  Tensor<float> x1, x2;
  LabelMap label;
};
Batch make_batch(const std::vector<SamplePair>& data,
                 const std::vector<std::size_t>& indices,
                 const std::vector<bool>& flip = {});

/// Trains `dataset_id` under `config.scope`. Applies `config.ablation` to the
/// model first when it carries none. Only the trainable set changes.
RunRecord train(CANetModel<float>& model, const std::string& dataset_id,
                const std::vector<SamplePair>& data, const TrainConfig& config,
                const std::vector<EvalSet>& evals = {},
                const RowCallback& on_row = {});

/// add_dataset(new_id, init_from) followed by adapter-only training.
RunRecord adapt(CANetModel<float>& model, const std::string& new_id,
                const std::vector<SamplePair>& data, const TrainConfig& config,
                const std::optional<std::string>& init_from = std::nullopt,
                const std::vector<EvalSet>& evals = {},
                const RowCallback& on_row = {});

/// Whole-network fine-tuning on new data through the historical dataset's
/// adapter and BN entries, which are overwritten.
RunRecord online_finetune_baseline(CANetModel<float>& model,
                                   const std::string& historical_id,
                                   const std::vector<SamplePair>& data,
                                   const TrainConfig& config,
                                   const std::vector<EvalSet>& evals = {},
                                   const RowCallback& on_row = {});

/// Eval-mode pass over `data`. With `emit_dir`, writes <emit_dir>/<5-digit
/// index>.pgm per sample (0 unchanged, 255 changed).
EvalResult evaluate(CANetModel<float>& model, const std::string& dataset_id,
                    const std::vector<SamplePair>& data,
                    const std::string& emit_dir = "",
                    std::size_t batch_size = 8);

void apply_ablation(CANetModel<float>& model, Ablation ablation);

/// Independent deep copy through the checkpoint format.
std::unique_ptr<CANetModel<float>> clone_model(CANetModel<float>& model);

}  // namespace canet

#endif  // CANET_TRAINER_HPP_
