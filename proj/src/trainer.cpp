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

#include "canet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "canet/checkpoint.hpp"
#include "canet/optim.hpp"

namespace canet {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& order,
                                       std::size_t start, std::size_t size) {
  const std::size_t end = std::min(order.size(), start + size);
  return {order.begin() + start, order.begin() + end};
}

}  // namespace

void TrainConfig::validate() const {
  require(lr > 0 && std::isfinite(lr), ErrorCode::kConfig,
          "key 'lr': must be > 0");
  require(momentum >= 0 && momentum < 1, ErrorCode::kConfig,
          "key 'momentum': must lie in [0, 1)");
  require(weight_decay >= 0, ErrorCode::kConfig,
          "key 'weight_decay': must be >= 0");
  require(batch_size >= 1, ErrorCode::kConfig, "key 'batch': must be >= 1");
}

// Metrics

void Metrics::finalize() {
  const bool no_pred = tp + fp == 0;
  const bool no_truth = tp + fn == 0;
  if (no_pred && no_truth) {
    precision = recall = f1 = iou = 1.0;
    return;
  }
  precision = no_pred ? 0.0 : static_cast<double>(tp) / (tp + fp);
  recall = no_truth ? 0.0 : static_cast<double>(tp) / (tp + fn);
  f1 = static_cast<double>(2 * tp) / (2 * tp + fp + fn);
  iou = static_cast<double>(tp) / (tp + fp + fn);
}

void Metrics::merge(const Metrics& other) {
  tp += other.tp;
  fp += other.fp;
  fn += other.fn;
  tn += other.tn;
  finalize();
}

Metrics Metrics::from_counts(std::uint64_t tp, std::uint64_t fp,
                             std::uint64_t fn, std::uint64_t tn) {
  Metrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  m.finalize();
  return m;
}

void accumulate(Metrics& m, const std::vector<std::uint8_t>& pred,
                const std::vector<std::uint8_t>& truth) {
  require(pred.size() == truth.size(), ErrorCode::kShapeMismatch,
          "prediction and label sizes differ");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i]) {
      truth[i] ? ++m.tp : ++m.fp;
    } else {
      truth[i] ? ++m.fn : ++m.tn;
    }
  }
  m.finalize();
}

template <typename T>
std::vector<std::uint8_t> predict(const Tensor<T>& logits, std::size_t n) {
  const Shape& s = logits.shape();
  require(s.c == 2 && s.n == n, ErrorCode::kShapeMismatch,
          "expected (" + std::to_string(n) + ",2,h,w) logits, got " + s.str());
  const std::size_t plane = s.plane();
  std::vector<std::uint8_t> out(n * plane);
  for (std::size_t b = 0; b < n; ++b) {
    const T* l0 = logits.ptr() + (2 * b) * plane;
    const T* l1 = l0 + plane;
    for (std::size_t i = 0; i < plane; ++i) out[b * plane + i] = l1[i] > l0[i];
  }
  return out;
}

template std::vector<std::uint8_t> predict<float>(const Tensor<float>&,
                                                  std::size_t);
template std::vector<std::uint8_t> predict<double>(const Tensor<double>&,
                                                   std::size_t);

// RunRecord

std::string RunRecord::csv() const {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,split,dataset_id,loss,f1,precision,recall,iou\n";
  for (const RunRow& r : rows) {
    out << r.epoch << "," << r.split << "," << r.dataset_id << "," << r.loss;
    if (r.metrics) {
      out << "," << r.metrics->f1 << "," << r.metrics->precision << ","
          << r.metrics->recall << "," << r.metrics->iou;
    } else {
      out << ",,,,";
    }
    out << "\n";
  }
  return out.str();
}

std::string RunRecord::timing_csv() const {
  std::ostringstream out;
  out.precision(6);
  out << "epoch,split,dataset_id,seconds\n";
  for (const RunRow& r : rows) {
    out << r.epoch << "," << r.split << "," << r.dataset_id << "," << r.seconds
        << "\n";
  }
  return out.str();
}

namespace {
void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write '" + path + "'");
  out << text;
  require(out.good(), ErrorCode::kIo, "write failed for '" + path + "'");
}
}  // namespace

void RunRecord::write_csv(const std::string& path) const {
  write_text_file(path, csv());
}

void RunRecord::write_timing_csv(const std::string& path) const {
  write_text_file(path, timing_csv());
}

// Batches

Batch make_batch(const std::vector<SamplePair>& data,
                 const std::vector<std::size_t>& indices,
                 const std::vector<bool>& flip) {
  require(!indices.empty(), ErrorCode::kInvalidArgument, "empty batch");
  const std::size_t h = data.at(indices[0]).height;
  const std::size_t w = data.at(indices[0]).width;
  const std::size_t n = indices.size();
  const std::size_t plane = h * w;
  Batch b;
  b.x1 = Tensor<float>(Shape{n, 3, h, w});
  b.x2 = Tensor<float>(Shape{n, 3, h, w});
  b.label = LabelMap{n, h, w, std::vector<std::uint8_t>(n * plane)};
  for (std::size_t k = 0; k < n; ++k) {
    const SamplePair& p = data.at(indices[k]);
    require(p.height == h && p.width == w, ErrorCode::kShapeMismatch,
            "batch mixes image sizes");
    const bool mirror = !flip.empty() && flip[k];
    float* d1 = b.x1.mutable_ptr() + k * 3 * plane;
    float* d2 = b.x2.mutable_ptr() + k * 3 * plane;
    std::uint8_t* dl = b.label.values.data() + k * plane;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t src = y * w + x;
        const std::size_t dst = y * w + (mirror ? w - 1 - x : x);
        for (std::size_t c = 0; c < 3; ++c) {
          d1[c * plane + dst] = p.x1[c * plane + src];
          d2[c * plane + dst] = p.x2[c * plane + src];
        }
        dl[dst] = p.label[src];
      }
    }
  }
  return b;
}

// Evaluation

EvalResult evaluate(CANetModel<float>& model, const std::string& dataset_id,
                    const std::vector<SamplePair>& data,
                    const std::string& emit_dir, std::size_t batch_size) {
  require(!data.empty(), ErrorCode::kInvalidArgument,
          "evaluation data is empty");
  require(model.has_dataset(dataset_id), ErrorCode::kUnknownDataset,
          "dataset '" + dataset_id + "' is not registered");
  if (!emit_dir.empty()) {
    std::error_code ec;
    fs::create_directories(emit_dir, ec);
    require(!ec, ErrorCode::kIo, "cannot create '" + emit_dir + "'");
  }
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  EvalResult out;
  double loss_sum = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const auto idx = batch_indices(order, start, batch_size);
    Batch b = make_batch(data, idx);
    ForwardResult<float> r = model.forward(b.x1, b.x2, dataset_id, Mode::kEval);
    loss_sum += static_cast<double>(softmax_cross_entropy(r.logits, b.label).item()) *
                idx.size();
    const auto pred = predict(r.logits, idx.size());
    accumulate(out.metrics, pred, b.label.values);
    if (!emit_dir.empty()) {
      const std::size_t plane = b.label.h * b.label.w;
      for (std::size_t k = 0; k < idx.size(); ++k) {
        Image8 img{b.label.h, b.label.w, 1, std::vector<std::uint8_t>(plane)};
        for (std::size_t i = 0; i < plane; ++i) {
          img.pixels[i] = pred[k * plane + i] ? 255 : 0;
        }
        char name[32];
        std::snprintf(name, sizeof name, "%05zu.pgm", idx[k]);
        write_pnm((fs::path(emit_dir) / name).string(), img);
      }
    }
  }
  out.metrics.finalize();
  out.loss = loss_sum / static_cast<double>(data.size());
  return out;
}

// Training

void apply_ablation(CANetModel<float>& model, Ablation ablation) {
  model.apply_ablation(ablation);
}

RunRecord train(CANetModel<float>& model, const std::string& dataset_id,
                const std::vector<SamplePair>& data, const TrainConfig& config,
                const std::vector<EvalSet>& evals, const RowCallback& on_row) {
  config.validate();
  require(!data.empty(), ErrorCode::kInvalidArgument, "training data is empty");
  require(model.has_dataset(dataset_id), ErrorCode::kUnknownDataset,
          "dataset '" + dataset_id + "' is not registered");
  if (config.ablation != Ablation::kNone &&
      model.ablation() != config.ablation) {
    model.apply_ablation(config.ablation);
  }
  const auto run_start = Clock::now();
  std::vector<Parameter<float>*> trainable =
      model.trainable_set(dataset_id, config.scope);
  RunRecord rec;
  for (const Parameter<float>* p : trainable) rec.updated_params += p->size();
  rec.total_params = model.param_partition(dataset_id).total;

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0;
    Metrics train_metrics;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size, ++batch_no) {
      const auto idx = batch_indices(order, start, config.batch_size);
      std::vector<bool> flip(idx.size(), false);
      if (config.augment_hflip) {
        for (std::size_t k = 0; k < idx.size(); ++k) flip[k] = rng() & 1;
      }
      Batch b = make_batch(data, idx, flip);
      Tape<float> tape;
      TapeScope<float> scope(tape);
      ForwardResult<float> r =
          model.forward(b.x1, b.x2, dataset_id, Mode::kTrain);
      Tensor<float> loss = softmax_cross_entropy(r.logits, b.label);
      const double value = loss.item();
      require(std::isfinite(value), ErrorCode::kNumeric,
              "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                  std::to_string(batch_no + 1) + " of dataset '" + dataset_id +
                  "'");
      tape.backward(loss);
      sgd_step<float>(trainable, config.lr, config.momentum,
                      config.weight_decay);
      zero_grad<float>(trainable);
      loss_sum += value * idx.size();
      accumulate(train_metrics, predict(r.logits, idx.size()), b.label.values);
    }
    const double mean_loss = loss_sum / static_cast<double>(data.size());
    rec.epoch_loss.push_back(mean_loss);
    RunRow row{epoch, "train", dataset_id, mean_loss, train_metrics,
               since(epoch_start)};
    rec.rows.push_back(row);
    if (on_row) on_row(row);
    for (const EvalSet& e : evals) {
      const auto t0 = Clock::now();
      EvalResult ev = evaluate(model, e.dataset_id, *e.data);
      RunRow erow{epoch, e.split, e.dataset_id, ev.loss, ev.metrics, since(t0)};
      rec.rows.push_back(erow);
      if (on_row) on_row(erow);
    }
  }
  rec.seconds = since(run_start);
  return rec;
}

RunRecord adapt(CANetModel<float>& model, const std::string& new_id,
                const std::vector<SamplePair>& data, const TrainConfig& config,
                const std::optional<std::string>& init_from,
                const std::vector<EvalSet>& evals, const RowCallback& on_row) {
  config.validate();
  require(!data.empty(), ErrorCode::kInvalidArgument, "training data is empty");
  model.add_dataset(new_id, init_from);
  TrainConfig c = config;
  c.scope = Scope::kAdapterOnly;
  return train(model, new_id, data, c, evals, on_row);
}

RunRecord online_finetune_baseline(CANetModel<float>& model,
                                   const std::string& historical_id,
                                   const std::vector<SamplePair>& data,
                                   const TrainConfig& config,
                                   const std::vector<EvalSet>& evals,
                                   const RowCallback& on_row) {
  TrainConfig c = config;
  c.scope = Scope::kFull;
  return train(model, historical_id, data, c, evals, on_row);
}

std::unique_ptr<CANetModel<float>> clone_model(CANetModel<float>& model) {
  return deserialize_model<float>(serialize_model(model));
}

}  // namespace canet
