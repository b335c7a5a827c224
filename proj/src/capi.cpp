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

#include "canet/canet.h"

#include <cmath>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "canet/checkpoint.hpp"
#include "canet/experiment.hpp"
#include "canet/gradcheck.hpp"
#include "canet/trainer.hpp"

struct canet_config {
  canet::ExperimentConfig value;
  std::string text;
};

struct canet_dataset {
  std::vector<canet::SamplePair> pairs;
  std::string name;
};

struct canet_model {
  std::unique_ptr<canet::CANetModel<float>> value;
};

namespace {

thread_local std::string g_last_error;

canet_status set_error(canet_status status, const std::string& msg) {
  g_last_error = msg;
  return status;
}

template <typename Fn>
canet_status guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return CANET_OK;
  } catch (const canet::Error& e) {
    return set_error(static_cast<canet_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(CANET_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(CANET_E_INTERNAL, e.what());
  }
}

void need(const void* p, const char* name) {
  canet::require(p != nullptr, canet::ErrorCode::kInvalidArgument,
                 std::string(name) + " is null");
}

std::vector<canet::SamplePair> take_fraction(
    const std::vector<canet::SamplePair>& pairs, double fraction) {
  if (fraction >= 1.0) return pairs;
  const auto n = static_cast<std::size_t>(
      std::max(1.0, std::round(fraction * static_cast<double>(pairs.size()))));
  return {pairs.begin(), pairs.begin() + std::min(n, pairs.size())};
}

struct RowForwarder {
  canet_row_fn fn;
  void* ctx;
  void operator()(const canet::RunRow& r) const {
    if (!fn) return;
    canet_row row{};
    row.epoch = r.epoch;
    row.split = r.split.c_str();
    row.dataset_id = r.dataset_id.c_str();
    row.loss = r.loss;
    row.has_metrics = r.metrics.has_value();
    if (r.metrics) {
      row.f1 = r.metrics->f1;
      row.precision = r.metrics->precision;
      row.recall = r.metrics->recall;
      row.iou = r.metrics->iou;
    }
    row.seconds = r.seconds;
    fn(ctx, &row);
  }
};

enum class RunKind { kTrain, kAdapt, kFinetune };

canet_status run(RunKind kind, canet_model* model, const char* id,
                 const canet_dataset* train, const canet_dataset* eval,
                 const canet_config* config, const char* csv_path,
                 canet_row_fn on_row, void* ctx, canet_run_summary* out) {
  return guarded([&] {
    need(model, "model");
    need(id, "dataset id");
    need(train, "training data");
    need(config, "config");
    const canet::ExperimentConfig& cfg = config->value;
    const auto data = take_fraction(train->pairs, cfg.train_fraction);
    std::vector<canet::EvalSet> evals;
    const std::string split = canet::to_string(cfg.eval_split);
    if (eval) evals.push_back({split, id, &eval->pairs});
    canet::RunRecord rec;
    canet::CANetModel<float>& m = *model->value;
    const RowForwarder fwd{on_row, ctx};
    switch (kind) {
      case RunKind::kTrain:
        rec = canet::train(m, id, data, cfg.train, evals, fwd);
        break;
      case RunKind::kAdapt: {
        canet::require(!m.dataset_ids().empty(), canet::ErrorCode::kState,
                       "adaptation needs a model with a historical dataset");
        std::optional<std::string> init;
        if (cfg.adapt_init == canet::AdaptInit::kClone) init = m.anchor();
        rec = canet::adapt(m, id, data, cfg.train, init, evals, fwd);
        break;
      }
      case RunKind::kFinetune:
        rec = canet::online_finetune_baseline(m, id, data, cfg.train, evals,
                                              fwd);
        break;
    }
    if (csv_path) {
      std::string timing = csv_path;
      if (timing.size() > 4 && timing.ends_with(".csv")) timing.resize(timing.size() - 4);
      rec.write_csv(csv_path);
      rec.write_timing_csv(timing + "_timing.csv");
    }
    if (out) {
      out->epochs = rec.epoch_loss.size();
      out->first_loss = rec.epoch_loss.empty() ? NAN : rec.epoch_loss.front();
      out->last_loss = rec.epoch_loss.empty() ? NAN : rec.epoch_loss.back();
      out->seconds = rec.seconds;
      out->updated_params = rec.updated_params;
      out->total_params = rec.total_params;
    }
  });
}

}  // namespace

extern "C" {

const char* canet_version(void) { return "1.0.0"; }

const char* canet_last_error(void) { return g_last_error.c_str(); }

const char* canet_status_name(canet_status status) {
  switch (status) {
    case CANET_OK:
      return "ok";
    case CANET_E_INVALID_ARGUMENT:
      return "invalid argument";
    case CANET_E_SHAPE_MISMATCH:
      return "shape mismatch";
    case CANET_E_UNKNOWN_DATASET:
      return "unknown dataset";
    case CANET_E_DUPLICATE_DATASET:
      return "duplicate dataset";
    case CANET_E_NUMERIC:
      return "numeric failure";
    case CANET_E_STATE:
      return "invalid state";
    case CANET_E_IO:
      return "i/o error";
    case CANET_E_FORMAT:
      return "format error";
    case CANET_E_CONFIG:
      return "configuration error";
    case CANET_E_INTERNAL:
      return "internal error";
  }
  return "unknown status";
}

// Config

canet_status canet_config_default(canet_config** out) {
  return guarded([&] {
    need(out, "out");
    auto c = std::make_unique<canet_config>();
    c->text = canet::to_text(c->value);
    *out = c.release();
  });
}

canet_status canet_config_load(const char* path, canet_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto c = std::make_unique<canet_config>();
    c->value = canet::load_experiment_config(path);
    c->text = canet::to_text(c->value);
    *out = c.release();
  });
}

void canet_config_free(canet_config* config) { delete config; }

const char* canet_config_text(const canet_config* config) {
  return config ? config->text.c_str() : "";
}

int canet_config_has_data(const canet_config* config) {
  return config && config->value.data.has_value();
}

// Data

canet_status canet_generate_data(const char* spec_path, const char* out_dir) {
  return guarded([&] {
    need(spec_path, "spec path");
    need(out_dir, "output directory");
    canet::generate_data(
        canet::parse_data_request(canet::parse_config_file(spec_path)),
        out_dir);
  });
}

canet_status canet_dataset_load(const char* root, const char* split,
                                canet_dataset** out) {
  return guarded([&] {
    need(root, "root");
    need(split, "split");
    need(out, "out");
    auto d = std::make_unique<canet_dataset>();
    d->pairs = canet::load_split(root, canet::parse_split(split));
    canet::require(!d->pairs.empty(), canet::ErrorCode::kIo,
                   std::string("no samples under ") + root + "/" + split);
    d->name = canet::dataset_name(root);
    *out = d.release();
  });
}

canet_status canet_dataset_generate(const canet_config* config,
                                    const char* split, canet_dataset** out) {
  return guarded([&] {
    need(config, "config");
    need(split, "split");
    need(out, "out");
    canet::require(config->value.data.has_value(), canet::ErrorCode::kConfig,
                   "config has no [data] section");
    auto d = std::make_unique<canet_dataset>();
    d->pairs =
        canet::generate_split(*config->value.data, canet::parse_split(split));
    d->name = config->value.data->name;
    *out = d.release();
  });
}

void canet_dataset_free(canet_dataset* dataset) { delete dataset; }

size_t canet_dataset_size(const canet_dataset* dataset) {
  return dataset ? dataset->pairs.size() : 0;
}

const char* canet_dataset_name(const canet_dataset* dataset) {
  return dataset ? dataset->name.c_str() : "";
}

// Models

canet_status canet_model_create(const canet_config* config, canet_model** out) {
  return guarded([&] {
    need(config, "config");
    need(out, "out");
    auto m = std::make_unique<canet_model>();
    m->value = std::make_unique<canet::CANetModel<float>>(config->value.model);
    *out = m.release();
  });
}

canet_status canet_model_load(const char* path, canet_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    auto m = std::make_unique<canet_model>();
    m->value = canet::load_checkpoint<float>(path);
    *out = m.release();
  });
}

canet_status canet_model_save(canet_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    canet::save_checkpoint(*model->value, path);
  });
}

canet_status canet_model_clone(canet_model* model, canet_model** out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    auto m = std::make_unique<canet_model>();
    m->value = canet::clone_model(*model->value);
    *out = m.release();
  });
}

void canet_model_free(canet_model* model) { delete model; }

canet_status canet_model_add_dataset(canet_model* model, const char* id,
                                     const char* init_from) {
  return guarded([&] {
    need(model, "model");
    need(id, "dataset id");
    std::optional<std::string> init;
    if (init_from) init = init_from;
    model->value->add_dataset(id, init);
  });
}

size_t canet_model_dataset_count(const canet_model* model) {
  return model ? model->value->dataset_ids().size() : 0;
}

const char* canet_model_dataset_id(const canet_model* model, size_t index) {
  if (!model || index >= model->value->dataset_ids().size()) return nullptr;
  return model->value->dataset_ids()[index].c_str();
}

canet_status canet_model_apply_ablation(canet_model* model, const char* which) {
  return guarded([&] {
    need(model, "model");
    need(which, "ablation");
    model->value->apply_ablation(canet::parse_ablation(which));
  });
}

const char* canet_model_ablation(const canet_model* model) {
  return model ? canet::to_string(model->value->ablation()) : "";
}

size_t canet_model_active_bank_count(const canet_model* model) {
  return model ? model->value->active_bank_count() : 0;
}

canet_status canet_model_partition(canet_model* model, const char* id,
                                   canet_partition* out) {
  return guarded([&] {
    need(model, "model");
    need(id, "dataset id");
    need(out, "out");
    const canet::ParamPartition p = model->value->param_partition(id);
    out->shared_count = p.shared_count;
    out->adapter_count = p.adapter_count;
    out->bn_bank_count_per_dataset = p.bn_bank_count_per_dataset;
    out->total = p.total;
    out->stored_total = p.stored_total;
    out->fraction = p.fraction;
  });
}

canet_status canet_model_forward(canet_model* model, const char* id, size_t n,
                                 size_t h, size_t w, const float* x1,
                                 const float* x2, float* logits, float* mask) {
  return guarded([&] {
    need(model, "model");
    need(id, "dataset id");
    need(x1, "x1");
    need(x2, "x2");
    need(logits, "logits");
    const canet::Shape s{n, 3, h, w};
    canet::Tensor<float> t1(s, std::vector<float>(x1, x1 + s.size()));
    canet::Tensor<float> t2(s, std::vector<float>(x2, x2 + s.size()));
    canet::ForwardResult<float> r =
        model->value->forward(t1, t2, id, canet::Mode::kEval);
    std::memcpy(logits, r.logits.ptr(), r.logits.size() * sizeof(float));
    if (mask) {
      if (r.mask.defined()) {
        std::memcpy(mask, r.mask.ptr(), r.mask.size() * sizeof(float));
      } else {
        std::fill(mask, mask + r.logits.size(), 1.0f);
      }
    }
  });
}

// Training

canet_status canet_train(canet_model* model, const char* id,
                         const canet_dataset* train, const canet_dataset* eval,
                         const canet_config* config, const char* csv_path,
                         canet_row_fn on_row, void* ctx,
                         canet_run_summary* out) {
  return run(RunKind::kTrain, model, id, train, eval, config, csv_path, on_row,
             ctx, out);
}

canet_status canet_adapt(canet_model* model, const char* new_id,
                         const canet_dataset* train, const canet_dataset* eval,
                         const canet_config* config, const char* csv_path,
                         canet_row_fn on_row, void* ctx,
                         canet_run_summary* out) {
  return run(RunKind::kAdapt, model, new_id, train, eval, config, csv_path,
             on_row, ctx, out);
}

canet_status canet_finetune_baseline(canet_model* model,
                                     const char* historical_id,
                                     const canet_dataset* train,
                                     const canet_dataset* eval,
                                     const canet_config* config,
                                     const char* csv_path, canet_row_fn on_row,
                                     void* ctx, canet_run_summary* out) {
  return run(RunKind::kFinetune, model, historical_id, train, eval, config,
             csv_path, on_row, ctx, out);
}

canet_status canet_evaluate(canet_model* model, const char* id,
                            const canet_dataset* data, const char* emit_dir,
                            canet_metrics* out) {
  return guarded([&] {
    need(model, "model");
    need(id, "dataset id");
    need(data, "data");
    need(out, "out");
    const canet::EvalResult r = canet::evaluate(*model->value, id, data->pairs,
                                                emit_dir ? emit_dir : "");
    out->tp = r.metrics.tp;
    out->fp = r.metrics.fp;
    out->fn = r.metrics.fn;
    out->tn = r.metrics.tn;
    out->precision = r.metrics.precision;
    out->recall = r.metrics.recall;
    out->f1 = r.metrics.f1;
    out->iou = r.metrics.iou;
    out->loss = r.loss;
  });
}

canet_status canet_output_digest(canet_model* model, const char* id,
                                 const canet_dataset* data, uint64_t* out) {
  return guarded([&] {
    need(model, "model");
    need(id, "dataset id");
    need(data, "data");
    need(out, "out");
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t start = 0; start < data->pairs.size(); start += 8) {
      std::vector<std::size_t> idx;
      for (std::size_t i = start; i < std::min(start + 8, data->pairs.size());
           ++i) {
        idx.push_back(i);
      }
      canet::Batch b = canet::make_batch(data->pairs, idx);
      canet::ForwardResult<float> r =
          model->value->forward(b.x1, b.x2, id, canet::Mode::kEval);
      for (float v : r.logits.data()) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int k = 0; k < 4; ++k) {
          h = (h ^ ((bits >> (8 * k)) & 0xFF)) * 1099511628211ull;
        }
      }
    }
    *out = h;
  });
}

// Gradient checks

size_t canet_gradcheck_case_count(void) {
  return canet::gradcheck_case_names().size();
}

const char* canet_gradcheck_case_name(size_t index) {
  static const std::vector<std::string> names = canet::gradcheck_case_names();
  return index < names.size() ? names[index].c_str() : nullptr;
}

canet_status canet_gradcheck_run(const char* name, double tolerance,
                                 double* max_rel_error, double* tolerance_used,
                                 int* passed) {
  return guarded([&] {
    need(name, "name");
    const canet::GradcheckReport r = canet::run_gradcheck_case(name, tolerance);
    if (max_rel_error) *max_rel_error = r.max_rel_error();
    if (tolerance_used) *tolerance_used = r.tolerance;
    if (passed) *passed = r.passed();
  });
}

}  // extern "C"
