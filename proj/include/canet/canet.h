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

/* C interface to the CANet library. Every call that can fail returns a
 * canet_status; on failure canet_last_error() describes what went wrong on
 * the calling thread. Handles are opaque and owned by the caller. */

#ifndef CANET_CANET_H_
#define CANET_CANET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CANET_API __declspec(dllexport)
#else
#define CANET_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum canet_status {
  CANET_OK = 0,
  CANET_E_INVALID_ARGUMENT = 1,
  CANET_E_SHAPE_MISMATCH = 2,
  CANET_E_UNKNOWN_DATASET = 3,
  CANET_E_DUPLICATE_DATASET = 4,
  CANET_E_NUMERIC = 5,
  CANET_E_STATE = 6,
  CANET_E_IO = 7,
  CANET_E_FORMAT = 8,
  CANET_E_CONFIG = 9,
  CANET_E_INTERNAL = 10
} canet_status;

typedef struct canet_config canet_config;
typedef struct canet_dataset canet_dataset;
typedef struct canet_model canet_model;

typedef struct canet_partition {
  uint64_t shared_count;
  uint64_t adapter_count;
  uint64_t bn_bank_count_per_dataset;
  uint64_t total;
  uint64_t stored_total;
  double fraction;
} canet_partition;

typedef struct canet_metrics {
  uint64_t tp, fp, fn, tn;
  double precision, recall, f1, iou;
  double loss;
} canet_metrics;

typedef struct canet_row {
  size_t epoch;
  const char* split;
  const char* dataset_id;
  double loss;
  int has_metrics;
  double f1, precision, recall, iou;
  double seconds;
} canet_row;

typedef void (*canet_row_fn)(void* ctx, const canet_row* row);

typedef struct canet_run_summary {
  size_t epochs;
  double first_loss;
  double last_loss;
  double seconds;
  uint64_t updated_params;
  uint64_t total_params;
} canet_run_summary;

CANET_API const char* canet_version(void);
CANET_API const char* canet_last_error(void);
CANET_API const char* canet_status_name(canet_status status);

/* Experiment configuration ([model], [train], [data] sections). */
CANET_API canet_status canet_config_default(canet_config** out);
CANET_API canet_status canet_config_load(const char* path, canet_config** out);
CANET_API void canet_config_free(canet_config* config);
/* Resolved text, valid until the config is freed. */
CANET_API const char* canet_config_text(const canet_config* config);
CANET_API int canet_config_has_data(const canet_config* config);

/* Datasets. gen-data spec files hold a dataset spec or `family = <seed>`. */
CANET_API canet_status canet_generate_data(const char* spec_path,
                                           const char* out_dir);
CANET_API canet_status canet_dataset_load(const char* root, const char* split,
                                          canet_dataset** out);
/* In-memory split of the config's [data] spec. */
CANET_API canet_status canet_dataset_generate(const canet_config* config,
                                              const char* split,
                                              canet_dataset** out);
CANET_API void canet_dataset_free(canet_dataset* dataset);
CANET_API size_t canet_dataset_size(const canet_dataset* dataset);
/* Manifest name of the dataset, or its directory name. */
CANET_API const char* canet_dataset_name(const canet_dataset* dataset);

/* Models. */
CANET_API canet_status canet_model_create(const canet_config* config,
                                          canet_model** out);
CANET_API canet_status canet_model_load(const char* path, canet_model** out);
CANET_API canet_status canet_model_save(canet_model* model, const char* path);
CANET_API canet_status canet_model_clone(canet_model* model, canet_model** out);
CANET_API void canet_model_free(canet_model* model);
/* init_from may be NULL for a freshly initialized adapter. */
CANET_API canet_status canet_model_add_dataset(canet_model* model,
                                               const char* id,
                                               const char* init_from);
CANET_API size_t canet_model_dataset_count(const canet_model* model);
/* Registration order; NULL when out of range. */
CANET_API const char* canet_model_dataset_id(const canet_model* model,
                                             size_t index);
CANET_API canet_status canet_model_apply_ablation(canet_model* model,
                                                  const char* which);
CANET_API const char* canet_model_ablation(const canet_model* model);
CANET_API size_t canet_model_active_bank_count(const canet_model* model);
CANET_API canet_status canet_model_partition(canet_model* model,
                                             const char* id,
                                             canet_partition* out);
/* x1, x2: n*3*h*w floats (NCHW). logits: n*2*h*w. mask (n*2*h*w, may be
 * NULL) receives the change-attention mask, all ones when it is ablated. */
CANET_API canet_status canet_model_forward(canet_model* model, const char* id,
                                           size_t n, size_t h, size_t w,
                                           const float* x1, const float* x2,
                                           float* logits, float* mask);

/* Training. eval may be NULL; csv_path may be NULL; on_row may be NULL.
 * Per-row wall-clock times go next to csv_path as <stem>_timing.csv. */
CANET_API canet_status canet_train(canet_model* model, const char* id,
                                   const canet_dataset* train,
                                   const canet_dataset* eval,
                                   const canet_config* config,
                                   const char* csv_path, canet_row_fn on_row,
                                   void* ctx, canet_run_summary* out);
/* Registers new_id (initialized per the config's adapt_init from the first
 * registered dataset) and trains its adapter only. */
CANET_API canet_status canet_adapt(canet_model* model, const char* new_id,
                                   const canet_dataset* train,
                                   const canet_dataset* eval,
                                   const canet_config* config,
                                   const char* csv_path, canet_row_fn on_row,
                                   void* ctx, canet_run_summary* out);
/* Fine-tunes the whole network through historical_id's adapter and BN. */
CANET_API canet_status canet_finetune_baseline(
    canet_model* model, const char* historical_id, const canet_dataset* train,
    const canet_dataset* eval, const canet_config* config,
    const char* csv_path, canet_row_fn on_row, void* ctx,
    canet_run_summary* out);
/* emit_dir may be NULL. */
CANET_API canet_status canet_evaluate(canet_model* model, const char* id,
                                      const canet_dataset* data,
                                      const char* emit_dir,
                                      canet_metrics* out);
/* FNV-1a over the raw bits of all eval-mode logits for `data`. */
CANET_API canet_status canet_output_digest(canet_model* model, const char* id,
                                           const canet_dataset* data,
                                           uint64_t* out);

/* Finite-difference gradient checks. tolerance <= 0 selects the default. */
CANET_API size_t canet_gradcheck_case_count(void);
CANET_API const char* canet_gradcheck_case_name(size_t index);
CANET_API canet_status canet_gradcheck_run(const char* name, double tolerance,
                                           double* max_rel_error,
                                           double* tolerance_used,
                                           int* passed);

#ifdef __cplusplus
}
#endif

#endif /* CANET_CANET_H_ */
