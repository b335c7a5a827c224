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

// Command-line front end. Links only the C interface.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "canet/canet.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Thrown to unwind to main with a status already reported.
struct Exit {
  int code;
};

int exit_code(canet_status s) {
  switch (s) {
    case CANET_OK:
      return 0;
    case CANET_E_INVALID_ARGUMENT:
    case CANET_E_CONFIG:
    case CANET_E_UNKNOWN_DATASET:
    case CANET_E_DUPLICATE_DATASET:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

void check(canet_status s, const std::string& what) {
  if (s == CANET_OK) return;
  std::fprintf(stderr, "canet: %s: %s (%s)\n", what.c_str(), canet_last_error(),
               canet_status_name(s));
  throw Exit{exit_code(s)};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr =
    std::unique_ptr<canet_config, Deleter<canet_config, canet_config_free>>;
using DatasetPtr =
    std::unique_ptr<canet_dataset, Deleter<canet_dataset, canet_dataset_free>>;
using ModelPtr =
    std::unique_ptr<canet_model, Deleter<canet_model, canet_model_free>>;

ConfigPtr load_config(const std::string& path) {
  canet_config* c = nullptr;
  if (path.empty()) {
    check(canet_config_default(&c), "default config");
  } else {
    check(canet_config_load(path.c_str(), &c), "config " + path);
  }
  return ConfigPtr(c);
}

DatasetPtr load_data(const std::string& root, const std::string& split,
                     bool optional = false) {
  if (optional && !fs::exists(fs::path(root) / split / "A")) return nullptr;
  canet_dataset* d = nullptr;
  check(canet_dataset_load(root.c_str(), split.c_str(), &d),
        "loading " + root + "/" + split);
  return DatasetPtr(d);
}

ModelPtr load_model(const std::string& path) {
  canet_model* m = nullptr;
  check(canet_model_load(path.c_str(), &m), "checkpoint " + path);
  return ModelPtr(m);
}

void make_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    std::fprintf(stderr, "canet: cannot create %s: %s\n", dir.c_str(),
                 ec.message().c_str());
    throw Exit{kExitRuntime};
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out.good()) {
    std::fprintf(stderr, "canet: cannot write %s\n", path.c_str());
    throw Exit{kExitRuntime};
  }
}

std::string resolved_config(const canet_config* cfg,
                            const std::vector<std::string>& notes) {
  std::string out = "# canet " + std::string(canet_version()) + "\n";
  for (const std::string& n : notes) out += "# " + n + "\n";
  return out + canet_config_text(cfg);
}

std::string eval_split(const canet_config* cfg) {
  const std::string text = canet_config_text(cfg);
  const auto pos = text.find("eval_split = ");
  if (pos == std::string::npos) return "test";
  const auto end = text.find('\n', pos);
  return text.substr(pos + 13, end - pos - 13);
}

const char* kMetricsHeader = "split,dataset_id,loss,f1,precision,recall,iou";

std::string metrics_row(const std::string& split, const std::string& id,
                        const canet_metrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%s,%.9g,%.9g,%.9g,%.9g,%.9g",
                split.c_str(), id.c_str(), m.loss, m.f1, m.precision, m.recall,
                m.iou);
  return buf;
}

void print_row(void*, const canet_row* r) {
  if (r->has_metrics) {
    std::fprintf(stderr, "epoch %zu %-5s %-8s loss %.5f f1 %.4f iou %.4f %.1fs\n",
                 r->epoch, r->split, r->dataset_id, r->loss, r->f1, r->iou,
                 r->seconds);
  } else {
    std::fprintf(stderr, "epoch %zu %-5s %-8s loss %.5f %.1fs\n", r->epoch,
                 r->split, r->dataset_id, r->loss, r->seconds);
  }
}

canet_metrics evaluate(canet_model* model, const std::string& id,
                       const canet_dataset* data, const char* emit = nullptr) {
  canet_metrics m{};
  check(canet_evaluate(model, id.c_str(), data, emit, &m),
        "evaluating " + id);
  return m;
}

void print_partition(canet_model* model, const std::string& id,
                     const canet_run_summary& run) {
  canet_partition p{};
  check(canet_model_partition(model, id.c_str(), &p), "partition");
  std::printf(
      "updated parameters: %llu of %llu (fraction %.6f); shared %llu, "
      "adapter %llu, per-dataset bn %llu\n",
      static_cast<unsigned long long>(run.updated_params),
      static_cast<unsigned long long>(p.total), p.fraction,
      static_cast<unsigned long long>(p.shared_count),
      static_cast<unsigned long long>(p.adapter_count),
      static_cast<unsigned long long>(p.bn_bank_count_per_dataset));
}

// Commands

int cmd_gen_data(const std::string& spec, const std::string& out) {
  check(canet_generate_data(spec.c_str(), out.c_str()), "gen-data");
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
  ConfigPtr cfg = load_config(config_path);
  const std::string split = eval_split(cfg.get());
  DatasetPtr train, eval;
  if (!data.empty()) {
    train = load_data(data, "train");
    eval = load_data(data, split, true);
  } else {
    if (!canet_config_has_data(cfg.get())) {
      std::fprintf(stderr, "canet: train needs --data or a [data] section\n");
      return kExitUsage;
    }
    canet_dataset* d = nullptr;
    check(canet_dataset_generate(cfg.get(), "train", &d), "generating data");
    train.reset(d);
    check(canet_dataset_generate(cfg.get(), split.c_str(), &d),
          "generating data");
    eval.reset(d);
  }
  const std::string id = canet_dataset_name(train.get());
  make_out_dir(out);
  write_text((fs::path(out) / "config.ini").string(),
             resolved_config(cfg.get(), {"command: train",
                                         "data: " + (data.empty() ? "[data]" : data),
                                         "dataset_id: " + id}));
  canet_model* raw = nullptr;
  check(canet_model_create(cfg.get(), &raw), "creating model");
  ModelPtr model(raw);
  check(canet_model_add_dataset(model.get(), id.c_str(), nullptr),
        "registering " + id);
  canet_run_summary run{};
  const std::string csv = (fs::path(out) / "run.csv").string();
  check(canet_train(model.get(), id.c_str(), train.get(), eval.get(), cfg.get(),
                    csv.c_str(), print_row, nullptr, &run),
        "training");
  check(canet_model_save(model.get(),
                         (fs::path(out) / "checkpoint.canet").string().c_str()),
        "saving checkpoint");
  std::string rows = std::string(kMetricsHeader) + "\n";
  if (eval) rows += metrics_row(split, id, evaluate(model.get(), id, eval.get())) + "\n";
  write_text((fs::path(out) / "metrics.csv").string(), rows);
  std::printf("%s", rows.c_str());
  std::printf("loss: first epoch %.6f, last epoch %.6f\n", run.first_loss,
              run.last_loss);
  return 0;
}

int cmd_adapt(const std::string& checkpoint, const std::string& new_data,
              const std::string& id, const std::string& config_path,
              const std::string& out, const std::string& hist_data) {
  ConfigPtr cfg = load_config(config_path);
  const std::string split = eval_split(cfg.get());
  ModelPtr model = load_model(checkpoint);
  const char* first = canet_model_dataset_id(model.get(), 0);
  if (!first) {
    std::fprintf(stderr, "canet: checkpoint has no historical dataset\n");
    return kExitRuntime;
  }
  const std::string hist_id = first;
  DatasetPtr train = load_data(new_data, "train");
  DatasetPtr eval = load_data(new_data, split, true);
  const canet_dataset* probe = eval ? eval.get() : train.get();
  DatasetPtr hist;
  if (!hist_data.empty()) hist = load_data(hist_data, split);

  uint64_t before = 0, after = 0;
  check(canet_output_digest(model.get(), hist_id.c_str(), probe, &before),
        "historical outputs");
  canet_metrics hist_before{};
  if (hist) hist_before = evaluate(model.get(), hist_id, hist.get());

  make_out_dir(out);
  write_text((fs::path(out) / "config.ini").string(),
             resolved_config(cfg.get(), {"command: adapt",
                                         "checkpoint: " + checkpoint,
                                         "data: " + new_data,
                                         "dataset_id: " + id}));
  canet_run_summary run{};
  const std::string csv = (fs::path(out) / "run.csv").string();
  check(canet_adapt(model.get(), id.c_str(), train.get(), eval.get(), cfg.get(),
                    csv.c_str(), print_row, nullptr, &run),
        "adapting to " + id);
  check(canet_model_save(model.get(),
                         (fs::path(out) / "checkpoint.canet").string().c_str()),
        "saving checkpoint");
  check(canet_output_digest(model.get(), hist_id.c_str(), probe, &after),
        "historical outputs");

  std::string rows = std::string(kMetricsHeader) + "\n";
  if (hist) {
    const canet_metrics hist_after = evaluate(model.get(), hist_id, hist.get());
    rows += metrics_row(split + "_before", hist_id, hist_before) + "\n";
    rows += metrics_row(split, hist_id, hist_after) + "\n";
  }
  if (eval) rows += metrics_row(split, id, evaluate(model.get(), id, eval.get())) + "\n";
  write_text((fs::path(out) / "metrics.csv").string(), rows);
  std::printf("%s", rows.c_str());
  std::printf("historical dataset %s outputs unchanged: %s\n", hist_id.c_str(),
              before == after ? "yes" : "no");
  print_partition(model.get(), id, run);
  return before == after ? 0 : kExitRuntime;
}

int cmd_eval(const std::string& checkpoint, const std::string& data,
             const std::string& id, const std::string& emit,
             const std::string& split) {
  ModelPtr model = load_model(checkpoint);
  DatasetPtr d = load_data(data, split);
  const canet_metrics m =
      evaluate(model.get(), id, d.get(), emit.empty() ? nullptr : emit.c_str());
  std::printf("%s\n%s\n", kMetricsHeader, metrics_row(split, id, m).c_str());
  return 0;
}

int cmd_gradcheck(const std::string& ops, double tolerance) {
  std::vector<std::string> names;
  if (ops == "all") {
    for (size_t i = 0; i < canet_gradcheck_case_count(); ++i) {
      names.push_back(canet_gradcheck_case_name(i));
    }
  } else {
    names.push_back(ops);
    double err = 0, tol = 0;
    int passed = 0;
    // Resolve the name before printing anything.
    bool known = false;
    for (size_t i = 0; i < canet_gradcheck_case_count(); ++i) {
      known = known || ops == canet_gradcheck_case_name(i);
    }
    if (!known) {
      check(canet_gradcheck_run(ops.c_str(), tolerance, &err, &tol, &passed),
            "gradcheck " + ops);
    }
  }
  int failures = 0;
  std::printf("%-24s %-14s %-10s %s\n", "op", "max_rel_error", "tolerance",
              "status");
  for (const std::string& n : names) {
    double err = 0, tol = 0;
    int passed = 0;
    check(canet_gradcheck_run(n.c_str(), tolerance, &err, &tol, &passed),
          "gradcheck " + n);
    std::printf("%-24s %-14.3e %-10.1e %s\n", n.c_str(), err, tol,
                passed ? "PASS" : "FAIL");
    failures += !passed;
  }
  return failures ? kExitRuntime : 0;
}

int cmd_ablate(const std::string& checkpoint, const std::string& data,
               const std::string& which, const std::string& out,
               const std::string& config_path, const std::string& hist_data) {
  ConfigPtr cfg = load_config(config_path);
  const std::string split = eval_split(cfg.get());
  DatasetPtr train = load_data(data, "train");
  DatasetPtr eval = load_data(data, split);
  DatasetPtr hist;
  if (!hist_data.empty()) hist = load_data(hist_data, split);
  const std::string id = canet_dataset_name(train.get());
  make_out_dir(out);
  write_text((fs::path(out) / "config.ini").string(),
             resolved_config(cfg.get(), {"command: ablate", "which: " + which,
                                         "checkpoint: " + checkpoint,
                                         "data: " + data}));

  std::string rows = "variant," + std::string(kMetricsHeader) + "\n";
  for (const std::string& variant : {std::string("none"), which}) {
    ModelPtr model = load_model(checkpoint);
    const std::string hist_id = canet_model_dataset_id(model.get(), 0)
                                    ? canet_model_dataset_id(model.get(), 0)
                                    : "";
    check(canet_model_apply_ablation(model.get(), variant.c_str()),
          "ablation " + variant);
    const std::string csv =
        (fs::path(out) / ("run_" + variant + ".csv")).string();
    canet_run_summary run{};
    check(canet_adapt(model.get(), id.c_str(), train.get(), eval.get(),
                      cfg.get(), csv.c_str(), print_row, nullptr, &run),
          "adapting " + variant);
    std::printf("variant %s: active BN banks: %zu\n", variant.c_str(),
                canet_model_active_bank_count(model.get()));
    if (hist) {
      rows += variant + "," +
              metrics_row(split, hist_id, evaluate(model.get(), hist_id, hist.get())) +
              "\n";
    }
    rows += variant + "," +
            metrics_row(split, id, evaluate(model.get(), id, eval.get())) + "\n";
  }
  write_text((fs::path(out) / "ablation.csv").string(), rows);
  std::printf("%s", rows.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CANet change detection: data generation, training, "
               "adaptation and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(canet_version()));

  std::string spec, out, config, data, checkpoint, new_data, id, emit, ops,
      which, hist_data, split = "test";
  double tolerance = 0.0;

  auto* gen = app.add_subcommand("gen-data", "Write a synthetic dataset");
  gen->add_option("--spec", spec, "Dataset spec file")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model on one dataset");
  train->add_option("--config", config, "Experiment config")->required();
  train->add_option("--data", data, "Dataset directory");
  train->add_option("--out", out, "Output directory")->required();

  auto* adapt = app.add_subcommand("adapt", "Adapt a trained model to a new dataset");
  adapt->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  adapt->add_option("--new-data", new_data, "New dataset directory")->required();
  adapt->add_option("--dataset-id", id, "Id for the new dataset")->required();
  adapt->add_option("--config", config, "Experiment config")->required();
  adapt->add_option("--out", out, "Output directory")->required();
  adapt->add_option("--hist-data", hist_data,
                    "Historical dataset directory, for before/after metrics");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint")->required();
  eval->add_option("--data", data, "Dataset directory")->required();
  eval->add_option("--dataset-id", id, "Dataset id in the checkpoint")->required();
  eval->add_option("--emit-maps", emit, "Write predicted change maps (PGM) here");
  eval->add_option("--split", split, "Split to evaluate")
      ->check(CLI::IsMember({"train", "val", "test"}));

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("--ops", ops, "all, or one case name")->default_val("all");
  grad->add_option("--tolerance", tolerance,
                   "Override the maximum relative error")
      ->check(CLI::PositiveNumber);

  auto* ablate = app.add_subcommand("ablate", "Adapt with and without an ablation");
  ablate->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  ablate->add_option("--data", data, "New dataset directory")->required();
  ablate->add_option("--which", which, "Ablation")
      ->required()
      ->check(CLI::IsMember({"no_icm", "shared_icm", "shared_bn"}));
  ablate->add_option("--out", out, "Output directory")->required();
  ablate->add_option("--config", config, "Experiment config");
  ablate->add_option("--hist-data", hist_data,
                     "Historical dataset directory, for its metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(spec, out);
    if (*train) return cmd_train(config, data, out);
    if (*adapt) return cmd_adapt(checkpoint, new_data, id, config, out, hist_data);
    if (*eval) return cmd_eval(checkpoint, data, id, emit, split);
    if (*grad) return cmd_gradcheck(ops, tolerance);
    if (*ablate) return cmd_ablate(checkpoint, data, which, out, config, hist_data);
  } catch (const Exit& e) {
    return e.code;
  }
  return kExitUsage;
}
