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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <canet/canet.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

const char* kConfig =
    "[model]\n"
    "widths = 8, 8, 16\n"
    "kinds = plain, residual, inverted_residual\n"
    "icm_width = 8\n"
    "seed = 11\n"
    "[train]\n"
    "epochs = 1\n"
    "batch = 4\n"
    "lr = 0.01\n"
    "[data]\n"
    "name = capi\n"
    "seed = 9\n"
    "height = 16\n"
    "width = 16\n"
    "n_train = 8\n"
    "n_val = 4\n"
    "n_test = 4\n";

fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("canet_capi_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

canet_config* load_config(const fs::path& dir) {
  const fs::path path = dir / "exp.ini";
  std::ofstream(path) << kConfig;
  canet_config* c = nullptr;
  REQUIRE(canet_config_load(path.c_str(), &c) == CANET_OK);
  return c;
}

int rows_seen = 0;
void count_row(void* ctx, const canet_row* row) {
  CHECK(ctx == &rows_seen);
  CHECK(row->dataset_id != nullptr);
  ++rows_seen;
}

}  // namespace

TEST_CASE("status names and errors") {
  CHECK(std::strcmp(canet_status_name(CANET_OK), "ok") == 0);
  CHECK(std::strcmp(canet_status_name(CANET_E_IO), "i/o error") == 0);
  CHECK(std::string(canet_version()).size() > 0);
  canet_config* c = nullptr;
  CHECK(canet_config_load("/nonexistent/exp.ini", &c) == CANET_E_IO);
  CHECK(c == nullptr);
  CHECK(std::string(canet_last_error()).find("/nonexistent/exp.ini") !=
        std::string::npos);
  CHECK(canet_config_default(nullptr) == CANET_E_INVALID_ARGUMENT);
  canet_model* m = nullptr;
  CHECK(canet_model_load("/nonexistent.canet", &m) != CANET_OK);
  CHECK(m == nullptr);

  fs::path dir = scratch("badcfg");
  std::ofstream(dir / "bad.ini") << "[model]\nicm_width = -3\n";
  CHECK(canet_config_load((dir / "bad.ini").c_str(), &c) == CANET_E_CONFIG);
  CHECK(std::string(canet_last_error()).find("icm_width") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("model handles") {
  fs::path dir = scratch("model");
  canet_config* c = load_config(dir);
  CHECK(canet_config_has_data(c) == 1);
  CHECK(std::string(canet_config_text(c)).find("[model]") == 0);

  canet_model* m = nullptr;
  REQUIRE(canet_model_create(c, &m) == CANET_OK);
  CHECK(canet_model_add_dataset(m, "a", nullptr) == CANET_OK);
  CHECK(canet_model_add_dataset(m, "a", nullptr) == CANET_E_DUPLICATE_DATASET);
  CHECK(canet_model_add_dataset(m, "b", "zzz") == CANET_E_UNKNOWN_DATASET);
  CHECK(canet_model_add_dataset(m, "b", "a") == CANET_OK);
  CHECK(canet_model_dataset_count(m) == 2);
  CHECK(std::strcmp(canet_model_dataset_id(m, 1), "b") == 0);
  CHECK(canet_model_dataset_id(m, 2) == nullptr);

  canet_partition p{};
  REQUIRE(canet_model_partition(m, "a", &p) == CANET_OK);
  CHECK(p.total == p.shared_count + p.adapter_count + p.bn_bank_count_per_dataset);
  CHECK(p.fraction ==
        doctest::Approx(double(p.adapter_count + p.bn_bank_count_per_dataset) /
                        double(p.total)));
  CHECK(p.stored_total ==
        p.shared_count + 2 * (p.adapter_count + p.bn_bank_count_per_dataset));
  CHECK(canet_model_partition(m, "zzz", &p) == CANET_E_UNKNOWN_DATASET);

  const std::size_t n = 1, h = 16, w = 16;
  std::vector<float> x1(n * 3 * h * w), x2(x1.size()), logits(n * 2 * h * w),
      mask(n * 2 * h * w);
  for (std::size_t i = 0; i < x1.size(); ++i) {
    x1[i] = float(i % 7) / 7.0f;
    x2[i] = float(i % 5) / 5.0f;
  }
  CHECK(canet_model_forward(m, "a", n, 15, w, x1.data(), x2.data(),
                            logits.data(), nullptr) != CANET_OK);
  CHECK(std::string(canet_last_error()).size() > 0);
  CHECK(canet_model_forward(m, "zzz", n, h, w, x1.data(), x2.data(),
                            logits.data(), nullptr) == CANET_E_UNKNOWN_DATASET);

  // Untrained BN banks have no running statistics yet.
  CHECK(canet_model_forward(m, "a", n, h, w, x1.data(), x2.data(),
                            logits.data(), mask.data()) == CANET_E_STATE);

  CHECK(canet_model_apply_ablation(m, "no_such") != CANET_OK);
  CHECK(std::strcmp(canet_model_ablation(m), "none") == 0);
  CHECK(canet_model_active_bank_count(m) >= 2);

  canet_model_free(m);
  canet_config_free(c);
  fs::remove_all(dir);
}

TEST_CASE("train, evaluate, save, adapt") {
  fs::path dir = scratch("train");
  canet_config* c = load_config(dir);
  canet_dataset *train = nullptr, *test = nullptr;
  REQUIRE(canet_dataset_generate(c, "train", &train) == CANET_OK);
  REQUIRE(canet_dataset_generate(c, "test", &test) == CANET_OK);
  CHECK(canet_dataset_size(train) == 8);
  CHECK(canet_dataset_size(test) == 4);
  canet_dataset* bogus = nullptr;
  CHECK(canet_dataset_generate(c, "holdout", &bogus) != CANET_OK);

  canet_model* m = nullptr;
  REQUIRE(canet_model_create(c, &m) == CANET_OK);
  REQUIRE(canet_model_add_dataset(m, "hist", nullptr) == CANET_OK);
  canet_run_summary s{};
  rows_seen = 0;
  const fs::path csv = dir / "run.csv";
  REQUIRE(canet_train(m, "hist", train, test, c, csv.c_str(), count_row,
                      &rows_seen, &s) == CANET_OK);
  CHECK(s.epochs == 1);
  CHECK(rows_seen >= 2);
  CHECK(std::isfinite(s.first_loss));
  CHECK(fs::exists(csv));
  CHECK(fs::exists(dir / "run_timing.csv"));
  CHECK(s.updated_params == s.total_params);

  canet_metrics met{};
  REQUIRE(canet_evaluate(m, "hist", test, nullptr, &met) == CANET_OK);
  CHECK(met.tp + met.fp + met.fn + met.tn == 4u * 16u * 16u);
  CHECK(met.f1 >= 0.0);
  CHECK(met.f1 <= 1.0);

  const std::size_t n = 1, h = 16, w = 16;
  std::vector<float> x1(n * 3 * h * w, 0.25f), x2(x1.size(), 0.75f),
      logits(n * 2 * h * w), mask(n * 2 * h * w);
  REQUIRE(canet_model_forward(m, "hist", n, h, w, x1.data(), x2.data(),
                              logits.data(), mask.data()) == CANET_OK);
  for (std::size_t i = 0; i < h * w; ++i) {
    CHECK(mask[i] + mask[h * w + i] == doctest::Approx(1.0f).epsilon(1e-5));
    CHECK(std::isfinite(logits[i]));
  }

  std::uint64_t before = 0, after = 0, reloaded = 0;
  REQUIRE(canet_output_digest(m, "hist", test, &before) == CANET_OK);

  const fs::path ckpt = dir / "model.canet";
  REQUIRE(canet_model_save(m, ckpt.c_str()) == CANET_OK);
  canet_model* back = nullptr;
  REQUIRE(canet_model_load(ckpt.c_str(), &back) == CANET_OK);
  REQUIRE(canet_output_digest(back, "hist", test, &reloaded) == CANET_OK);
  CHECK(reloaded == before);

  canet_run_summary a{};
  REQUIRE(canet_adapt(back, "new", train, nullptr, c, nullptr, nullptr,
                      nullptr, &a) == CANET_OK);
  REQUIRE(canet_output_digest(back, "hist", test, &after) == CANET_OK);
  CHECK(after == before);
  canet_partition p{};
  REQUIRE(canet_model_partition(back, "new", &p) == CANET_OK);
  CHECK(a.updated_params == p.adapter_count + p.bn_bank_count_per_dataset);
  CHECK(canet_adapt(back, "new", train, nullptr, c, nullptr, nullptr, nullptr,
                    &a) == CANET_E_DUPLICATE_DATASET);

  canet_model* copy = nullptr;
  REQUIRE(canet_model_clone(back, &copy) == CANET_OK);
  REQUIRE(canet_finetune_baseline(copy, "hist", train, nullptr, c, nullptr,
                                  nullptr, nullptr, &a) == CANET_OK);
  CHECK(a.updated_params == a.total_params);
  std::uint64_t tuned = 0;
  REQUIRE(canet_output_digest(copy, "hist", test, &tuned) == CANET_OK);
  CHECK(tuned != before);
  REQUIRE(canet_output_digest(back, "hist", test, &after) == CANET_OK);
  CHECK(after == before);

  canet_model_free(copy);
  canet_model_free(back);
  canet_model_free(m);
  canet_dataset_free(train);
  canet_dataset_free(test);
  canet_config_free(c);
  fs::remove_all(dir);
}

TEST_CASE("gradcheck registry") {
  const std::size_t count = canet_gradcheck_case_count();
  REQUIRE(count > 10);
  CHECK(canet_gradcheck_case_name(count) == nullptr);
  double err = -1, tol = -1;
  int passed = -1;
  REQUIRE(canet_gradcheck_run("sigmoid", 0.0, &err, &tol, &passed) == CANET_OK);
  CHECK(passed == 1);
  CHECK(tol > 0);
  CHECK(err < tol);
  REQUIRE(canet_gradcheck_run("sigmoid", 1e-30, &err, &tol, &passed) ==
          CANET_OK);
  CHECK(tol == 1e-30);
  CHECK(passed == 0);
  CHECK(canet_gradcheck_run("nope", 0.0, &err, &tol, &passed) ==
        CANET_E_INVALID_ARGUMENT);
}

TEST_CASE("generate data from a spec file") {
  fs::path dir = scratch("gen");
  std::ofstream(dir / "spec.ini")
      << "name = g\nseed = 2\nheight = 16\nwidth = 16\nn_train = 3\n"
         "n_val = 1\nn_test = 2\n";
  REQUIRE(canet_generate_data((dir / "spec.ini").c_str(),
                              (dir / "out").c_str()) == CANET_OK);
  canet_dataset* d = nullptr;
  REQUIRE(canet_dataset_load((dir / "out").c_str(), "train", &d) == CANET_OK);
  CHECK(canet_dataset_size(d) == 3);
  CHECK(std::strcmp(canet_dataset_name(d), "g") == 0);
  canet_dataset_free(d);
  CHECK(canet_dataset_load((dir / "missing").c_str(), "train", &d) != CANET_OK);
  fs::remove_all(dir);
}
