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


#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "canet/checkpoint.hpp"
#include "canet/ops.hpp"
#include "canet/trainer.hpp"
#include "doctest.h"

namespace fs = std::filesystem;
using canet::CANetModel;
using canet::Metrics;
using canet::Mode;
using canet::SamplePair;
using canet::TrainConfig;

namespace {

canet::ModelConfig small_model() {
  canet::ModelConfig c;
  c.encoder.widths = {8, 16, 16, 32};
  c.icm_width = 8;
  c.se_reduction = 4;
  c.cbam_reduction = 4;
  c.seed = 5;
  return c;
}

canet::DatasetSpec small_data(const std::string& name, std::uint64_t seed) {
  canet::DatasetSpec s;
  s.name = name;
  s.seed = seed;
  s.n_train = 16;
  s.n_val = 4;
  s.n_test = 6;
  s.height = 32;
  s.width = 32;
  return s;
}

TrainConfig quick(std::size_t epochs = 2) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.seed = 9;
  return t;
}

std::uint64_t checksum(const std::vector<canet::Parameter<float>*>& ps) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto* p : ps)
    for (float v : p->value.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      h = (h ^ bits) * 1099511628211ull;
    }
  return h;
}

std::vector<float> eval_logits(CANetModel<float>& m, const std::string& id,
                               const std::vector<SamplePair>& data) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  canet::Batch b = canet::make_batch(data, idx);
  auto y = m.forward(b.x1, b.x2, id, Mode::kEval).logits;
  return std::vector<float>(y.data().begin(), y.data().end());
}

}  // namespace

TEST_CASE("metrics by hand") {
  Metrics m = Metrics::from_counts(8, 2, 2, 88);
  CHECK(m.precision == 0.8);
  CHECK(m.recall == 0.8);
  CHECK(m.f1 == 0.8);
  CHECK(m.iou == 8.0 / 12.0);
  CHECK(m.f1 == doctest::Approx(2 * m.iou / (1 + m.iou)).epsilon(1e-15));

  Metrics missed = Metrics::from_counts(0, 0, 5, 10);
  CHECK(missed.recall == 0.0);
  CHECK(missed.f1 == 0.0);
  CHECK(missed.iou == 0.0);
  Metrics empty = Metrics::from_counts(0, 0, 0, 10);
  CHECK(empty.f1 == 1.0);
  CHECK(empty.iou == 1.0);

  Metrics perfect;
  std::vector<std::uint8_t> truth{0, 1, 1, 0, 1};
  canet::accumulate(perfect, truth, truth);
  perfect.finalize();
  CHECK(perfect.f1 == 1.0);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.iou == 1.0);
}

TEST_CASE("metrics ignore sample order") {
  std::mt19937_64 rng(3);
  std::vector<std::vector<std::uint8_t>> preds(6), truths(6);
  for (std::size_t s = 0; s < 6; ++s)
    for (int k = 0; k < 50; ++k) {
      preds[s].push_back(rng() % 3 == 0);
      truths[s].push_back(rng() % 4 == 0);
    }
  Metrics fwd, rev;
  for (std::size_t s = 0; s < 6; ++s) canet::accumulate(fwd, preds[s], truths[s]);
  for (std::size_t s = 6; s-- > 0;) canet::accumulate(rev, preds[s], truths[s]);
  fwd.finalize();
  rev.finalize();
  CHECK(fwd.tp == rev.tp);
  CHECK(fwd.f1 == rev.f1);
  CHECK(fwd.f1 == doctest::Approx(2 * fwd.iou / (1 + fwd.iou)).epsilon(1e-12));
}

TEST_CASE("prediction takes the larger logit") {
  canet::Tensor<float> z(canet::Shape{1, 2, 1, 3},
                         std::vector<float>{0.f, 1.f, 2.f, 1.f, 1.f, 0.f});
  CHECK(canet::predict(z, 1) == std::vector<std::uint8_t>{1, 0, 0});
}

TEST_CASE("batches flip images and labels together") {
  auto data = canet::generate_split(small_data("f", 2), canet::Split::kTrain);
  canet::Batch plain = canet::make_batch(data, {3});
  canet::Batch flipped = canet::make_batch(data, {3}, {true});
  canet::Tensor<float> back1 = canet::hflip(flipped.x1);
  canet::Tensor<float> back2 = canet::hflip(flipped.x2);
  CHECK(std::equal(back1.data().begin(), back1.data().end(), plain.x1.data().begin()));
  CHECK(std::equal(back2.data().begin(), back2.data().end(), plain.x2.data().begin()));
  canet::LabelMap lab = flipped.label;
  canet::hflip(lab);
  CHECK(lab.values == plain.label.values);

  // A flip-equivariant map (pointwise difference) keeps the same loss.
  auto diff_logits = [](const canet::Batch& b) {
    canet::Tensor<float> d(canet::Shape{1, 2, 32, 32});
    for (std::size_t i = 0; i < 32; ++i)
      for (std::size_t j = 0; j < 32; ++j) {
        d.at(0, 1, i, j) = std::abs(b.x1.at(0, 0, i, j) - b.x2.at(0, 0, i, j));
      }
    return canet::softmax_cross_entropy(d, b.label).item();
  };
  CHECK(diff_logits(plain) == doctest::Approx(diff_logits(flipped)).epsilon(1e-6));
}

TEST_CASE("untrained loss is near ln 2") {
  CANetModel<float> m(canet::ModelConfig{});
  m.add_dataset("d");
  auto spec = small_data("d", 1);
  spec.height = spec.width = 64;
  auto data = canet::generate_split(spec, canet::Split::kTrain);
  canet::Batch b = canet::make_batch(data, {0, 1, 2, 3, 4, 5, 6, 7});
  auto r = m.forward(b.x1, b.x2, "d", Mode::kTrain);
  const double loss = canet::softmax_cross_entropy(r.logits, b.label).item();
  CHECK(std::abs(loss - std::log(2.0)) < 0.2);
}

TEST_CASE("training is deterministic and reports rows") {
  auto data = canet::generate_split(small_data("d", 4), canet::Split::kTrain);
  auto test = canet::generate_split(small_data("d", 4), canet::Split::kTest);
  auto run = [&] {
    auto m = std::make_unique<CANetModel<float>>(small_model());
    m->add_dataset("d");
    std::vector<canet::RunRow> seen;
    auto rec = canet::train(*m, "d", data, quick(), {{"test", "d", &test}},
                            [&](const canet::RunRow& r) { seen.push_back(r); });
    CHECK(seen.size() == rec.rows.size());
    return std::make_pair(std::move(m), rec);
  };
  auto [m1, r1] = run();
  auto [m2, r2] = run();
  CHECK(r1.epoch_loss == r2.epoch_loss);
  CHECK(r1.csv() == r2.csv());
  CHECK(canet::serialize_model(*m1) == canet::serialize_model(*m2));
  REQUIRE(r1.rows.size() == 4);
  CHECK(r1.rows[0].split == "train");
  CHECK(r1.rows[1].split == "test");
  CHECK(r1.rows[1].metrics.has_value());
  CHECK(r1.csv().rfind("epoch,split,dataset_id,loss,f1,precision,recall,iou\n", 0) == 0);
  CHECK(r1.timing_csv().find("seconds") != std::string::npos);

  // Final eval row equals a fresh evaluation.
  auto ev = canet::evaluate(*m1, "d", test);
  CHECK(ev.loss == r1.rows[3].loss);
  CHECK(ev.metrics.f1 == r1.rows[3].metrics->f1);
}

TEST_CASE("adaptation leaves the historical dataset untouched") {
  auto hist_train = canet::generate_split(small_data("h", 6), canet::Split::kTrain);
  auto hist_test = canet::generate_split(small_data("h", 6), canet::Split::kTest);
  auto new_train = canet::generate_split(small_data("n", 7), canet::Split::kTrain);
  CANetModel<float> m(small_model());
  m.add_dataset("h");
  canet::train(m, "h", hist_train, quick(1));

  auto shared = m.trainable_set("h", canet::Scope::kFull);
  const std::uint64_t before_sum = checksum(m.parameters());
  const auto before_logits = eval_logits(m, "h", hist_test);
  const auto before_eval = canet::evaluate(m, "h", hist_test);
  std::vector<canet::Parameter<float>*> hist_params = m.parameters();

  auto rec = canet::adapt(m, "n", new_train, quick(2), std::string("h"));
  CHECK(eval_logits(m, "h", hist_test) == before_logits);
  const auto after_eval = canet::evaluate(m, "h", hist_test);
  CHECK(after_eval.metrics.f1 == before_eval.metrics.f1);
  CHECK(after_eval.loss == before_eval.loss);
  CHECK(checksum(hist_params) == before_sum);
  auto p = m.param_partition("n");
  CHECK(rec.updated_params == p.adapter_count + p.bn_bank_count_per_dataset);
  CHECK(rec.total_params == p.total);
  CHECK(checksum(m.parameters()) != before_sum);

  CHECK_THROWS_AS(canet::adapt(m, "n", new_train, quick(1)), canet::Error);
}

TEST_CASE("online fine-tuning moves everything") {
  auto hist_train = canet::generate_split(small_data("h", 6), canet::Split::kTrain);
  auto hist_test = canet::generate_split(small_data("h", 6), canet::Split::kTest);
  auto new_train = canet::generate_split(small_data("n", 7), canet::Split::kTrain);
  CANetModel<float> m(small_model());
  m.add_dataset("h");
  canet::train(m, "h", hist_train, quick(1));
  const auto before = eval_logits(m, "h", hist_test);
  auto rec = canet::online_finetune_baseline(m, "h", new_train, quick(1));
  CHECK(eval_logits(m, "h", hist_test) != before);
  CHECK(rec.updated_params == m.param_partition("h").total);
}

TEST_CASE("training failures") {
  auto data = canet::generate_split(small_data("d", 4), canet::Split::kTrain);
  CANetModel<float> m(small_model());
  m.add_dataset("d");
  CHECK_THROWS_AS(canet::train(m, "d", {}, quick()), canet::Error);
  CHECK_THROWS_AS(canet::train(m, "zz", data, quick()), canet::Error);
  TrainConfig bad = quick();
  bad.lr = -1;
  CHECK_THROWS_AS(canet::train(m, "d", data, bad), canet::Error);

  data[2].x1[17] = std::nanf("");
  try {
    canet::train(m, "d", data, quick());
    FAIL("NaN accepted");
  } catch (const canet::Error& e) {
    CHECK(e.code() == canet::ErrorCode::kNumeric);
  }
}

TEST_CASE("evaluation emits one map per sample") {
  auto test = canet::generate_split(small_data("d", 4), canet::Split::kTest);
  CANetModel<float> m(small_model());
  m.add_dataset("d");
  canet::train(m, "d", test, quick(1));
  fs::path dir = fs::temp_directory_path() / "canet_emit_test";
  fs::remove_all(dir);
  auto ev = canet::evaluate(m, "d", test, dir.string(), 4);
  Metrics again;
  for (std::size_t i = 0; i < test.size(); ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "%05zu.pgm", i);
    canet::Image8 img = canet::read_pnm((dir / name).string());
    REQUIRE(img.pixels.size() == test[i].label.size());
    std::vector<std::uint8_t> pred(img.pixels.size());
    for (std::size_t k = 0; k < pred.size(); ++k) pred[k] = img.pixels[k] != 0;
    canet::accumulate(again, pred, test[i].label);
  }
  again.finalize();
  CHECK(again.tp == ev.metrics.tp);
  CHECK(again.fp == ev.metrics.fp);
  CHECK(again.f1 == ev.metrics.f1);
  std::size_t files = 0;
  for (const auto& e : fs::directory_iterator(dir)) files += e.is_regular_file();
  CHECK(files == test.size());
  fs::remove_all(dir);
}
