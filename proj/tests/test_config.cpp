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


#include <filesystem>
#include <string>

#include "canet/config.hpp"
#include "canet/experiment.hpp"
#include "doctest.h"

namespace fs = std::filesystem;

namespace {

// Message of the config error raised, empty if none was.
std::string config_error(const std::string& text) {
  try {
    canet::parse_experiment_config(canet::parse_config_text(text));
  } catch (const canet::Error& e) {
    if (e.code() == canet::ErrorCode::kConfig) return e.what();
  }
  return "";
}

bool mentions(const std::string& msg, const std::string& what) {
  return !msg.empty() && msg.find(what) != std::string::npos;
}

}  // namespace

TEST_CASE("config text syntax") {
  auto e = canet::parse_config_text(
      "# comment\n; also comment\n\ntop = 1\n[ model ]\n eta=  4 \n[train]\nlr = 0.5\n");
  REQUIRE(e.size() == 3);
  CHECK(e[0].section == "");
  CHECK(e[1].section == "model");
  CHECK(e[1].key == "eta");
  CHECK(e[1].value == "4");
  CHECK(e[1].line == 6);
  CHECK(e[2].section == "train");

  CHECK_THROWS_AS(canet::parse_config_text("[model\n"), canet::Error);
  CHECK_THROWS_AS(canet::parse_config_text("novalue\n"), canet::Error);
  CHECK_THROWS_AS(canet::parse_config_text(" = 3\n"), canet::Error);
  CHECK_THROWS_AS(canet::parse_config_text("a = 1\na = 2\n"), canet::Error);
  CHECK_NOTHROW(canet::parse_config_text("a = 1\n[s]\na = 2\n"));

  CHECK(canet::parse_int("k", "-12") == -12);
  CHECK_THROWS_AS(canet::parse_int("k", "12x"), canet::Error);
  CHECK(canet::parse_real("k", "1e-3") == 1e-3);
  CHECK_THROWS_AS(canet::parse_real("k", ""), canet::Error);
  CHECK(canet::parse_bool("k", "off") == false);
  CHECK_THROWS_AS(canet::parse_bool("k", "maybe"), canet::Error);
  CHECK(canet::parse_list("k", "a, b ,c") == std::vector<std::string>{"a", "b", "c"});
  CHECK(canet::format_real(0.1) == "0.1");
  CHECK(canet::parse_real("k", canet::format_real(1e-4)) == 1e-4);
}

TEST_CASE("experiment config round trip") {
  const std::string text =
      "[model]\neta = 2\nwidths = 8, 16, 32\nkinds = plain, residual, inverted_residual\n"
      "pooling_mode = spatial\nicm_width = 6\nse_reduction = 2\ncbam_reduction = 4\n"
      "bn_scope = encoder_only\nseed = 77\n"
      "[train]\nlr = 0.02\nmomentum = 0.8\nweight_decay = 0\nepochs = 3\nbatch = 4\n"
      "seed = 5\naugment_hflip = false\nscope = adapter_only\nablation = shared_icm\n"
      "adapt_init = fresh\ntrain_fraction = 0.1\neval_split = val\n"
      "[data]\nname = tiny\nseed = 3\nheight = 32\nwidth = 32\nn_train = 4\n";
  auto c = canet::parse_experiment_config(canet::parse_config_text(text));
  CHECK(c.model.eta == 2);
  CHECK(c.model.encoder.widths == std::vector<std::size_t>{8, 16, 32});
  CHECK(c.model.encoder.kinds[2] == canet::BlockKind::kInvertedResidual);
  CHECK(c.model.icm_pooling == canet::PoolingMode::kSpatial);
  CHECK(c.model.bn_scope == canet::BNScope::kEncoderOnly);
  CHECK(c.train.lr == 0.02);
  CHECK(c.train.batch_size == 4);
  CHECK_FALSE(c.train.augment_hflip);
  CHECK(c.train.scope == canet::Scope::kAdapterOnly);
  CHECK(c.train.ablation == canet::Ablation::kSharedICM);
  CHECK(c.adapt_init == canet::AdaptInit::kFresh);
  CHECK(c.train_fraction == 0.1);
  CHECK(c.eval_split == canet::Split::kVal);
  REQUIRE(c.data.has_value());
  CHECK(c.data->n_train == 4);

  const std::string resolved = canet::to_text(c);
  auto back = canet::parse_experiment_config(canet::parse_config_text(resolved));
  CHECK(canet::to_text(back) == resolved);

  auto d = canet::parse_experiment_config({});
  CHECK(d.adapt_init == canet::AdaptInit::kClone);
  CHECK(d.train.epochs == 30);
  CHECK_FALSE(d.data.has_value());
}

TEST_CASE("experiment config errors name the culprit") {
  CHECK(mentions(config_error("[model]\ndepth = 3\n"), "depth"));
  CHECK(mentions(config_error("[optim]\nlr = 1\n"), "optim"));
  CHECK(mentions(config_error("[train]\nscope = partial\n"), "scope"));
  CHECK(mentions(config_error("[train]\nablation = no_bn\n"), "ablation"));
  CHECK(mentions(config_error("[train]\nbatch = 0\n"), "batch"));
  CHECK(mentions(config_error("[train]\ntrain_fraction = 1.5\n"), "train_fraction"));
  CHECK(mentions(config_error("[model]\neta = 9\n"), "eta"));
  CHECK(mentions(config_error("[model]\nicm_width = -1\n"), "icm_width"));
  CHECK(mentions(config_error("[model]\nwidths = 8, x\n"), "widths"));
  CHECK(mentions(config_error("[data]\ngranularity = medium\n"), "granularity"));
  CHECK(mentions(config_error("[data]\nheight = 40\n"), "height"));
}

TEST_CASE("data requests") {
  auto single = canet::parse_data_request(
      canet::parse_config_text("name = one\nseed = 4\nheight = 32\nwidth = 32\n"));
  CHECK_FALSE(single.family_seed.has_value());
  CHECK(single.spec.name == "one");

  auto fam = canet::parse_data_request(canet::parse_config_text(
      "family = 8\nn_train = 2\nn_val = 1\nn_test = 1\nheight = 32\nwidth = 32\n"));
  REQUIRE(fam.family_seed.has_value());
  CHECK(*fam.family_seed == 8);
  CHECK_THROWS_AS(canet::parse_data_request(
                      canet::parse_config_text("family = 8\ngranularity = fine\n")),
                  canet::Error);

  fs::path out = fs::temp_directory_path() / "canet_family_test";
  fs::remove_all(out);
  canet::generate_data(fam, out.string());
  for (const char* name : {"hist", "style", "label", "both"}) {
    CHECK(canet::dataset_name((out / name).string()) == name);
    CHECK(canet::count_split((out / name).string(), canet::Split::kTrain) == 2);
    CHECK(canet::count_split((out / name).string(), canet::Split::kTest) == 1);
  }
  fs::remove_all(out);
}
