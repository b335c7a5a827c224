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

#include "canet/experiment.hpp"

#include <algorithm>
#include <filesystem>
#include <iterator>
#include <sstream>

#include "canet/config.hpp"
#include "canet/error.hpp"

namespace canet {

namespace fs = std::filesystem;

namespace {

template <typename Fn>
auto enum_key(const std::string& key, const std::string& value, Fn parse) {
  try {
    return parse(value);
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, "key '" + key + "': " + e.what());
  }
}

std::size_t positive(const std::string& key, const std::string& value) {
  const std::int64_t n = parse_int(key, value);
  require(n >= 1 && n <= (1 << 20), ErrorCode::kConfig,
          "key '" + key + "': must lie in [1, 1048576], got " + value);
  return static_cast<std::size_t>(n);
}

void apply_model_key(ModelConfig& m, const ConfigEntry& e) {
  const std::string& k = e.key;
  const std::string& v = e.value;
  if (k == "eta") {
    m.eta = static_cast<int>(parse_int(k, v));
  } else if (k == "widths") {
    m.encoder.widths.clear();
    for (const std::string& s : parse_list(k, v)) {
      m.encoder.widths.push_back(positive(k, s));
    }
  } else if (k == "kinds") {
    m.encoder.kinds.clear();
    for (const std::string& s : parse_list(k, v)) {
      m.encoder.kinds.push_back(enum_key(k, s, parse_block_kind));
    }
  } else if (k == "pooling_mode") {
    m.icm_pooling = enum_key(k, v, parse_pooling_mode);
  } else if (k == "icm_width") {
    m.icm_width = positive(k, v);
  } else if (k == "se_reduction") {
    m.se_reduction = positive(k, v);
  } else if (k == "cbam_reduction") {
    m.cbam_reduction = positive(k, v);
  } else if (k == "bn_scope") {
    m.bn_scope = enum_key(k, v, parse_bn_scope);
  } else if (k == "seed") {
    m.seed = parse_u64(k, v);
  } else {
    fail(ErrorCode::kConfig, "line " + std::to_string(e.line) +
                                 ": unknown key '" + k + "' in [model]");
  }
}

void apply_train_key(ExperimentConfig& c, const ConfigEntry& e) {
  TrainConfig& t = c.train;
  const std::string& k = e.key;
  const std::string& v = e.value;
  if (k == "lr") {
    t.lr = parse_real(k, v);
  } else if (k == "momentum") {
    t.momentum = parse_real(k, v);
  } else if (k == "weight_decay") {
    t.weight_decay = parse_real(k, v);
  } else if (k == "epochs") {
    const std::int64_t n = parse_int(k, v);
    require(n >= 0, ErrorCode::kConfig, "key 'epochs': must be >= 0");
    t.epochs = static_cast<std::size_t>(n);
  } else if (k == "batch") {
    t.batch_size = positive(k, v);
  } else if (k == "seed") {
    t.seed = parse_u64(k, v);
  } else if (k == "augment_hflip") {
    t.augment_hflip = parse_bool(k, v);
  } else if (k == "scope") {
    t.scope = enum_key(k, v, parse_scope);
  } else if (k == "ablation") {
    t.ablation = enum_key(k, v, parse_ablation);
  } else if (k == "adapt_init") {
    c.adapt_init = enum_key(k, v, parse_adapt_init);
  } else if (k == "train_fraction") {
    c.train_fraction = parse_real(k, v);
    require(c.train_fraction > 0 && c.train_fraction <= 1, ErrorCode::kConfig,
            "key 'train_fraction': must lie in (0, 1]");
  } else if (k == "eval_split") {
    c.eval_split = enum_key(k, v, parse_split);
  } else {
    fail(ErrorCode::kConfig, "line " + std::to_string(e.line) +
                                 ": unknown key '" + k + "' in [train]");
  }
}

std::string join_list(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    out += (i ? ", " : "") + items[i];
  }
  return out;
}

}  // namespace

ExperimentConfig parse_experiment_config(
    const std::vector<ConfigEntry>& entries) {
  ExperimentConfig c;
  for (const ConfigEntry& e : entries) {
    if (e.section == "model") {
      apply_model_key(c.model, e);
    } else if (e.section == "train") {
      apply_train_key(c, e);
    } else if (e.section == "data") {
      if (!c.data) c.data = DatasetSpec{};
      require(apply_spec_key(*c.data, e.key, e.value), ErrorCode::kConfig,
              "line " + std::to_string(e.line) + ": unknown key '" + e.key +
                  "' in [data]");
    } else {
      fail(ErrorCode::kConfig, "line " + std::to_string(e.line) +
                                   ": unknown section '[" + e.section + "]'");
    }
  }
  try {
    c.model.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("[model]: ") + e.what());
  }
  c.train.validate();
  if (c.data) c.data->validate(std::size_t{1} << c.model.stages());
  return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  return parse_experiment_config(parse_config_file(path));
}

std::string to_text(const ExperimentConfig& c) {
  std::ostringstream out;
  const ModelConfig& m = c.model;
  std::vector<std::string> widths, kinds;
  for (std::size_t s = 0; s < m.stages(); ++s) {
    widths.push_back(std::to_string(m.encoder.widths[s]));
    kinds.push_back(to_string(m.kind(s)));
  }
  out << "[model]\n"
      << "eta = " << m.eta << "\n"
      << "widths = " << join_list(widths) << "\n"
      << "kinds = " << join_list(kinds) << "\n"
      << "pooling_mode = " << to_string(m.icm_pooling) << "\n"
      << "icm_width = " << m.icm_width << "\n"
      << "se_reduction = " << m.se_reduction << "\n"
      << "cbam_reduction = " << m.cbam_reduction << "\n"
      << "bn_scope = " << to_string(m.bn_scope) << "\n"
      << "seed = " << m.seed << "\n\n";
  const TrainConfig& t = c.train;
  out << "[train]\n"
      << "lr = " << format_real(t.lr) << "\n"
      << "momentum = " << format_real(t.momentum) << "\n"
      << "weight_decay = " << format_real(t.weight_decay) << "\n"
      << "epochs = " << t.epochs << "\n"
      << "batch = " << t.batch_size << "\n"
      << "seed = " << t.seed << "\n"
      << "augment_hflip = " << (t.augment_hflip ? "true" : "false") << "\n"
      << "scope = " << to_string(t.scope) << "\n"
      << "ablation = " << to_string(t.ablation) << "\n"
      << "adapt_init = " << to_string(c.adapt_init) << "\n"
      << "train_fraction = " << format_real(c.train_fraction) << "\n"
      << "eval_split = " << to_string(c.eval_split) << "\n";
  if (c.data) out << "\n[data]\n" << to_text(*c.data);
  return out.str();
}

DataRequest parse_data_request(const std::vector<ConfigEntry>& entries) {
  DataRequest r;
  std::vector<ConfigEntry> keys;
  for (const ConfigEntry& e : entries) {
    require(e.section.empty() || e.section == "data", ErrorCode::kConfig,
            "line " + std::to_string(e.line) + ": unexpected section '[" +
                e.section + "]' in data spec");
    if (e.key == "family") {
      r.family_seed = parse_u64(e.key, e.value);
    } else {
      keys.push_back(e);
    }
  }
  if (r.family_seed) {
    static const char* kAllowed[] = {"n_train", "n_val", "n_test", "height",
                                     "width", "min_objects", "max_objects",
                                     "change_rate"};
    for (const ConfigEntry& e : keys) {
      require(std::find(std::begin(kAllowed), std::end(kAllowed), e.key) !=
                  std::end(kAllowed),
              ErrorCode::kConfig,
              "line " + std::to_string(e.line) + ": key '" + e.key +
                  "' cannot be overridden for a dataset family");
      DatasetSpec probe;
      apply_spec_key(probe, e.key, e.value);
    }
    r.overrides = keys;
  } else {
    r.spec = parse_dataset_spec(keys);
  }
  return r;
}

void generate_data(const DataRequest& request, const std::string& out) {
  if (!request.family_seed) {
    write_dataset(request.spec, out);
    return;
  }
  DatasetFamily f = make_dataset_family(*request.family_seed);
  for (DatasetSpec* s : {&f.hist, &f.style, &f.label, &f.both}) {
    for (const ConfigEntry& e : request.overrides) {
      apply_spec_key(*s, e.key, e.value);
    }
    s->validate();
    write_dataset(*s, (fs::path(out) / s->name).string());
  }
}

std::string dataset_name(const std::string& root) {
  const fs::path manifest = fs::path(root) / "spec.txt";
  if (fs::exists(manifest)) {
    for (const ConfigEntry& e : parse_config_file(manifest.string())) {
      if (e.key == "name" && !e.value.empty()) return e.value;
    }
  }
  fs::path p = fs::path(root).lexically_normal();
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

const char* to_string(AdaptInit init) {
  return init == AdaptInit::kFresh ? "fresh" : "clone";
}

AdaptInit parse_adapt_init(const std::string& s) {
  if (s == "fresh") return AdaptInit::kFresh;
  if (s == "clone") return AdaptInit::kClone;
  fail(ErrorCode::kConfig, "unknown adapt_init '" + s + "'");
}

}  // namespace canet
