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


#include <cstring>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "canet/checkpoint.hpp"
#include "canet/model.hpp"
#include "doctest.h"

using canet::CANetModel;
using canet::Mode;
using canet::Shape;
using canet::Tensor;

namespace {

canet::ModelConfig small_config() {
  canet::ModelConfig c;
  c.encoder.widths = {8, 16, 16, 32};
  c.encoder.kinds = {canet::BlockKind::kPlain, canet::BlockKind::kResidual,
                     canet::BlockKind::kInvertedResidual, canet::BlockKind::kPlain};
  c.eta = 2;
  c.icm_width = 8;
  c.icm_pooling = canet::PoolingMode::kSpatial;
  c.se_reduction = 4;
  c.cbam_reduction = 4;
  c.seed = 99;
  return c;
}

Tensor<float> image(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Tensor<float> t(Shape{2, 3, 16, 16});
  for (float& v : t.mutable_data()) v = u(rng);
  return t;
}

std::unique_ptr<CANetModel<float>> two_dataset_model() {
  auto m = std::make_unique<CANetModel<float>>(small_config());
  m->add_dataset("hist");
  m->forward(image(1), image(2), "hist", Mode::kTrain);
  m->add_dataset("new", std::string("hist"));
  m->forward(image(3), image(4), "new", Mode::kTrain);
  return m;
}

std::vector<float> logits(CANetModel<float>& m, const std::string& id) {
  Tensor<float> y = m.forward(image(5), image(6), id, Mode::kEval).logits;
  return std::vector<float>(y.data().begin(), y.data().end());
}

// Bitwise reflected CRC-32 (polynomial 0xEDB88320).
std::uint32_t crc32_ref(const std::uint8_t* p, std::size_t n) {
  std::uint32_t c = 0xFFFFFFFFu;
  for (std::size_t i = 0; i < n; ++i) {
    c ^= p[i];
    for (int k = 0; k < 8; ++k) c = (c >> 1) ^ (0xEDB88320u & (0u - (c & 1u)));
  }
  return ~c;
}

void reseal(std::vector<std::uint8_t>& b) {
  const std::uint32_t c = crc32_ref(b.data(), b.size() - 4);
  std::memcpy(b.data() + b.size() - 4, &c, 4);
}

// Independent walk of the byte layout.
struct Walker {
  const std::vector<std::uint8_t>& b;
  std::size_t at = 0;
  std::uint8_t u8() { return b.at(at++); }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, &b.at(at), 4);
    at += 4;
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, &b.at(at), 8);
    at += 8;
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    std::string s(reinterpret_cast<const char*>(&b.at(at)), n);
    at += n;
    return s;
  }
};

struct Parsed {
  std::uint32_t version = 0, eta = 0;
  std::vector<std::string> ids;
  std::map<std::string, std::vector<std::uint32_t>> dims;
  std::size_t count_at = 0;  // offset of the record count
  std::size_t end = 0;
};

Parsed parse(const std::vector<std::uint8_t>& bytes) {
  Walker w{bytes};
  Parsed p;
  REQUIRE(std::memcmp(bytes.data(), "CANT", 4) == 0);
  w.at = 4;
  p.version = w.u32();
  p.eta = w.u32();
  const std::uint32_t stages = w.u32();
  for (std::uint32_t s = 0; s < stages; ++s) {
    w.u32();
    w.u8();
  }
  w.u32();  // icm width
  w.u8();   // pooling
  w.u32();  // se reduction
  w.u32();  // cbam reduction
  w.u8();   // bn scope
  w.u32();  // in channels
  w.u64();  // seed
  w.u8();   // ablation
  const std::uint32_t ids = w.u32();
  for (std::uint32_t i = 0; i < ids; ++i) p.ids.push_back(w.str());
  p.count_at = w.at;
  const std::uint32_t records = w.u32();
  for (std::uint32_t r = 0; r < records; ++r) {
    const std::string name = w.str();
    const std::uint8_t dtype = w.u8();
    const std::uint8_t rank = w.u8();
    std::vector<std::uint32_t> d;
    std::size_t n = 1;
    for (std::uint8_t k = 0; k < rank; ++k) {
      d.push_back(w.u32());
      n *= d.back();
    }
    w.at += n * (dtype == 0 ? 4 : 8);
    p.dims[name] = d;
  }
  p.end = w.at;
  return p;
}

struct BankNames : canet::ModuleVisitor<float> {
  std::map<std::string, canet::BNBank<float>*> banks;
  void param(const std::string&, canet::Parameter<float>&) override {}
  void bank(const std::string& name, canet::BNBank<float>& b) override {
    banks[name] = &b;
  }
};

}  // namespace

TEST_CASE("checkpoint round trip is bitwise") {
  auto m = two_dataset_model();
  const auto bytes = canet::serialize_model(*m);
  auto back = canet::deserialize_model<float>(bytes);
  CHECK(back->dataset_ids() == m->dataset_ids());
  CHECK(back->config().eta == 2);
  CHECK(logits(*back, "hist") == logits(*m, "hist"));
  CHECK(logits(*back, "new") == logits(*m, "new"));
  CHECK(canet::serialize_model(*back) == bytes);

  auto ps = m->parameters(), qs = back->parameters();
  REQUIRE(ps.size() == qs.size());
  for (std::size_t i = 0; i < ps.size(); ++i) {
    CHECK(ps[i]->name == qs[i]->name);
    CHECK(std::memcmp(ps[i]->value.ptr(), qs[i]->value.ptr(),
                      ps[i]->size() * sizeof(float)) == 0);
  }

  const auto path =
      (std::filesystem::temp_directory_path() / "canet_ckpt_test.bin").string();
  canet::save_checkpoint(*m, path);
  CHECK(canet::read_file(path) == bytes);
  auto loaded = canet::load_checkpoint<float>(path);
  CHECK(logits(*loaded, "new") == logits(*m, "new"));
  std::filesystem::remove(path);

  auto d = std::make_unique<CANetModel<double>>(small_config());
  d->add_dataset("x");
  auto dbytes = canet::serialize_model(*d);
  CHECK(canet::serialize_model(*canet::deserialize_model<double>(dbytes)) == dbytes);
  CHECK_THROWS_AS(canet::deserialize_model<float>(dbytes), canet::Error);
}

TEST_CASE("checkpoint ablation survives the round trip") {
  for (auto ab : {canet::Ablation::kNoICM, canet::Ablation::kSharedICM,
                  canet::Ablation::kSharedBN}) {
    CANetModel<float> m(small_config());
    m.add_dataset("hist");
    m.forward(image(1), image(2), "hist", Mode::kTrain);
    m.apply_ablation(ab);
    m.add_dataset("new", std::string("hist"));
    auto back = canet::deserialize_model<float>(canet::serialize_model(m));
    CHECK(back->ablation() == ab);
    CHECK(back->active_bank_count() == m.active_bank_count());
    CHECK(logits(*back, "new") == logits(m, "new"));
    if (ab == canet::Ablation::kSharedICM) {
      CHECK(back->adapter("hist").icm == back->adapter("new").icm);
    }
  }
}

TEST_CASE("checkpoint record layout") {
  auto m = two_dataset_model();
  const auto bytes = canet::serialize_model(*m);
  Parsed p = parse(bytes);
  CHECK(p.version == canet::kCheckpointVersion);
  CHECK(p.eta == 2);
  CHECK(p.ids == std::vector<std::string>{"hist", "new"});
  CHECK(p.end + 4 == bytes.size());
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  CHECK(stored == crc32_ref(bytes.data(), bytes.size() - 4));

  BankNames names;
  m->visit(names);
  std::size_t shared_layers = 0;
  for (auto& [name, bank] : names.banks) {
    std::size_t entries = 0;
    for (const std::string& id : p.ids) {
      const std::string base = name + "[" + id + "]";
      if (!p.dims.count(base + ".gamma")) continue;
      ++entries;
      CHECK(p.dims.count(base + ".beta") == 1);
      CHECK(p.dims.at(base + ".stats") ==
            std::vector<std::uint32_t>{2, static_cast<std::uint32_t>(bank->channels())});
    }
    if (name.rfind("adapter[", 0) == 0) {
      CHECK(entries == 1);
    } else {
      CHECK(entries == 2);
      ++shared_layers;
    }
  }
  CHECK(shared_layers > 0);
  CHECK(canet::read_checkpoint_index(bytes).record_names.size() == p.dims.size());
}

TEST_CASE("checkpoint corruption is rejected") {
  auto m = two_dataset_model();
  const auto good = canet::serialize_model(*m);
  // Message of the format error raised, empty if none was.
  auto format_error = [](const std::vector<std::uint8_t>& b) -> std::string {
    try {
      canet::deserialize_model<float>(b);
    } catch (const canet::Error& e) {
      if (e.code() == canet::ErrorCode::kFormat) return e.what();
    }
    return "";
  };
  auto has = [](const std::string& msg, const char* what) {
    return msg.find(what) != std::string::npos;
  };
  auto magic = good;
  magic[0] = 'X';
  reseal(magic);
  CHECK(has(format_error(magic), "bad magic"));

  auto version = good;
  version[4] = 2;
  reseal(version);
  CHECK(has(format_error(version), "version 2"));

  auto flipped = good;
  flipped[good.size() / 2] ^= 0x40;
  CHECK(has(format_error(flipped), "checksum"));

  for (std::size_t cut : {std::size_t{3}, std::size_t{11}, good.size() / 3, good.size() - 1}) {
    const std::string msg =
        format_error(std::vector<std::uint8_t>(good.begin(), good.begin() + cut));
    CHECK((has(msg, "truncated") || has(msg, "checksum") || has(msg, "magic")));
  }

  // A well-formed record the model does not own.
  Parsed p = parse(good);
  std::vector<std::uint8_t> extra(good.begin(), good.end() - 4);
  auto put = [&](const void* src, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(src);
    extra.insert(extra.end(), b, b + n);
  };
  const std::string name = "stray.weight";
  const std::uint32_t len = static_cast<std::uint32_t>(name.size());
  const std::uint32_t one = 1;
  const std::uint8_t dtype = 0, rank = 1;
  const float val = 1.f;
  put(&len, 4);
  put(name.data(), name.size());
  put(&dtype, 1);
  put(&rank, 1);
  put(&one, 4);
  put(&val, 4);
  const std::uint32_t count = static_cast<std::uint32_t>(p.dims.size()) + 1;
  std::memcpy(extra.data() + p.count_at, &count, 4);
  extra.resize(extra.size() + 4);
  reseal(extra);
  CHECK(has(format_error(extra), "unexpected record 'stray.weight'"));
}
