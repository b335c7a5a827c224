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
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "canet/model.hpp"
#include "canet/optim.hpp"
#include "canet/gradcheck.hpp"
#include "doctest.h"

using canet::CANetModel;
using canet::Mode;
using canet::ModelConfig;
using canet::Scope;
using canet::Shape;
using canet::Tensor;

namespace {

ModelConfig small_config(int eta = 3) {
  ModelConfig c;
  c.encoder.widths = {8, 16, 16, 32};
  c.eta = eta;
  c.icm_width = 8;
  c.se_reduction = 4;
  c.cbam_reduction = 4;
  c.seed = 17;
  return c;
}

Tensor<float> random_image(std::size_t n, std::size_t hw, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.f, 1.f);
  Tensor<float> t(Shape{n, 3, hw, hw});
  for (float& v : t.mutable_data()) v = u(rng);
  return t;
}

std::vector<float> vec(const Tensor<float>& t) {
  return std::vector<float>(t.data().begin(), t.data().end());
}

// Counts by walking names, independently of the model's own partition code.
struct Census : canet::ModuleVisitor<float> {
  std::map<std::string, std::size_t> params;  // name -> size
  std::vector<canet::BNBank<float>*> banks;
  void param(const std::string& name, canet::Parameter<float>& p) override {
    params[name] = p.size();
  }
  void bank(const std::string&, canet::BNBank<float>& b) override {
    banks.push_back(&b);
  }
};

// One train-mode pass so every BN entry of `id` has statistics.
void warm(CANetModel<float>& m, const std::string& id) {
  Tensor<float> a = random_image(2, 16, 100), b = random_image(2, 16, 101);
  m.forward(a, b, id, Mode::kTrain);
}

}  // namespace

TEST_CASE("forward shapes, routing errors and mask sum") {
  CANetModel<float> m(small_config());
  m.add_dataset("a");
  warm(m, "a");
  Tensor<float> x1 = random_image(2, 16, 1), x2 = random_image(2, 16, 2);
  auto r = m.forward(x1, x2, "a", Mode::kEval);
  CHECK(r.logits.shape() == Shape{2, 2, 16, 16});
  CHECK(r.mask.shape() == Shape{2, 2, 16, 16});
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t i = 0; i < 16; ++i)
      for (std::size_t j = 0; j < 16; ++j)
        CHECK(std::abs(r.mask.at(n, 0, i, j) + r.mask.at(n, 1, i, j) - 1.0f) <=
              1.2e-7f);
  CHECK_THROWS_AS(m.forward(x1, x2, "b", Mode::kEval), canet::Error);
  Tensor<float> odd = random_image(1, 12, 3);
  CHECK_THROWS_AS(m.forward(odd, odd, "a", Mode::kEval), canet::Error);
  CHECK_THROWS_AS(m.add_dataset("a"), canet::Error);
  CHECK_THROWS_AS(CANetModel<float>(small_config(5)), canet::Error);
}

TEST_CASE("siamese encoder on identical inputs") {
  CANetModel<float> m(small_config());
  m.add_dataset("a");
  warm(m, "a");
  Tensor<float> x = random_image(1, 16, 4);
  auto f1 = m.encode(x, "a", Mode::kEval);
  auto f2 = m.encode(x.clone(), "a", Mode::kEval);
  REQUIRE(f1.size() == 4);
  for (std::size_t s = 0; s < f1.size(); ++s) CHECK(vec(f1[s]) == vec(f2[s]));
}

TEST_CASE("clone-init and fresh-init datasets") {
  CANetModel<float> m(small_config());
  m.add_dataset("a");
  warm(m, "a");
  m.add_dataset("b", std::string("a"));
  m.add_dataset("c");
  Tensor<float> x1 = random_image(1, 16, 5), x2 = random_image(1, 16, 6);
  auto ya = m.forward(x1, x2, "a", Mode::kEval).logits;
  auto yb = m.forward(x1, x2, "b", Mode::kEval).logits;
  CHECK(vec(ya) == vec(yb));
  warm(m, "c");
  auto yc = m.forward(x1, x2, "c", Mode::kEval).logits;
  std::size_t differ = 0;
  for (std::size_t i = 0; i < ya.size(); ++i) differ += ya.data()[i] != yc.data()[i];
  CHECK(differ > ya.size() * 9 / 10);

  // Perturb one entry of b's banks: b diverges, a does not move.
  Census census;
  m.visit(census);
  REQUIRE(!census.banks.empty());
  census.banks.front()->entry("b").beta.value.mutable_data()[0] += 0.5f;
  auto yb2 = m.forward(x1, x2, "b", Mode::kEval).logits;
  auto ya2 = m.forward(x1, x2, "a", Mode::kEval).logits;
  CHECK(vec(yb2) != vec(yb));
  CHECK(vec(ya2) == vec(ya));
}

TEST_CASE("partition counts by name walk") {
  for (int eta : {2, 3, 4}) {
    CANetModel<float> m(small_config(eta));
    m.add_dataset("a");
    m.add_dataset("b");
    Census census;
    m.visit(census);
    std::size_t shared = 0, adapter_a = 0, adapter_b = 0;
    for (auto& [name, size] : census.params) {
      if (name.rfind("adapter[a]", 0) == 0) adapter_a += size;
      else if (name.rfind("adapter[b]", 0) == 0) adapter_b += size;
      else shared += size;
    }
    std::size_t bank_a = 0, adapter_bank_a = 0, all_banks = 0;
    for (auto* b : census.banks) {
      for (auto& [key, e] : b->entries()) all_banks += e.gamma.size() + e.beta.size();
    }
    // Adapter-internal banks only hold their own dataset; shared banks hold
    // both ids.
    for (auto* b : census.banks) {
      if (b->contains("a") && b->contains("b")) {
        bank_a += 2 * b->channels();
      } else if (b->contains("a")) {
        adapter_bank_a += 2 * b->channels();
      }
    }
    auto p = m.param_partition("a");
    CHECK(p.shared_count == shared);
    CHECK(p.adapter_count == adapter_a + adapter_bank_a);
    CHECK(p.bn_bank_count_per_dataset == bank_a);
    CHECK(p.total == shared + bank_a + adapter_a + adapter_bank_a);
    // Completeness: shared plus every dataset's own share is everything.
    auto pb = m.param_partition("b");
    CHECK(p.stored_total ==
          p.shared_count + p.adapter_count + p.bn_bank_count_per_dataset +
              pb.adapter_count + pb.bn_bank_count_per_dataset);
    CHECK(p.stored_total == shared + adapter_a + adapter_b + all_banks);
    CHECK(p.fraction ==
          doctest::Approx(double(p.adapter_count + p.bn_bank_count_per_dataset) /
                          p.total));
  }
}

TEST_CASE("fraction shrinks with eta") {
  double previous = 2.0;
  for (int eta = 4; eta >= 2; --eta) {
    ModelConfig c;  // library defaults
    c.eta = eta;
    CANetModel<float> m(c);
    m.add_dataset("a");
    const double f = m.param_partition("a").fraction;
    CHECK(f < previous);
    previous = f;
  }
  ModelConfig def;
  CANetModel<float> m(def);
  m.add_dataset("a");
  CHECK(m.param_partition("a").fraction < 0.15);
}

TEST_CASE("trainable sets and freezing") {
  CANetModel<float> m(small_config());
  m.add_dataset("a");
  m.add_dataset("b", std::string("a"));
  warm(m, "a");
  warm(m, "b");
  auto count = [](const std::vector<canet::Parameter<float>*>& ps) {
    std::size_t n = 0;
    for (auto* p : ps) n += p->size();
    return n;
  };
  const std::size_t full = count(m.trainable_set("b", Scope::kFull));
  auto only = m.trainable_set("b", Scope::kAdapterOnly);
  const std::size_t adapter_only = count(only);
  auto p = m.param_partition("b");
  CHECK(full - adapter_only == p.shared_count);
  CHECK(adapter_only == p.adapter_count + p.bn_bank_count_per_dataset);

  Census census;
  m.visit(census);
  std::set<const canet::Parameter<float>*> chosen(only.begin(), only.end());
  for (auto* q : m.parameters()) {
    CHECK(q->trainable == (chosen.count(q) == 1));
  }

  // One step with gradients everywhere: only b's share moves.
  std::vector<std::vector<float>> before;
  auto all = m.parameters();
  for (auto* q : all) before.push_back(vec(q->value));
  for (auto* q : all) {
    auto g = q->value.grad_buffer();
    for (float& v : g) v = 0.25f;
  }
  canet::sgd_step<float>(all, 0.1, 0.9, 1e-4);
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool moved = vec(all[i]->value) != before[i];
    CHECK(moved == (chosen.count(all[i]) == 1));
  }
  CHECK_THROWS_AS(m.trainable_set("zzz", Scope::kFull), canet::Error);
}

TEST_CASE("ablations") {
  SUBCASE("no_icm emits p") {
    CANetModel<float> m(small_config());
    m.add_dataset("a");
    warm(m, "a");
    m.apply_ablation(canet::Ablation::kNoICM);
    Tensor<float> x1 = random_image(1, 16, 7), x2 = random_image(1, 16, 8);
    auto r = m.forward(x1, x2, "a", Mode::kEval);
    CHECK_FALSE(r.mask.defined());
    CHECK(vec(r.logits) == vec(r.p));
  }
  SUBCASE("shared_icm") {
    CANetModel<float> m(small_config());
    m.add_dataset("a");
    m.add_dataset("b");
    m.apply_ablation(canet::Ablation::kSharedICM);
    m.add_dataset("c");
    CHECK(m.adapter("a").icm == m.adapter("b").icm);
    CHECK(m.adapter("a").icm == m.adapter("c").icm);
  }
  SUBCASE("shared_bn routes through one entry") {
    CANetModel<float> m(small_config());
    m.add_dataset("a");
    m.apply_ablation(canet::Ablation::kSharedBN);
    m.add_dataset("b", std::string("a"));
    CHECK(m.active_bank_count() == 1);
    warm(m, "a");
    warm(m, "b");
    Tensor<float> x1 = random_image(1, 16, 9), x2 = random_image(1, 16, 10);
    auto yb = m.forward(x1, x2, "b", Mode::kEval).logits;
    Census census;
    m.visit(census);
    // Perturb the one running mean of a shared layer: b's output moves.
    canet::BNBank<float>* shared = nullptr;
    for (auto* bk : census.banks) {
      if (bk->contains("a") && !bk->contains("b") && bk->entries().size() == 1) {
        shared = bk;
        break;
      }
    }
    REQUIRE(shared != nullptr);
    shared->entry("a").running_mean[0] += 1.0f;
    CHECK(vec(m.forward(x1, x2, "b", Mode::kEval).logits) != vec(yb));
  }
  SUBCASE("none has one bank per dataset") {
    CANetModel<float> m(small_config());
    m.add_dataset("a");
    m.add_dataset("b");
    CHECK(m.active_bank_count() == 2);
  }
}

TEST_CASE("end-to-end gradient through the model") {
  auto rep = canet::run_gradcheck_case("canet_model");
  CHECK(rep.passed());
  CHECK(rep.max_rel_error() < 1e-3);
  for (const auto& e : rep.entries) CHECK(e.checked >= std::min<std::size_t>(5, e.size));
}
