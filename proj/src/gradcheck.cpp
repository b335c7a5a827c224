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

#include "canet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>

#include "canet/batchnorm.hpp"
#include "canet/blocks.hpp"
#include "canet/model.hpp"
#include "canet/ops.hpp"

namespace canet {

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const GradcheckEntry& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

bool GradcheckReport::passed() const {
  for (const GradcheckEntry& e : entries) {
    if (e.checked == 0) return false;
  }
  return max_rel_error() < tolerance;
}

Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo,
                             double hi) {
  Tensor<double> t(shape);
  for (double& v : t.mutable_data()) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    v = lo + (hi - lo) * u;
  }
  return t;
}

GradcheckReport gradcheck(const std::string& name,
                          const std::function<Tensor<double>()>& fn,
                          const std::vector<NamedLeaf>& leaves,
                          double tolerance, const GradcheckOptions& options) {
  std::mt19937_64 rng(options.seed);
  std::vector<bool> saved_flags;
  for (const NamedLeaf& leaf : leaves) {
    saved_flags.push_back(leaf.second.requires_grad());
    Tensor<double> t = leaf.second;
    t.set_requires_grad(true);
    t.zero_grad();
  }

  Tensor<double> weights;
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    Tensor<double> out = fn();
    weights = random_tensor(out.shape(), rng, 0.5, 1.5);
    tape.backward(sum(mul(out, weights)));
  }
  struct Probe {
    double value;
    std::uint64_t digest;
  };
  auto objective = [&]() {
    BranchTrace trace;
    Tensor<double> out = fn();
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
      acc += out.ptr()[i] * weights.ptr()[i];
    }
    return Probe{acc, trace.digest()};
  };

  GradcheckReport report;
  report.name = name;
  report.tolerance = tolerance;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double> leaf = leaves[li].second;
    std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());
    std::vector<std::size_t> order(leaf.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const bool sampled = options.samples_per_leaf > 0 &&
                         options.samples_per_leaf < order.size();
    if (sampled) std::shuffle(order.begin(), order.end(), rng);
    const std::size_t want = sampled ? options.samples_per_leaf : order.size();
    GradcheckEntry entry{leaves[li].first, leaf.size(), 0.0, 0, 0};
    for (std::size_t idx : order) {
      if (entry.checked == want) break;
      double& v = leaf.mutable_data()[idx];
      const double orig = v;
      double h = options.step;
      std::optional<double> numeric;
      for (int attempt = 0; attempt <= options.max_step_shrinks; ++attempt) {
        Probe probes[4];
        const double offsets[4] = {h, -h, 2 * h, -2 * h};
        for (int k = 0; k < 4; ++k) {
          v = orig + offsets[k];
          probes[k] = objective();
        }
        v = orig;
        const bool same = std::all_of(
            probes + 1, probes + 4,
            [&](const Probe& q) { return q.digest == probes[0].digest; });
        if (same) {
          numeric = (8.0 * (probes[0].value - probes[1].value) -
                     (probes[2].value - probes[3].value)) /
                    (12.0 * h);
          break;
        }
        h *= 0.1;
      }
      if (!numeric) {
        ++entry.skipped;
        continue;
      }
      const double a = analytic[idx];
      const double denom =
          std::max({std::abs(a), std::abs(*numeric), options.floor});
      entry.max_rel_error =
          std::max(entry.max_rel_error, std::abs(a - *numeric) / denom);
      ++entry.checked;
    }
    report.entries.push_back(entry);
  }
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor<double> t = leaves[li].second;
    t.set_requires_grad(saved_flags[li]);
  }
  return report;
}

namespace {

using Case = std::function<GradcheckReport(double, std::uint64_t)>;

// Values bounded away from zero so that step-sized perturbations never
// cross a relu kink.
Tensor<double> kink_safe(Shape shape, std::mt19937_64& rng) {
  Tensor<double> t = random_tensor(shape, rng, 0.05, 1.0);
  for (double& v : t.mutable_data()) {
    if (rng() & 1) v = -v;
  }
  return t;
}

class LeafCollector : public ModuleVisitor<double> {
 public:
  explicit LeafCollector(std::string key) : key_(std::move(key)) {}
  void param(const std::string& name, Parameter<double>& p) override {
    leaves.emplace_back(name, p.value);
  }
  void bank(const std::string& name, BNBank<double>& b) override {
    if (!b.contains(key_)) b.add(key_);
    BNEntry<double>& e = b.entry(key_);
    leaves.emplace_back(name + ".gamma", e.gamma.value);
    leaves.emplace_back(name + ".beta", e.beta.value);
  }
  std::vector<NamedLeaf> leaves;

 private:
  std::string key_;
};

// Perturbs the affine BN parameters away from their (1, 0) init so their
// gradients are exercised at a generic point.
void jitter(std::vector<NamedLeaf>& leaves, std::mt19937_64& rng) {
  for (NamedLeaf& l : leaves) {
    for (double& v : l.second.mutable_data()) {
      v += 0.2 * (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5);
    }
  }
}

template <typename Fn>
Case op_case(const char* name, Fn build) {
  return [name, build](double tol, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto [leaves, fn] = build(rng);
    return gradcheck(name, fn, leaves, tol);
  };
}

const std::map<std::string, std::pair<Case, double>>& registry() {
  static const auto* cases = new std::map<std::string, std::pair<Case, double>>{
      {"conv2d",
       {op_case("conv2d",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({1, 2, 4, 4}, rng);
                  auto w = random_tensor({3, 2, 3, 3}, rng);
                  auto b = random_tensor({1, 3, 1, 1}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return conv2d(x, w, b, 1, 1);
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"input", x}, {"weight", w},
                                             {"bias", b}},
                      f);
                }),
        1e-4}},
      {"conv2d_strided",
       {op_case("conv2d_strided",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 3, 6, 6}, rng);
                  auto w = random_tensor({4, 3, 3, 3}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return conv2d(x, w, Tensor<double>(), 2, 1);
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"input", x}, {"weight", w}}, f);
                }),
        1e-4}},
      {"conv_transpose2d",
       {op_case("conv_transpose2d",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 3, 3, 3}, rng);
                  auto w = random_tensor({3, 2, 3, 3}, rng);
                  auto b = random_tensor({1, 2, 1, 1}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return conv_transpose2d(x, w, b, 2);
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"input", x}, {"weight", w},
                                             {"bias", b}},
                      f);
                }),
        1e-4}},
      {"maxpool2d",
       {op_case("maxpool2d",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({1, 2, 6, 6}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return maxpool2d(x, 3, 1, 1);
                  };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"avgpool2d",
       {op_case("avgpool2d",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({1, 2, 6, 6}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return avgpool2d(x, 3, 2, 1);
                  };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"global_pool",
       {op_case("global_pool",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 3, 3, 3}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return concat_channels(
                        {global_avg_pool(x), global_max_pool(x)});
                  };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"channel_reduce",
       {op_case("channel_reduce",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 5, 4, 4}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return concat_channels(
                        {channel_reduce_max(x), channel_reduce_mean(x)});
                  };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"concat_channels",
       {op_case("concat_channels",
                [](std::mt19937_64& rng) {
                  auto a = random_tensor({2, 2, 3, 3}, rng);
                  auto b = random_tensor({2, 1, 3, 3}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    // a appears twice: gradients must accumulate.
                    return concat_channels({a, b, a});
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"a", a}, {"b", b}}, f);
                }),
        1e-4}},
      {"batchnorm2d_train",
       {op_case("batchnorm2d_train",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 3, 3, 3}, rng);
                  auto e = std::make_shared<BNEntry<double>>("bn", 3);
                  e->gamma.value.mutable_data()[1] = 1.7;
                  e->beta.value.mutable_data()[2] = -0.4;
                  std::function<Tensor<double>()> f = [=] {
                    return batchnorm2d(x, *e, Mode::kTrain);
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"input", x},
                                             {"gamma", e->gamma.value},
                                             {"beta", e->beta.value}},
                      f);
                }),
        1e-4}},
      {"batchnorm2d_eval",
       {op_case("batchnorm2d_eval",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 3, 3, 3}, rng);
                  auto e = std::make_shared<BNEntry<double>>("bn", 3);
                  e->running_mean = {0.1, -0.2, 0.3};
                  e->running_var = {0.5, 1.5, 2.0};
                  e->has_stats = true;
                  std::function<Tensor<double>()> f = [=] {
                    return batchnorm2d(x, *e, Mode::kEval);
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"input", x},
                                             {"gamma", e->gamma.value},
                                             {"beta", e->beta.value}},
                      f);
                }),
        1e-4}},
      {"sigmoid",
       {op_case("sigmoid",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 3, 4, 4}, rng, -3.0, 3.0);
                  std::function<Tensor<double>()> f = [=] { return sigmoid(x); };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"relu",
       {op_case("relu",
                [](std::mt19937_64& rng) {
                  auto x = kink_safe({2, 3, 4, 4}, rng);
                  std::function<Tensor<double>()> f = [=] { return relu(x); };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"relu6",
       {op_case("relu6",
                [](std::mt19937_64& rng) {
                  auto x = kink_safe({2, 3, 4, 4}, rng);
                  for (double& v : x.mutable_data()) v *= 8.0;
                  std::function<Tensor<double>()> f = [=] { return relu6(x); };
                  return std::make_pair(std::vector<NamedLeaf>{{"input", x}},
                                        f);
                }),
        1e-4}},
      {"add_mul",
       {op_case("add_mul",
                [](std::mt19937_64& rng) {
                  auto a = random_tensor({2, 3, 4, 4}, rng);
                  auto b = random_tensor({2, 3, 4, 4}, rng);
                  auto gc = random_tensor({2, 3, 1, 1}, rng);
                  auto gs = random_tensor({2, 1, 4, 4}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return mul(mul(add(a, b), gc), one_minus(gs));
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"a", a},
                                             {"b", b},
                                             {"channel_gate", gc},
                                             {"spatial_gate", gs}},
                      f);
                }),
        1e-4}},
      {"linear",
       {op_case("linear",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({3, 8, 1, 1}, rng);
                  auto w = random_tensor({5, 8, 1, 1}, rng);
                  auto b = random_tensor({1, 5, 1, 1}, rng);
                  std::function<Tensor<double>()> f = [=] {
                    return linear(x, w, b);
                  };
                  return std::make_pair(
                      std::vector<NamedLeaf>{{"input", x}, {"weight", w},
                                             {"bias", b}},
                      f);
                }),
        1e-4}},
      {"softmax_cross_entropy",
       {op_case("softmax_cross_entropy",
                [](std::mt19937_64& rng) {
                  auto x = random_tensor({2, 2, 3, 3}, rng, -2.0, 2.0);
                  LabelMap y{2, 3, 3, std::vector<std::uint8_t>(18)};
                  for (auto& v : y.values) v = rng() & 1;
                  std::function<Tensor<double>()> f = [=] {
                    return softmax_cross_entropy(x, y);
                  };
                  return std::make_pair(std::vector<NamedLeaf>{{"logits", x}},
                                        f);
                }),
        1e-4}},
      {"se_block",
       {op_case("se_block",
                [](std::mt19937_64& rng) {
                  auto se = std::make_shared<SEBlock<double>>(6, 16, rng);
                  auto x = random_tensor({2, 6, 3, 3}, rng);
                  LeafCollector c("d");
                  se->visit("se", c);
                  c.leaves.insert(c.leaves.begin(), {"input", x});
                  std::function<Tensor<double>()> f = [=] {
                    return se->forward(x);
                  };
                  return std::make_pair(c.leaves, f);
                }),
        1e-4}},
      {"cbam_block",
       {op_case("cbam_block",
                [](std::mt19937_64& rng) {
                  auto cbam = std::make_shared<CBAMBlock<double>>(6, 16, rng);
                  auto x = random_tensor({2, 6, 4, 4}, rng);
                  LeafCollector c("d");
                  cbam->visit("cbam", c);
                  c.leaves.insert(c.leaves.begin(), {"input", x});
                  std::function<Tensor<double>()> f = [=] {
                    return cbam->forward(x);
                  };
                  return std::make_pair(c.leaves, f);
                }),
        1e-4}},
      {"ff_block",
       {op_case("ff_block",
                [](std::mt19937_64& rng) {
                  auto ff = std::make_shared<FFBlock<double>>(9, 4, 16, rng);
                  auto prev = random_tensor({2, 3, 2, 2}, rng);
                  auto f1 = random_tensor({2, 3, 2, 2}, rng);
                  auto f2 = random_tensor({2, 3, 2, 2}, rng);
                  LeafCollector c("d");
                  ff->visit("ff", c);
                  jitter(c.leaves, rng);
                  c.leaves.insert(c.leaves.begin(),
                                  {{"prev", prev}, {"f1", f1}, {"f2", f2}});
                  std::function<Tensor<double>()> f = [=] {
                    return ff->forward(prev, f1, f2, BNRoute{"d", Mode::kTrain});
                  };
                  return std::make_pair(c.leaves, f);
                }),
        1e-4}},
      {"icm_block",
       {op_case("icm_block",
                [](std::mt19937_64& rng) {
                  auto icm = std::make_shared<ICMBlock<double>>(
                      4, PoolingMode::kChannel, 16, rng);
                  auto p = random_tensor({2, 2, 4, 4}, rng);
                  LeafCollector c("d");
                  icm->visit("icm", c);
                  c.leaves.insert(c.leaves.begin(), {"p", p});
                  std::function<Tensor<double>()> f = [=] {
                    return icm->forward(p).masked;
                  };
                  return std::make_pair(c.leaves, f);
                }),
        1e-4}},
      {"icm_block_spatial",
       {op_case("icm_block_spatial",
                [](std::mt19937_64& rng) {
                  auto icm = std::make_shared<ICMBlock<double>>(
                      4, PoolingMode::kSpatial, 16, rng);
                  auto p = random_tensor({2, 2, 4, 4}, rng);
                  LeafCollector c("d");
                  icm->visit("icm", c);
                  c.leaves.insert(c.leaves.begin(), {"p", p});
                  std::function<Tensor<double>()> f = [=] {
                    return icm->forward(p).masked;
                  };
                  return std::make_pair(c.leaves, f);
                }),
        1e-4}},
      {"encoder_stages",
       {op_case("encoder_stages",
                [](std::mt19937_64& rng) {
                  auto res = std::make_shared<EncoderStage<double>>(
                      2, 3, BlockKind::kResidual, rng);
                  auto inv = std::make_shared<EncoderStage<double>>(
                      3, 3, BlockKind::kInvertedResidual, rng);
                  auto x = random_tensor({2, 2, 8, 8}, rng);
                  LeafCollector c("d");
                  res->visit("residual", c);
                  inv->visit("inverted_residual", c);
                  jitter(c.leaves, rng);
                  c.leaves.insert(c.leaves.begin(), {"input", x});
                  std::function<Tensor<double>()> f = [=] {
                    const BNRoute route{"d", Mode::kTrain};
                    return inv->forward(res->forward(x, route), route);
                  };
                  return std::make_pair(c.leaves, f);
                }),
        1e-4}},
  };
  return *cases;
}

GradcheckReport model_case(double tol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelConfig cfg;
  cfg.seed = seed;
  auto model = std::make_shared<CANetModel<double>>(cfg);
  model->add_dataset("d");
  auto x1 = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  auto x2 = random_tensor({2, 3, 16, 16}, rng, 0.0, 1.0);
  LabelMap y{2, 16, 16, std::vector<std::uint8_t>(512)};
  for (auto& v : y.values) v = (rng() % 4) == 0;
  std::vector<NamedLeaf> leaves;
  class Names : public ModuleVisitor<double> {
   public:
    void param(const std::string& n, Parameter<double>& p) override {
      out->emplace_back(n, p.value);
    }
    void bank(const std::string& n, BNBank<double>& b) override {
      for (auto& [key, e] : b.entries()) {
        out->emplace_back(n + "[" + key + "].gamma", e.gamma.value);
        out->emplace_back(n + "[" + key + "].beta", e.beta.value);
      }
    }
    std::vector<NamedLeaf>* out = nullptr;
  } names;
  names.out = &leaves;
  model->visit(names);
  leaves.insert(leaves.begin(), {{"x1", x1}, {"x2", x2}});
  std::function<Tensor<double>()> f = [=] {
    auto r = model->forward(x1, x2, "d", Mode::kTrain);
    return softmax_cross_entropy(r.logits, y);
  };
  GradcheckOptions opts;
  opts.step = 1e-4;
  opts.samples_per_leaf = 5;
  opts.seed = seed;
  return gradcheck("canet_model", f, leaves, tol, opts);
}

}  // namespace

std::vector<std::string> gradcheck_case_names() {
  std::vector<std::string> names;
  for (const auto& [name, c] : registry()) names.push_back(name);
  names.push_back("canet_model");
  return names;
}

GradcheckReport run_gradcheck_case(const std::string& name, double tolerance,
                                   std::uint64_t seed) {
  if (name == "canet_model") {
    return model_case(tolerance > 0 ? tolerance : 1e-3, seed);
  }
  auto it = registry().find(name);
  require(it != registry().end(), ErrorCode::kInvalidArgument,
          "unknown gradcheck op '" + name + "'");
  return it->second.first(tolerance > 0 ? tolerance : it->second.second, seed);
}

}  // namespace canet
