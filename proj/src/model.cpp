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

#include "canet/model.hpp"

#include <algorithm>
#include <set>

namespace canet {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Fresh adapters draw from a stream keyed by (model seed, dataset id), so
// their initialization does not depend on registration history.
std::uint64_t dataset_seed(std::uint64_t seed, const std::string& id) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : id) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(seed ^ splitmix64(h));
}

template <typename T>
class CollectVisitor : public ModuleVisitor<T> {
 public:
  void param(const std::string&, Parameter<T>& p) override {
    params.push_back(&p);
  }
  void bank(const std::string&, BNBank<T>& b) override { banks.push_back(&b); }

  std::vector<Parameter<T>*> params;
  std::vector<BNBank<T>*> banks;
};

template <typename T>
std::size_t count(const std::vector<Parameter<T>*>& ps) {
  std::size_t n = 0;
  for (const Parameter<T>* p : ps) n += p->size();
  return n;
}

}  // namespace

BlockKind ModelConfig::kind(std::size_t stage) const {
  return encoder.kinds.empty() ? BlockKind::kPlain : encoder.kinds.at(stage);
}

void ModelConfig::validate() const {
  const std::size_t l = stages();
  require(l >= 2, ErrorCode::kConfig, "model needs at least 2 encoder stages");
  for (std::size_t w : encoder.widths) {
    require(w >= 1, ErrorCode::kConfig, "stage widths must be positive");
  }
  require(encoder.kinds.empty() || encoder.kinds.size() == l,
          ErrorCode::kConfig, "one block kind per encoder stage required");
  require(eta >= 2 && static_cast<std::size_t>(eta) <= l, ErrorCode::kConfig,
          "eta must lie in [2, " + std::to_string(l) + "], got " +
              std::to_string(eta));
  require(icm_width >= 1 && in_channels >= 1, ErrorCode::kConfig,
          "icm_width and in_channels must be positive");
}

// EncoderStage

template <typename T>
EncoderStage<T>::EncoderStage(std::size_t in, std::size_t out,
                              BlockKind block_kind, std::mt19937_64& rng)
    : kind(block_kind), down(in, out, 3, 2, Activation::kRelu, rng) {
  switch (kind) {
    case BlockKind::kPlain:
      body.emplace_back(out, out, 3, 1, Activation::kRelu, rng);
      break;
    case BlockKind::kResidual:
      body.emplace_back(out, out, 3, 1, Activation::kRelu, rng);
      body.emplace_back(out, out, 3, 1, Activation::kNone, rng);
      break;
    case BlockKind::kInvertedResidual:
      body.emplace_back(out, 2 * out, 1, 1, Activation::kRelu6, rng);
      body.emplace_back(2 * out, 2 * out, 3, 1, Activation::kRelu6, rng);
      body.emplace_back(2 * out, out, 1, 1, Activation::kNone, rng);
      break;
  }
}

template <typename T>
Tensor<T> EncoderStage<T>::forward(const Tensor<T>& x, const BNRoute& route) {
  Tensor<T> y = down.forward(x, route);
  Tensor<T> z = y;
  for (ConvBlock<T>& b : body) z = b.forward(z, route);
  switch (kind) {
    case BlockKind::kPlain:
      return z;
    case BlockKind::kResidual:
      return relu(add(y, z));
    case BlockKind::kInvertedResidual:
      return add(y, z);
  }
  return z;
}

template <typename T>
void EncoderStage<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  down.visit(join(prefix, "down"), v);
  for (std::size_t i = 0; i < body.size(); ++i) {
    body[i].visit(join(prefix, "body." + std::to_string(i)), v);
  }
}

template <typename T>
void Adapter<T>::visit(const std::string& prefix, ModuleVisitor<T>& v) {
  for (std::size_t i = 0; i < ff.size(); ++i) {
    ff[i].visit(join(prefix, "ff." + std::to_string(i)), v);
  }
  head.visit(join(prefix, "head"), v);
  classifier.visit(join(prefix, "classifier"), v);
}

// CANetModel

namespace {

// Decoder channel schedule: block i fuses encoder level (l - 1 - i).
std::size_t ff_out(const ModelConfig& c, std::size_t i) {
  const std::size_t l = c.stages();
  return c.encoder.widths[i + 2 <= l ? l - 2 - i : 0];
}

std::size_t ff_in(const ModelConfig& c, std::size_t i) {
  const std::size_t skip = c.encoder.widths[c.stages() - 1 - i];
  return i == 0 ? 2 * skip : ff_out(c, i - 1) + 2 * skip;
}

}  // namespace

template <typename T>
CANetModel<T>::CANetModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  std::size_t in = config_.in_channels;
  for (std::size_t s = 0; s < config_.stages(); ++s) {
    const std::size_t out = config_.encoder.widths[s];
    encoder_.emplace_back(in, out, config_.kind(s), rng);
    in = out;
  }
  const std::size_t shared_blocks = decoder_depth() - config_.eta;
  for (std::size_t i = 0; i < shared_blocks; ++i) {
    shared_ff_.emplace_back(ff_in(config_, i), ff_out(config_, i),
                            config_.cbam_reduction, rng);
    if (config_.bn_scope == BNScope::kEncoderOnly) {
      shared_ff_.back().conv.bn.add(kSharedBankKey);
    }
  }
}

template <typename T>
Adapter<T> CANetModel<T>::build_adapter(std::mt19937_64& rng) const {
  Adapter<T> a;
  for (std::size_t i = decoder_depth() - config_.eta; i < decoder_depth(); ++i) {
    a.ff.emplace_back(ff_in(config_, i), ff_out(config_, i),
                      config_.cbam_reduction, rng);
  }
  const std::size_t width = ff_out(config_, decoder_depth() - 1);
  a.head = ConvBlock<T>(width, width, 3, 1, Activation::kRelu, rng);
  a.classifier = Conv2d<T>(width, 2, 1, 1, 0, true, rng);
  a.icm = std::make_shared<ICMBlock<T>>(config_.icm_width, config_.icm_pooling,
                                        config_.se_reduction, rng);
  return a;
}

template <typename T>
std::vector<BNBank<T>*> CANetModel<T>::per_dataset_banks() {
  std::vector<BNBank<T>*> out;
  CollectVisitor<T> enc;
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    encoder_[s].visit("", enc);
  }
  out = enc.banks;
  if (config_.bn_scope == BNScope::kAllShared) {
    for (FFBlock<T>& b : shared_ff_) out.push_back(&b.conv.bn);
  }
  return out;
}

template <typename T>
void CANetModel<T>::require_dataset(const std::string& id) const {
  require(adapters_.count(id) > 0, ErrorCode::kUnknownDataset,
          "dataset '" + id + "' is not registered");
}

template <typename T>
bool CANetModel<T>::has_dataset(const std::string& id) const {
  return adapters_.count(id) > 0;
}

template <typename T>
Adapter<T>& CANetModel<T>::adapter(const std::string& id) {
  require_dataset(id);
  return *adapters_.at(id);
}

template <typename T>
std::string CANetModel<T>::route_key(const std::string& id) const {
  return ablation_ == Ablation::kSharedBN ? anchor_ : id;
}

template <typename T>
void CANetModel<T>::add_dataset(const std::string& id,
                                const std::optional<std::string>& init_from) {
  require(!id.empty(), ErrorCode::kInvalidArgument, "dataset id is empty");
  require(!has_dataset(id), ErrorCode::kDuplicateDataset,
          "dataset '" + id + "' is already registered");
  if (init_from) require_dataset(*init_from);

  if (ablation_ != Ablation::kSharedBN || order_.empty()) {
    for (BNBank<T>* bank : per_dataset_banks()) bank->add(id, init_from);
  }

  auto a = std::make_shared<Adapter<T>>();
  if (init_from) {
    const Adapter<T>& src = *adapters_.at(*init_from);
    *a = deep_copy(src);
    CollectVisitor<T> banks;
    a->visit("", banks);
    for (BNBank<T>* b : banks.banks) b->rename(*init_from, id);
    a->icm = std::make_shared<ICMBlock<T>>(deep_copy(*src.icm));
  } else {
    std::mt19937_64 rng(dataset_seed(config_.seed, id));
    *a = build_adapter(rng);
    CollectVisitor<T> banks;
    a->visit("", banks);
    for (BNBank<T>* b : banks.banks) b->add(id);
  }
  if (ablation_ == Ablation::kSharedICM && !order_.empty()) {
    a->icm = adapters_.at(anchor_)->icm;
  }
  adapters_.emplace(id, std::move(a));
  order_.push_back(id);
  if (anchor_.empty()) anchor_ = id;
}

template <typename T>
std::vector<Tensor<T>> CANetModel<T>::encode(const Tensor<T>& x,
                                             const std::string& id, Mode mode) {
  require_dataset(id);
  const BNRoute route{route_key(id), mode};
  std::vector<Tensor<T>> feats;
  Tensor<T> h = x;
  for (EncoderStage<T>& stage : encoder_) {
    h = stage.forward(h, route);
    feats.push_back(h);
  }
  return feats;
}

template <typename T>
ForwardResult<T> CANetModel<T>::forward(const Tensor<T>& x1,
                                        const Tensor<T>& x2,
                                        const std::string& id, Mode mode) {
  require_dataset(id);
  const Shape& s = x1.shape();
  require(s == x2.shape(), ErrorCode::kShapeMismatch,
          "temporal inputs differ: " + s.str() + " vs " + x2.shape().str());
  require(s.c == config_.in_channels, ErrorCode::kShapeMismatch,
          "expected " + std::to_string(config_.in_channels) +
              " input channels, got " + s.str());
  const std::size_t factor = std::size_t{1} << config_.stages();
  require(s.h > 0 && s.w > 0 && s.h % factor == 0 && s.w % factor == 0,
          ErrorCode::kShapeMismatch,
          "spatial dims " + s.str() + " must be divisible by " +
              std::to_string(factor));

  std::vector<Tensor<T>> f1 = encode(x1, id, mode);
  std::vector<Tensor<T>> f2 = encode(x2, id, mode);

  const BNRoute shared_route{
      config_.bn_scope == BNScope::kAllShared ? route_key(id) : kSharedBankKey,
      mode};
  const BNRoute adapter_route{id, mode};
  Adapter<T>& a = *adapters_.at(id);
  const std::size_t depth = decoder_depth();
  const std::size_t shared_blocks = shared_ff_.size();
  Tensor<T> h;
  for (std::size_t i = 0; i < depth; ++i) {
    const std::size_t level = depth - 1 - i;
    if (i < shared_blocks) {
      h = shared_ff_[i].forward(h, f1[level], f2[level], shared_route);
    } else {
      h = a.ff[i - shared_blocks].forward(h, f1[level], f2[level],
                                          adapter_route);
    }
  }
  ForwardResult<T> out;
  out.p = a.classifier.forward(a.head.forward(h, adapter_route));
  if (ablation_ == Ablation::kNoICM) {
    out.logits = out.p;
  } else {
    ICMOutput<T> icm = a.icm->forward(out.p);
    out.logits = icm.masked;
    out.mask = icm.mask;
  }
  return out;
}

template <typename T>
void CANetModel<T>::visit_shared(ModuleVisitor<T>& v) {
  for (std::size_t s = 0; s < encoder_.size(); ++s) {
    encoder_[s].visit("encoder." + std::to_string(s), v);
  }
  for (std::size_t i = 0; i < shared_ff_.size(); ++i) {
    shared_ff_[i].visit("decoder.ff." + std::to_string(i), v);
  }
}

template <typename T>
void CANetModel<T>::visit(ModuleVisitor<T>& v) {
  visit_shared(v);
  for (const std::string& id : order_) {
    Adapter<T>& a = *adapters_.at(id);
    const std::string prefix = "adapter[" + id + "]";
    a.visit(prefix, v);
    if (ablation_ != Ablation::kSharedICM) a.icm->visit(prefix + ".icm", v);
  }
  if (ablation_ == Ablation::kSharedICM && !anchor_.empty()) {
    adapters_.at(anchor_)->icm->visit("shared_icm", v);
  }
}

template <typename T>
std::vector<Parameter<T>*> CANetModel<T>::parameters() {
  CollectVisitor<T> all;
  visit(all);
  std::vector<Parameter<T>*> out = all.params;
  for (BNBank<T>* b : all.banks) {
    for (auto& [key, e] : b->entries()) {
      out.push_back(&e.gamma);
      out.push_back(&e.beta);
    }
  }
  return out;
}

template <typename T>
typename CANetModel<T>::Groups CANetModel<T>::groups(const std::string& id,
                                                     bool owned_only) {
  require_dataset(id);
  Groups g;
  CollectVisitor<T> shared;
  visit_shared(shared);
  g.shared = shared.params;
  if (config_.bn_scope == BNScope::kEncoderOnly) {
    for (FFBlock<T>& b : shared_ff_) {
      BNEntry<T>& e = b.conv.bn.entry(kSharedBankKey);
      g.shared.push_back(&e.gamma);
      g.shared.push_back(&e.beta);
    }
  }
  const std::string key = route_key(id);
  if (!owned_only || key == id) {
    for (BNBank<T>* bank : per_dataset_banks()) {
      BNEntry<T>& e = bank->entry(key);
      g.bank.push_back(&e.gamma);
      g.bank.push_back(&e.beta);
    }
  }
  Adapter<T>& a = *adapters_.at(id);
  CollectVisitor<T> own;
  a.visit("", own);
  g.adapter = own.params;
  for (BNBank<T>* b : own.banks) {
    BNEntry<T>& e = b->entry(id);
    g.adapter.push_back(&e.gamma);
    g.adapter.push_back(&e.beta);
  }
  const bool icm_owned = ablation_ != Ablation::kSharedICM || id == anchor_;
  if (!owned_only || icm_owned) {
    CollectVisitor<T> icm;
    a.icm->visit("", icm);
    g.adapter.insert(g.adapter.end(), icm.params.begin(), icm.params.end());
  }
  return g;
}

template <typename T>
std::vector<Parameter<T>*> CANetModel<T>::trainable_set(const std::string& id,
                                                        Scope scope) {
  require_dataset(id);
  for (Parameter<T>* p : parameters()) p->set_trainable(false);
  Groups g = groups(id, scope == Scope::kAdapterOnly);
  std::vector<Parameter<T>*> out;
  if (scope == Scope::kFull) out = g.shared;
  out.insert(out.end(), g.bank.begin(), g.bank.end());
  for (Parameter<T>* p : g.adapter) {
    // An ablated ICM receives no gradient; leave it frozen.
    if (ablation_ == Ablation::kNoICM) {
      bool in_icm = false;
      CollectVisitor<T> icm;
      adapters_.at(id)->icm->visit("", icm);
      in_icm = std::find(icm.params.begin(), icm.params.end(), p) !=
               icm.params.end();
      if (in_icm) continue;
    }
    out.push_back(p);
  }
  for (Parameter<T>* p : out) p->set_trainable(true);
  return out;
}

template <typename T>
ParamPartition CANetModel<T>::param_partition(const std::string& id) {
  Groups owned = groups(id, true);
  Groups used = groups(id, false);
  ParamPartition out;
  out.shared_count = count(used.shared);
  out.adapter_count = count(owned.adapter);
  out.bn_bank_count_per_dataset = count(owned.bank);
  out.total = out.shared_count + count(used.bank) + count(used.adapter);
  out.stored_total = count(parameters());
  out.fraction = static_cast<double>(out.adapter_count +
                                     out.bn_bank_count_per_dataset) /
                 static_cast<double>(out.total);
  return out;
}

template <typename T>
void CANetModel<T>::apply_ablation(Ablation ablation) {
  if (ablation == Ablation::kNone || ablation == ablation_) return;
  require(ablation_ == Ablation::kNone, ErrorCode::kState,
          std::string("model already carries ablation ") + to_string(ablation_));
  require(!anchor_.empty() || ablation == Ablation::kNoICM, ErrorCode::kState,
          "ablation needs at least one registered dataset");
  ablation_ = ablation;
  if (ablation == Ablation::kSharedICM) {
    auto icm = adapters_.at(anchor_)->icm;
    for (auto& [id, a] : adapters_) a->icm = icm;
  } else if (ablation == Ablation::kSharedBN) {
    for (BNBank<T>* bank : per_dataset_banks()) {
      for (auto it = bank->entries().begin(); it != bank->entries().end();) {
        it = it->first == anchor_ ? std::next(it) : bank->entries().erase(it);
      }
    }
  }
}

template <typename T>
std::size_t CANetModel<T>::active_bank_count() const {
  std::set<std::string> keys;
  for (const std::string& id : order_) keys.insert(route_key(id));
  return keys.size();
}

template class EncoderStage<float>;
template class EncoderStage<double>;
template struct Adapter<float>;
template struct Adapter<double>;
template class CANetModel<float>;
template class CANetModel<double>;

// String conversions

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::kPlain: return "plain";
    case BlockKind::kResidual: return "residual";
    case BlockKind::kInvertedResidual: return "inverted_residual";
  }
  return "?";
}

const char* to_string(Ablation ablation) {
  switch (ablation) {
    case Ablation::kNone: return "none";
    case Ablation::kNoICM: return "no_icm";
    case Ablation::kSharedICM: return "shared_icm";
    case Ablation::kSharedBN: return "shared_bn";
  }
  return "?";
}

const char* to_string(Scope scope) {
  return scope == Scope::kFull ? "full" : "adapter_only";
}

const char* to_string(PoolingMode mode) {
  return mode == PoolingMode::kChannel ? "channel" : "spatial";
}

const char* to_string(BNScope scope) {
  return scope == BNScope::kAllShared ? "all_shared" : "encoder_only";
}

BlockKind parse_block_kind(const std::string& s) {
  if (s == "plain") return BlockKind::kPlain;
  if (s == "residual") return BlockKind::kResidual;
  if (s == "inverted_residual") return BlockKind::kInvertedResidual;
  fail(ErrorCode::kConfig, "unknown block kind '" + s + "'");
}

Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::kNone;
  if (s == "no_icm") return Ablation::kNoICM;
  if (s == "shared_icm") return Ablation::kSharedICM;
  if (s == "shared_bn") return Ablation::kSharedBN;
  fail(ErrorCode::kConfig, "unknown ablation '" + s + "'");
}

Scope parse_scope(const std::string& s) {
  if (s == "full") return Scope::kFull;
  if (s == "adapter_only") return Scope::kAdapterOnly;
  fail(ErrorCode::kConfig, "unknown scope '" + s + "'");
}

PoolingMode parse_pooling_mode(const std::string& s) {
  if (s == "channel") return PoolingMode::kChannel;
  if (s == "spatial") return PoolingMode::kSpatial;
  fail(ErrorCode::kConfig, "unknown pooling mode '" + s + "'");
}

BNScope parse_bn_scope(const std::string& s) {
  if (s == "all_shared") return BNScope::kAllShared;
  if (s == "encoder_only") return BNScope::kEncoderOnly;
  fail(ErrorCode::kConfig, "unknown bn scope '" + s + "'");
}

}  // namespace canet
