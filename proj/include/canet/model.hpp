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

#ifndef CANET_MODEL_HPP_
#define CANET_MODEL_HPP_

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "canet/blocks.hpp"

namespace canet {

enum class BlockKind { kPlain, kResidual, kInvertedResidual };

/// Which shared batch-norm layers carry one entry per dataset.
enum class BNScope { kAllShared, kEncoderOnly };

enum class Scope { kFull, kAdapterOnly };

enum class Ablation { kNone, kNoICM, kSharedICM, kSharedBN };

struct EncoderConfig {
  std::vector<std::size_t> widths{16, 32, 64, 128};
  /// One per stage; empty means plain everywhere.
  std::vector<BlockKind> kinds;
};

struct ModelConfig {
  EncoderConfig encoder;
  int eta = 3;
  std::size_t icm_width = 16;
  PoolingMode icm_pooling = PoolingMode::kChannel;
  std::size_t se_reduction = 16;
  std::size_t cbam_reduction = 16;
  BNScope bn_scope = BNScope::kAllShared;
  std::size_t in_channels = 3;
  std::uint64_t seed = 0;

  std::size_t stages() const { return encoder.widths.size(); }
  BlockKind kind(std::size_t stage) const;
  /// Throws ErrorCode::kConfig on an inconsistent configuration.
  void validate() const;
};

/// Parameter counts as seen by one dataset.
struct ParamPartition {
  std::size_t shared_count = 0;
  /// Parameters owned by the dataset's adapter (ICM included when owned).
  std::size_t adapter_count = 0;
  /// Affine parameters of the dataset's own entries in the shared BN banks.
  std::size_t bn_bank_count_per_dataset = 0;
  /// Size of the network a single dataset runs through.
  std::size_t total = 0;
  /// Every distinct parameter stored in the model, all datasets included.
  std::size_t stored_total = 0;
  double fraction = 0.0;
};

template <typename T>
struct ForwardResult {
  Tensor<T> logits;  // m * p, or p when the ICM is ablated
  Tensor<T> mask;    // undefined when the ICM is ablated
  Tensor<T> p;
};

template <typename T>
class EncoderStage {
 public:
  using Scalar = T;
  EncoderStage() = default;
  EncoderStage(std::size_t in, std::size_t out, BlockKind kind,
               std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& x, const BNRoute& route);
  void visit(const std::string& prefix, ModuleVisitor<T>& v);

  BlockKind kind = BlockKind::kPlain;
  ConvBlock<T> down;  // 3x3, stride 2
  std::vector<ConvBlock<T>> body;
};

/// Per-dataset tail: the last eta FF blocks, the prediction head and the ICM.
template <typename T>
struct Adapter {
  using Scalar = T;
  std::vector<FFBlock<T>> ff;
  ConvBlock<T> head;
  Conv2d<T> classifier;  // 1x1 to two channels
  std::shared_ptr<ICMBlock<T>> icm;

  /// Visits everything except the ICM.
  void visit(const std::string& prefix, ModuleVisitor<T>& v);
};

/// Siamese encoder, shared decoder prefix and a registry of per-dataset
/// adapters and BN entries.
template <typename T>
class CANetModel {
 public:
  using Scalar = T;

  explicit CANetModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  std::size_t decoder_depth() const { return config_.stages(); }

  void add_dataset(const std::string& id,
                   const std::optional<std::string>& init_from = std::nullopt);
  bool has_dataset(const std::string& id) const;
  /// Registration order.
  const std::vector<std::string>& dataset_ids() const { return order_; }

  ForwardResult<T> forward(const Tensor<T>& x1, const Tensor<T>& x2,
                           const std::string& id, Mode mode);
  /// Encoder feature stack of one temporal image, shallowest first.
  std::vector<Tensor<T>> encode(const Tensor<T>& x, const std::string& id,
                                Mode mode);

  /// Marks exactly the returned parameters trainable; all others frozen.
  std::vector<Parameter<T>*> trainable_set(const std::string& id, Scope scope);
  /// Every distinct parameter.
  std::vector<Parameter<T>*> parameters();

  ParamPartition param_partition(const std::string& id);

  void apply_ablation(Ablation ablation);
  Ablation ablation() const { return ablation_; }
  /// Dataset the shared ICM and shared BN entries belong to (first
  /// registered).
  const std::string& anchor() const { return anchor_; }
  /// Number of distinct entries the shared BN layers route datasets to.
  std::size_t active_bank_count() const;

  Adapter<T>& adapter(const std::string& id);
  /// Visits every distinct parameter and BN layer with stable names.
  void visit(ModuleVisitor<T>& v);

 private:
  struct Groups {
    std::vector<Parameter<T>*> shared;
    std::vector<Parameter<T>*> bank;
    std::vector<Parameter<T>*> adapter;
  };

  void require_dataset(const std::string& id) const;
  std::string route_key(const std::string& id) const;
  Adapter<T> build_adapter(std::mt19937_64& rng) const;
  std::vector<BNBank<T>*> per_dataset_banks();
  void visit_shared(ModuleVisitor<T>& v);
  Groups groups(const std::string& id, bool owned_only);

  ModelConfig config_;
  std::vector<EncoderStage<T>> encoder_;
  std::vector<FFBlock<T>> shared_ff_;
  std::map<std::string, std::shared_ptr<Adapter<T>>> adapters_;
  std::vector<std::string> order_;
  std::string anchor_;
  Ablation ablation_ = Ablation::kNone;
};

/// Key of the single entry used by decoder BN layers that are not banked
/// per dataset (BNScope::kEncoderOnly).
inline constexpr const char* kSharedBankKey = "*";

const char* to_string(BlockKind kind);
const char* to_string(Ablation ablation);
const char* to_string(Scope scope);
const char* to_string(PoolingMode mode);
const char* to_string(BNScope scope);
BlockKind parse_block_kind(const std::string& s);
Ablation parse_ablation(const std::string& s);
Scope parse_scope(const std::string& s);
PoolingMode parse_pooling_mode(const std::string& s);
BNScope parse_bn_scope(const std::string& s);

}  // namespace canet

#endif  // CANET_MODEL_HPP_
