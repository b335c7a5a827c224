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

#include "canet/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

namespace canet {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written in host order");

namespace {

constexpr char kMagic[4] = {'C', 'A', 'N', 'T'};

template <typename T>
constexpr std::uint8_t dtype_tag() {
  return sizeof(T) == 4 ? 0 : 1;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const uInt chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

class Writer {
 public:
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf.insert(buf.end(), b, b + n);
  }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint8_t u8() { return take(1)[0]; }
  std::uint32_t u32() {
    std::uint32_t v;
    std::memcpy(&v, take(4), 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    std::memcpy(&v, take(8), 8);
    return v;
  }
  std::string str() {
    const std::uint32_t n = u32();
    const std::uint8_t* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  const std::uint8_t* take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      fail(ErrorCode::kFormat, "checkpoint truncated at byte " +
                                   std::to_string(pos_));
    }
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct Record {
  std::uint8_t dtype = 0;
  std::vector<std::uint32_t> dims;
  const std::uint8_t* payload = nullptr;
  std::size_t count = 0;
};

struct Parsed {
  CheckpointIndex index;
  std::map<std::string, Record> records;
};

void write_config(Writer& w, const ModelConfig& c, Ablation ablation) {
  w.u32(static_cast<std::uint32_t>(c.eta));
  w.u32(static_cast<std::uint32_t>(c.stages()));
  for (std::size_t s = 0; s < c.stages(); ++s) {
    w.u32(static_cast<std::uint32_t>(c.encoder.widths[s]));
    w.u8(static_cast<std::uint8_t>(c.kind(s)));
  }
  w.u32(static_cast<std::uint32_t>(c.icm_width));
  w.u8(static_cast<std::uint8_t>(c.icm_pooling));
  w.u32(static_cast<std::uint32_t>(c.se_reduction));
  w.u32(static_cast<std::uint32_t>(c.cbam_reduction));
  w.u8(static_cast<std::uint8_t>(c.bn_scope));
  w.u32(static_cast<std::uint32_t>(c.in_channels));
  w.u64(c.seed);
  w.u8(static_cast<std::uint8_t>(ablation));
}

template <typename E>
E enum_from(std::uint8_t v, std::uint8_t max, const char* what) {
  require(v <= max, ErrorCode::kFormat,
          std::string("checkpoint: bad ") + what + " tag " + std::to_string(v));
  return static_cast<E>(v);
}

void read_config(Reader& r, ModelConfig& c, Ablation& ablation) {
  c.eta = static_cast<int>(r.u32());
  const std::uint32_t stages = r.u32();
  require(stages <= 64, ErrorCode::kFormat, "checkpoint: implausible depth");
  c.encoder.widths.clear();
  c.encoder.kinds.clear();
  for (std::uint32_t s = 0; s < stages; ++s) {
    c.encoder.widths.push_back(r.u32());
    c.encoder.kinds.push_back(enum_from<BlockKind>(r.u8(), 2, "block kind"));
  }
  c.icm_width = r.u32();
  c.icm_pooling = enum_from<PoolingMode>(r.u8(), 1, "pooling");
  c.se_reduction = r.u32();
  c.cbam_reduction = r.u32();
  c.bn_scope = enum_from<BNScope>(r.u8(), 1, "bn scope");
  c.in_channels = r.u32();
  c.seed = r.u64();
  ablation = enum_from<Ablation>(r.u8(), 3, "ablation");
}

Parsed parse(std::span<const std::uint8_t> bytes) {
  require(bytes.size() >= 12, ErrorCode::kFormat,
          "checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  require(std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kFormat,
          "not a checkpoint: bad magic");
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  Reader r(bytes.first(bytes.size() - 4));
  r.take(4);
  const std::uint32_t version = r.u32();
  require(version == kCheckpointVersion, ErrorCode::kFormat,
          "unsupported checkpoint version " + std::to_string(version));
  require(crc_of(bytes.data(), bytes.size() - 4) == stored, ErrorCode::kFormat,
          "checkpoint checksum mismatch");

  Parsed out;
  read_config(r, out.index.config, out.index.ablation);
  const std::uint32_t n_ids = r.u32();
  for (std::uint32_t i = 0; i < n_ids; ++i) {
    out.index.dataset_ids.push_back(r.str());
  }
  const std::uint32_t n_records = r.u32();
  for (std::uint32_t i = 0; i < n_records; ++i) {
    std::string name = r.str();
    Record rec;
    rec.dtype = r.u8();
    require(rec.dtype <= 1, ErrorCode::kFormat,
            "checkpoint: record '" + name + "' has unknown dtype");
    if (i == 0) out.index.dtype = rec.dtype;
    require(rec.dtype == out.index.dtype, ErrorCode::kFormat,
            "checkpoint: mixed dtypes");
    const std::uint8_t rank = r.u8();
    rec.count = 1;
    for (std::uint8_t d = 0; d < rank; ++d) {
      rec.dims.push_back(r.u32());
      rec.count *= rec.dims.back();
    }
    rec.payload = r.take(rec.count * (rec.dtype == 0 ? 4 : 8));
    out.index.record_names.push_back(name);
    require(out.records.emplace(std::move(name), std::move(rec)).second,
            ErrorCode::kFormat, "checkpoint: duplicate record");
  }
  require(r.done(), ErrorCode::kFormat, "checkpoint: trailing bytes");
  return out;
}

template <typename T>
class SaveVisitor : public ModuleVisitor<T> {
 public:
  void param(const std::string& name, Parameter<T>& p) override {
    const Shape& s = p.value.shape();
    record(name, {static_cast<std::uint32_t>(s.n),
                  static_cast<std::uint32_t>(s.c),
                  static_cast<std::uint32_t>(s.h),
                  static_cast<std::uint32_t>(s.w)},
           p.value.ptr(), s.size());
  }
  void bank(const std::string& name, BNBank<T>& b) override {
    for (auto& [key, e] : b.entries()) {
      const std::string base = name + "[" + key + "]";
      param(base + ".gamma", e.gamma);
      param(base + ".beta", e.beta);
      if (!e.has_stats) continue;
      std::vector<T> stats(e.running_mean);
      stats.insert(stats.end(), e.running_var.begin(), e.running_var.end());
      record(base + ".stats",
             {2, static_cast<std::uint32_t>(e.running_mean.size())},
             stats.data(), stats.size());
    }
  }
  std::uint32_t count = 0;
  Writer body;

 private:
  void record(const std::string& name, std::vector<std::uint32_t> dims,
              const T* data, std::size_t n) {
    body.str(name);
    body.u8(dtype_tag<T>());
    body.u8(static_cast<std::uint8_t>(dims.size()));
    for (std::uint32_t d : dims) body.u32(d);
    body.raw(data, n * sizeof(T));
    ++count;
  }
};

template <typename T>
class LoadVisitor : public ModuleVisitor<T> {
 public:
  explicit LoadVisitor(const std::map<std::string, Record>& records)
      : records_(records) {}

  void param(const std::string& name, Parameter<T>& p) override {
    const Shape& s = p.value.shape();
    const Record& rec = find(name);
    require(rec.dims == std::vector<std::uint32_t>{
                            static_cast<std::uint32_t>(s.n),
                            static_cast<std::uint32_t>(s.c),
                            static_cast<std::uint32_t>(s.h),
                            static_cast<std::uint32_t>(s.w)},
            ErrorCode::kFormat,
            "checkpoint: record '" + name + "' does not match " + s.str());
    std::memcpy(p.value.mutable_data().data(), rec.payload, s.size() * sizeof(T));
  }
  void bank(const std::string& name, BNBank<T>& b) override {
    for (auto& [key, e] : b.entries()) {
      const std::string base = name + "[" + key + "]";
      param(base + ".gamma", e.gamma);
      param(base + ".beta", e.beta);
      auto it = records_.find(base + ".stats");
      e.has_stats = it != records_.end();
      if (!e.has_stats) continue;
      used.insert(it->first);
      const std::uint32_t c = static_cast<std::uint32_t>(b.channels());
      require(it->second.dims == std::vector<std::uint32_t>{2, c},
              ErrorCode::kFormat,
              "checkpoint: stats record '" + it->first + "' has wrong shape");
      const T* src = reinterpret_cast<const T*>(it->second.payload);
      std::vector<T> v(2 * c);
      std::memcpy(v.data(), src, v.size() * sizeof(T));
      e.running_mean.assign(v.begin(), v.begin() + c);
      e.running_var.assign(v.begin() + c, v.end());
    }
  }
  std::set<std::string> used;

 private:
  const Record& find(const std::string& name) {
    auto it = records_.find(name);
    require(it != records_.end(), ErrorCode::kFormat,
            "checkpoint: missing record '" + name + "'");
    used.insert(name);
    return it->second;
  }
  const std::map<std::string, Record>& records_;
};

}  // namespace

template <typename T>
std::vector<std::uint8_t> serialize_model(CANetModel<T>& model) {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kCheckpointVersion);
  write_config(w, model.config(), model.ablation());
  w.u32(static_cast<std::uint32_t>(model.dataset_ids().size()));
  for (const std::string& id : model.dataset_ids()) w.str(id);
  SaveVisitor<T> v;
  model.visit(v);
  w.u32(v.count);
  w.raw(v.body.buf.data(), v.body.buf.size());
  w.u32(crc_of(w.buf.data(), w.buf.size()));
  return std::move(w.buf);
}

template <typename T>
std::unique_ptr<CANetModel<T>> deserialize_model(
    std::span<const std::uint8_t> bytes) {
  Parsed parsed = parse(bytes);
  const CheckpointIndex& idx = parsed.index;
  require(idx.dtype == dtype_tag<T>() || idx.record_names.empty(),
          ErrorCode::kFormat, "checkpoint scalar type does not match");
  std::unique_ptr<CANetModel<T>> model;
  try {
    model = std::make_unique<CANetModel<T>>(idx.config);
  } catch (const Error& e) {
    fail(ErrorCode::kFormat, std::string("checkpoint config: ") + e.what());
  }
  const auto& ids = idx.dataset_ids;
  if (!ids.empty()) model->add_dataset(ids.front());
  if (idx.ablation != Ablation::kNone) {
    require(!ids.empty() || idx.ablation == Ablation::kNoICM,
            ErrorCode::kFormat, "checkpoint: ablation without datasets");
    model->apply_ablation(idx.ablation);
  }
  for (std::size_t i = 1; i < ids.size(); ++i) model->add_dataset(ids[i]);

  LoadVisitor<T> v(parsed.records);
  model->visit(v);
  for (const auto& [name, rec] : parsed.records) {
    require(v.used.count(name) > 0, ErrorCode::kFormat,
            "checkpoint: unexpected record '" + name + "'");
  }
  return model;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open '" + path + "'");
  std::vector<std::uint8_t> out((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
  require(!in.bad(), ErrorCode::kIo, "read failed for '" + path + "'");
  return out;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  out.flush();
  require(out.good(), ErrorCode::kIo, "write failed for '" + path + "'");
}

template <typename T>
void save_checkpoint(CANetModel<T>& model, const std::string& path) {
  write_file(path, serialize_model(model));
}

template <typename T>
std::unique_ptr<CANetModel<T>> load_checkpoint(const std::string& path) {
  return deserialize_model<T>(read_file(path));
}

CheckpointIndex read_checkpoint_index(std::span<const std::uint8_t> bytes) {
  return parse(bytes).index;
}

CheckpointIndex read_checkpoint_index(const std::string& path) {
  return read_checkpoint_index(read_file(path));
}

#define CANET_INSTANTIATE(T)                                                  \
  template std::vector<std::uint8_t> serialize_model<T>(CANetModel<T>&);      \
  template std::unique_ptr<CANetModel<T>> deserialize_model<T>(               \
      std::span<const std::uint8_t>);                                         \
  template void save_checkpoint<T>(CANetModel<T>&, const std::string&);       \
  template std::unique_ptr<CANetModel<T>> load_checkpoint<T>(                 \
      const std::string&);

CANET_INSTANTIATE(float)
CANET_INSTANTIATE(double)

}  // namespace canet
