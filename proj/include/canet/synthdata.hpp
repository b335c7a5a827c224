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

#ifndef CANET_SYNTHDATA_HPP_
#define CANET_SYNTHDATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "canet/config.hpp"

namespace canet {

enum class ShapeClass : std::uint8_t { kBox, kDisc, kBar };
enum class Granularity : std::uint8_t { kFine, kCoarse };
enum class Split : std::uint8_t { kTrain, kVal, kTest };

struct StyleSpec {
  double brightness = 0.0;                  // [-0.3, 0.3]
  std::array<double, 3> gain{1.0, 1.0, 1.0};  // each in [0.7, 1.3]
  double noise_sigma = 0.02;                // [0, 0.1]
  /// Spatial frequency (cycles per pixel) of the background texture.
  double texture_freq = 0.05;
  /// Half-width of the per-frame brightness jitter.
  double frame_jitter = 0.02;
};

struct DatasetSpec {
  std::string name = "dataset";
  std::uint64_t seed = 0;
  std::size_t n_train = 400;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  std::size_t height = 64;
  std::size_t width = 64;
  StyleSpec style;
  std::vector<ShapeClass> interest{ShapeClass::kBox, ShapeClass::kDisc};
  Granularity granularity = Granularity::kFine;
  int coarse_radius = 2;
  double change_rate = 0.5;
  std::size_t min_objects = 3;
  std::size_t max_objects = 8;

  std::size_t split_size(Split split) const;
  bool is_interest(ShapeClass c) const;
  /// Throws ErrorCode::kConfig naming the offending field.
  void validate(std::size_t divisor = 1) const;
};

/// One planted object. Geometry is in pixel units.
struct ObjectRecord {
  ShapeClass cls = ShapeClass::kBox;
  double cy = 0, cx = 0;
  double half_h = 0, half_w = 0;  // box/bar half extents; disc uses half_h
  bool in_t1 = false;
  bool in_t2 = false;
  bool interest = false;

  bool changed() const { return in_t1 != in_t2; }
  bool covers(double y, double x) const;
};

/// Images are CHW, 3 channels, values k/255 in [0, 1]. Label is 0/1.
struct SamplePair {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> x1;
  std::vector<float> x2;
  std::vector<std::uint8_t> label;
  std::vector<ObjectRecord> objects;
};

/// Deterministic in (spec, split, index).
SamplePair generate_pair(const DatasetSpec& spec, Split split,
                         std::size_t index);
std::vector<SamplePair> generate_split(const DatasetSpec& spec, Split split);

/// Dilation by a disc of the given radius (Euclidean, dy^2 + dx^2 <= r^2).
std::vector<std::uint8_t> coarsen_label(const std::vector<std::uint8_t>& fine,
                                        std::size_t height, std::size_t width,
                                        int radius);

struct DatasetFamily {
  DatasetSpec hist;   // historical
  DatasetSpec style;  // appearance shift only
  DatasetSpec label;  // interest classes and granularity shift only
  DatasetSpec both;   // both shifts
};
DatasetFamily make_dataset_family(std::uint64_t base_seed);

// Text form, `key = value` lines; parse rejects unknown keys.
std::string to_text(const DatasetSpec& spec);
DatasetSpec parse_dataset_spec(const std::vector<ConfigEntry>& entries);
/// Applies one key to `spec`; false if the key is not a spec field.
bool apply_spec_key(DatasetSpec& spec, const std::string& key,
                    const std::string& value);

const char* to_string(ShapeClass c);
const char* to_string(Granularity g);
const char* to_string(Split s);
ShapeClass parse_shape_class(const std::string& s);
Granularity parse_granularity(const std::string& s);
Split parse_split(const std::string& s);

// Netpbm, binary 8-bit only.
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;  // 3 for P6, 1 for P5
  std::vector<std::uint8_t> pixels;  // interleaved, row major
};
void write_pnm(const std::string& path, const Image8& img);
Image8 read_pnm(const std::string& path);

/// <dir>/{A,B,label}/<5-digit index>.{ppm,ppm,pgm}
void save_pair(const SamplePair& pair, const std::string& dir,
               std::size_t index);
SamplePair load_pair(const std::string& dir, std::size_t index);

/// Writes <root>/spec.txt and <root>/<split>/... for all three splits.
void write_dataset(const DatasetSpec& spec, const std::string& root);
/// Loads every index present under <root>/<split>/A, in order.
std::vector<SamplePair> load_split(const std::string& root, Split split);
std::size_t count_split(const std::string& root, Split split);

}  // namespace canet

#endif  // CANET_SYNTHDATA_HPP_
