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

#include "canet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "canet/config.hpp"
#include "canet/error.hpp"

namespace canet {

namespace fs = std::filesystem;

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  require(!ec, ErrorCode::kIo,
          "cannot create '" + p.string() + "': " + ec.message());
}

std::string index_name(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%05zu", index);
  return buf;
}

ObjectRecord random_object(std::mt19937_64& rng, const DatasetSpec& spec) {
  ObjectRecord o;
  o.cls = static_cast<ShapeClass>(pick(rng, 0, 2));
  switch (o.cls) {
    case ShapeClass::kBox:
      o.half_h = uniform(rng, 3.0, 7.0);
      o.half_w = uniform(rng, 3.0, 7.0);
      break;
    case ShapeClass::kDisc:
      o.half_h = o.half_w = uniform(rng, 3.0, 7.0);
      break;
    case ShapeClass::kBar: {
      const double len = uniform(rng, 9.0, 14.0);
      const double thick = uniform(rng, 1.0, 2.0);
      const bool vertical = rng() & 1;
      o.half_h = vertical ? len : thick;
      o.half_w = vertical ? thick : len;
      break;
    }
  }
  const double my = std::min(o.half_h + 1.0, spec.height / 2.0);
  const double mx = std::min(o.half_w + 1.0, spec.width / 2.0);
  o.cy = uniform(rng, my, std::max(my, spec.height - my));
  o.cx = uniform(rng, mx, std::max(mx, spec.width - mx));
  o.interest = spec.is_interest(o.cls);
  return o;
}

bool overlaps(const ObjectRecord& a, const ObjectRecord& b) {
  return std::abs(a.cy - b.cy) < a.half_h + b.half_h + 2.0 &&
         std::abs(a.cx - b.cx) < a.half_w + b.half_w + 2.0;
}

}  // namespace

bool ObjectRecord::covers(double y, double x) const {
  const double dy = y - cy;
  const double dx = x - cx;
  if (cls == ShapeClass::kDisc) return dy * dy + dx * dx <= half_h * half_h;
  return std::abs(dy) <= half_h && std::abs(dx) <= half_w;
}

std::size_t DatasetSpec::split_size(Split split) const {
  switch (split) {
    case Split::kTrain:
      return n_train;
    case Split::kVal:
      return n_val;
    case Split::kTest:
      return n_test;
  }
  return 0;
}

bool DatasetSpec::is_interest(ShapeClass c) const {
  return std::find(interest.begin(), interest.end(), c) != interest.end();
}

void DatasetSpec::validate(std::size_t divisor) const {
  auto check = [](bool ok, const std::string& key, const std::string& msg) {
    require(ok, ErrorCode::kConfig, "key '" + key + "': " + msg);
  };
  check(height > 0 && height % divisor == 0, "height",
        "must be a positive multiple of " + std::to_string(divisor));
  check(width > 0 && width % divisor == 0, "width",
        "must be a positive multiple of " + std::to_string(divisor));
  check(!interest.empty(), "interest", "needs at least one class");
  check(style.brightness >= -0.3 && style.brightness <= 0.3, "brightness",
        "must lie in [-0.3, 0.3]");
  for (double g : style.gain) {
    check(g >= 0.7 && g <= 1.3, "gain", "each gain must lie in [0.7, 1.3]");
  }
  check(style.noise_sigma >= 0 && style.noise_sigma <= 0.1, "noise_sigma",
        "must lie in [0, 0.1]");
  check(style.texture_freq >= 0, "texture_freq", "must be >= 0");
  check(style.frame_jitter >= 0 && style.frame_jitter <= 0.1, "frame_jitter",
        "must lie in [0, 0.1]");
  check(change_rate >= 0 && change_rate <= 1, "change_rate",
        "must lie in [0, 1]");
  check(coarse_radius >= 0, "coarse_radius", "must be >= 0");
  check(min_objects <= max_objects, "min_objects",
        "must not exceed max_objects");
}

SamplePair generate_pair(const DatasetSpec& spec, Split split,
                         std::size_t index) {
  std::mt19937_64 rng(splitmix64(
      spec.seed ^ splitmix64((static_cast<std::uint64_t>(split) + 1) << 40 ^
                             static_cast<std::uint64_t>(index))));
  const std::size_t h = spec.height;
  const std::size_t w = spec.width;
  const std::size_t plane = h * w;

  // Background shared by both frames.
  std::array<double, 3> base;
  for (double& b : base) b = uniform(rng, 0.3, 0.55);
  const double theta = uniform(rng, 0.0, std::numbers::pi);
  const double phase1 = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double phase2 = uniform(rng, 0.0, 2 * std::numbers::pi);
  const double f = spec.style.texture_freq;
  std::vector<double> bg(plane);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double t = y * std::cos(theta) + x * std::sin(theta);
      const double u = y * std::sin(theta) - x * std::cos(theta);
      bg[y * w + x] =
          0.08 * std::sin(2 * std::numbers::pi * f * t + phase1) +
          0.05 * std::sin(2 * std::numbers::pi * f * 1.7 * u + phase2);
    }
  }

  SamplePair pair;
  pair.height = h;
  pair.width = w;
  const std::size_t n_obj = pick(rng, spec.min_objects, spec.max_objects);
  std::vector<std::array<double, 3>> colors;
  for (std::size_t i = 0; i < n_obj; ++i) {
    ObjectRecord o;
    bool placed = false;
    for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
      o = random_object(rng, spec);
      placed = std::none_of(pair.objects.begin(), pair.objects.end(),
                            [&](const ObjectRecord& q) { return overlaps(o, q); });
    }
    if (!placed) continue;
    const bool bright = rng() & 1;
    std::array<double, 3> c;
    for (double& v : c) v = bright ? uniform(rng, 0.75, 0.95) : uniform(rng, 0.03, 0.18);
    if (uniform(rng, 0.0, 1.0) < spec.change_rate) {
      const bool appears = rng() & 1;
      o.in_t1 = !appears;
      o.in_t2 = appears;
    } else {
      o.in_t1 = o.in_t2 = true;
    }
    pair.objects.push_back(o);
    colors.push_back(c);
  }

  auto render = [&](bool second, std::vector<float>& out) {
    const double jitter =
        uniform(rng, -spec.style.frame_jitter, spec.style.frame_jitter);
    std::normal_distribution<double> noise(0.0, 1.0);
    out.assign(3 * plane, 0.0f);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        std::array<double, 3> v;
        for (int c = 0; c < 3; ++c) v[c] = base[c] + bg[y * w + x];
        for (std::size_t k = 0; k < pair.objects.size(); ++k) {
          const ObjectRecord& o = pair.objects[k];
          if ((second ? o.in_t2 : o.in_t1) && o.covers(y, x)) v = colors[k];
        }
        for (int c = 0; c < 3; ++c) {
          double s = v[c] * spec.style.gain[c] + spec.style.brightness + jitter;
          if (spec.style.noise_sigma > 0) s += spec.style.noise_sigma * noise(rng);
          s = std::clamp(s, 0.0, 1.0);
          out[c * plane + y * w + x] =
              static_cast<float>(std::lround(s * 255.0) / 255.0);
        }
      }
    }
  };
  render(false, pair.x1);
  render(true, pair.x2);

  pair.label.assign(plane, 0);
  for (const ObjectRecord& o : pair.objects) {
    if (!o.changed() || !o.interest) continue;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (o.covers(y, x)) pair.label[y * w + x] = 1;
      }
    }
  }
  if (spec.granularity == Granularity::kCoarse) {
    pair.label = coarsen_label(pair.label, h, w, spec.coarse_radius);
  }
  return pair;
}

std::vector<SamplePair> generate_split(const DatasetSpec& spec, Split split) {
  std::vector<SamplePair> out;
  const std::size_t n = spec.split_size(split);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_pair(spec, split, i));
  return out;
}

std::vector<std::uint8_t> coarsen_label(const std::vector<std::uint8_t>& fine,
                                        std::size_t height, std::size_t width,
                                        int radius) {
  require(radius >= 0, ErrorCode::kInvalidArgument, "radius must be >= 0");
  require(fine.size() == height * width, ErrorCode::kShapeMismatch,
          "label size does not match dimensions");
  std::vector<std::uint8_t> out(fine.size(), 0);
  const long r = radius;
  for (long y = 0; y < static_cast<long>(height); ++y) {
    for (long x = 0; x < static_cast<long>(width); ++x) {
      if (!fine[y * width + x]) continue;
      for (long dy = -r; dy <= r; ++dy) {
        for (long dx = -r; dx <= r; ++dx) {
          if (dy * dy + dx * dx > r * r) continue;
          const long yy = y + dy, xx = x + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<long>(height) ||
              xx >= static_cast<long>(width)) {
            continue;
          }
          out[yy * width + xx] = 1;
        }
      }
    }
  }
  return out;
}

DatasetFamily make_dataset_family(std::uint64_t base_seed) {
  DatasetFamily f;
  f.hist.name = "hist";
  f.hist.seed = base_seed;
  f.hist.interest = {ShapeClass::kBox, ShapeClass::kDisc};
  f.hist.granularity = Granularity::kFine;

  StyleSpec shifted;
  shifted.brightness = -0.12;
  shifted.gain = {1.25, 0.9, 0.75};
  shifted.noise_sigma = 0.06;
  shifted.texture_freq = 0.12;

  f.style = f.hist;
  f.style.name = "style";
  f.style.seed = base_seed + 1;
  f.style.style = shifted;

  f.label = f.hist;
  f.label.name = "label";
  f.label.seed = base_seed + 2;
  f.label.interest = {ShapeClass::kBox, ShapeClass::kBar};
  f.label.granularity = Granularity::kCoarse;

  f.both = f.label;
  f.both.name = "both";
  f.both.seed = base_seed + 3;
  f.both.style = shifted;
  return f;
}

// Text form

std::string to_text(const DatasetSpec& spec) {
  std::ostringstream out;
  out << "name = " << spec.name << "\n"
      << "seed = " << spec.seed << "\n"
      << "n_train = " << spec.n_train << "\n"
      << "n_val = " << spec.n_val << "\n"
      << "n_test = " << spec.n_test << "\n"
      << "height = " << spec.height << "\n"
      << "width = " << spec.width << "\n"
      << "brightness = " << format_real(spec.style.brightness) << "\n"
      << "gain = " << format_real(spec.style.gain[0]) << ", " << format_real(spec.style.gain[1]) << ", "
      << format_real(spec.style.gain[2]) << "\n"
      << "noise_sigma = " << format_real(spec.style.noise_sigma) << "\n"
      << "texture_freq = " << format_real(spec.style.texture_freq) << "\n"
      << "frame_jitter = " << format_real(spec.style.frame_jitter) << "\n"
      << "interest = ";
  for (std::size_t i = 0; i < spec.interest.size(); ++i) {
    out << (i ? ", " : "") << to_string(spec.interest[i]);
  }
  out << "\n"
      << "granularity = " << to_string(spec.granularity) << "\n"
      << "coarse_radius = " << spec.coarse_radius << "\n"
      << "change_rate = " << format_real(spec.change_rate) << "\n"
      << "min_objects = " << spec.min_objects << "\n"
      << "max_objects = " << spec.max_objects << "\n";
  return out.str();
}

bool apply_spec_key(DatasetSpec& spec, const std::string& key,
                    const std::string& value) {
  auto size = [&] {
    const std::int64_t v = parse_int(key, value);
    require(v >= 0, ErrorCode::kConfig, "key '" + key + "': must be >= 0");
    return static_cast<std::size_t>(v);
  };
  if (key == "name") {
    spec.name = value;
  } else if (key == "seed") {
    spec.seed = parse_u64(key, value);
  } else if (key == "n_train") {
    spec.n_train = size();
  } else if (key == "n_val") {
    spec.n_val = size();
  } else if (key == "n_test") {
    spec.n_test = size();
  } else if (key == "height") {
    spec.height = size();
  } else if (key == "width") {
    spec.width = size();
  } else if (key == "brightness") {
    spec.style.brightness = parse_real(key, value);
  } else if (key == "gain") {
    const auto items = parse_list(key, value);
    require(items.size() == 3, ErrorCode::kConfig,
            "key 'gain': expected three values");
    for (int c = 0; c < 3; ++c) spec.style.gain[c] = parse_real(key, items[c]);
  } else if (key == "noise_sigma") {
    spec.style.noise_sigma = parse_real(key, value);
  } else if (key == "texture_freq") {
    spec.style.texture_freq = parse_real(key, value);
  } else if (key == "frame_jitter") {
    spec.style.frame_jitter = parse_real(key, value);
  } else if (key == "interest") {
    spec.interest.clear();
    for (const std::string& s : parse_list(key, value)) {
      try {
        spec.interest.push_back(parse_shape_class(s));
      } catch (const Error&) {
        fail(ErrorCode::kConfig, "key 'interest': unknown class '" + s + "'");
      }
    }
  } else if (key == "granularity") {
    try {
      spec.granularity = parse_granularity(value);
    } catch (const Error&) {
      fail(ErrorCode::kConfig, "key 'granularity': expected fine|coarse, got '" +
                                   value + "'");
    }
  } else if (key == "coarse_radius") {
    spec.coarse_radius = static_cast<int>(parse_int(key, value));
  } else if (key == "change_rate") {
    spec.change_rate = parse_real(key, value);
  } else if (key == "min_objects") {
    spec.min_objects = size();
  } else if (key == "max_objects") {
    spec.max_objects = size();
  } else {
    return false;
  }
  return true;
}

DatasetSpec parse_dataset_spec(const std::vector<ConfigEntry>& entries) {
  DatasetSpec spec;
  for (const ConfigEntry& e : entries) {
    require(apply_spec_key(spec, e.key, e.value), ErrorCode::kConfig,
            "line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
  }
  spec.validate();
  return spec;
}

const char* to_string(ShapeClass c) {
  switch (c) {
    case ShapeClass::kBox:
      return "box";
    case ShapeClass::kDisc:
      return "disc";
    case ShapeClass::kBar:
      return "bar";
  }
  return "?";
}

const char* to_string(Granularity g) {
  return g == Granularity::kFine ? "fine" : "coarse";
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

ShapeClass parse_shape_class(const std::string& s) {
  if (s == "box") return ShapeClass::kBox;
  if (s == "disc") return ShapeClass::kDisc;
  if (s == "bar") return ShapeClass::kBar;
  fail(ErrorCode::kConfig, "unknown shape class '" + s + "'");
}

Granularity parse_granularity(const std::string& s) {
  if (s == "fine") return Granularity::kFine;
  if (s == "coarse") return Granularity::kCoarse;
  fail(ErrorCode::kConfig, "unknown granularity '" + s + "'");
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  fail(ErrorCode::kConfig, "unknown split '" + s + "'");
}

// Netpbm

void write_pnm(const std::string& path, const Image8& img) {
  require(img.channels == 1 || img.channels == 3, ErrorCode::kInvalidArgument,
          "netpbm images have 1 or 3 channels");
  require(img.pixels.size() == img.height * img.width * img.channels,
          ErrorCode::kShapeMismatch, "pixel buffer does not match dimensions");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write '" + path + "'");
  out << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  require(out.good(), ErrorCode::kIo, "write failed for '" + path + "'");
}

Image8 read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open '" + path + "'");
  auto bad = [&](const std::string& what) {
    fail(ErrorCode::kFormat, "'" + path + "': " + what);
  };
  auto token = [&]() {
    std::string t;
    int ch;
    while ((ch = in.get()) != EOF) {
      if (ch == '#') {
        while ((ch = in.get()) != EOF && ch != '\n') {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(ch));
    }
    if (t.empty()) bad("truncated header");
    return t;
  };
  auto number = [&]() {
    const std::string t = token();
    if (t.find_first_not_of("0123456789") != std::string::npos || t.size() > 9) {
      bad("malformed header value '" + t + "'");
    }
    return static_cast<std::size_t>(std::stoul(t));
  };
  Image8 img;
  const std::string magic = token();
  if (magic == "P6") {
    img.channels = 3;
  } else if (magic == "P5") {
    img.channels = 1;
  } else {
    bad("unsupported magic '" + magic + "'");
  }
  img.width = number();
  img.height = number();
  const std::size_t maxval = number();
  if (img.width == 0 || img.height == 0) bad("zero dimension");
  if (maxval == 0 || maxval > 255) bad("only 8-bit images are supported");
  img.pixels.resize(img.width * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    bad("truncated pixel data");
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>(std::lround(p * 255.0 / maxval));
    }
  }
  return img;
}

void save_pair(const SamplePair& pair, const std::string& dir,
               std::size_t index) {
  const std::size_t plane = pair.height * pair.width;
  require(pair.x1.size() == 3 * plane && pair.x2.size() == 3 * plane &&
              pair.label.size() == plane,
          ErrorCode::kShapeMismatch, "sample buffers do not match dimensions");
  for (const char* sub : {"A", "B", "label"}) make_dirs(fs::path(dir) / sub);
  auto rgb = [&](const std::vector<float>& chw) {
    Image8 img{pair.height, pair.width, 3, std::vector<std::uint8_t>(3 * plane)};
    for (std::size_t i = 0; i < plane; ++i) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(chw[c * plane + i], 0.0f, 1.0f);
        img.pixels[3 * i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
    return img;
  };
  const std::string name = index_name(index);
  write_pnm((fs::path(dir) / "A" / (name + ".ppm")).string(), rgb(pair.x1));
  write_pnm((fs::path(dir) / "B" / (name + ".ppm")).string(), rgb(pair.x2));
  Image8 lab{pair.height, pair.width, 1, std::vector<std::uint8_t>(plane)};
  for (std::size_t i = 0; i < plane; ++i) lab.pixels[i] = pair.label[i] ? 255 : 0;
  write_pnm((fs::path(dir) / "label" / (name + ".pgm")).string(), lab);
}

SamplePair load_pair(const std::string& dir, std::size_t index) {
  const std::string name = index_name(index);
  Image8 a = read_pnm((fs::path(dir) / "A" / (name + ".ppm")).string());
  Image8 b = read_pnm((fs::path(dir) / "B" / (name + ".ppm")).string());
  Image8 l = read_pnm((fs::path(dir) / "label" / (name + ".pgm")).string());
  require(a.height == b.height && a.width == b.width && a.height == l.height &&
              a.width == l.width,
          ErrorCode::kFormat,
          "pair " + name + ": A is " + std::to_string(a.width) + "x" +
              std::to_string(a.height) + ", B is " + std::to_string(b.width) +
              "x" + std::to_string(b.height) + ", label is " +
              std::to_string(l.width) + "x" + std::to_string(l.height));
  require(l.channels == 1, ErrorCode::kFormat,
          "pair " + name + ": label must be a PGM");
  SamplePair pair;
  pair.height = a.height;
  pair.width = a.width;
  const std::size_t plane = a.height * a.width;
  auto chw = [&](const Image8& img) {
    std::vector<float> out(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
      for (std::size_t c = 0; c < 3; ++c) {
        const std::uint8_t v = img.pixels[img.channels * i +
                                          (img.channels == 3 ? c : 0)];
        out[c * plane + i] = static_cast<float>(v / 255.0);
      }
    }
    return out;
  };
  pair.x1 = chw(a);
  pair.x2 = chw(b);
  pair.label.resize(plane);
  for (std::size_t i = 0; i < plane; ++i) pair.label[i] = l.pixels[i] != 0;
  return pair;
}

void write_dataset(const DatasetSpec& spec, const std::string& root) {
  spec.validate();
  make_dirs(root);
  {
    std::ofstream manifest(fs::path(root) / "spec.txt");
    require(manifest.good(), ErrorCode::kIo, "cannot write manifest in " + root);
    manifest << to_text(spec);
  }
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const std::string dir = (fs::path(root) / to_string(split)).string();
    for (const char* sub : {"A", "B", "label"}) make_dirs(fs::path(dir) / sub);
    for (std::size_t i = 0; i < spec.split_size(split); ++i) {
      save_pair(generate_pair(spec, split, i), dir, i);
    }
  }
}

std::size_t count_split(const std::string& root, Split split) {
  const fs::path a = fs::path(root) / to_string(split) / "A";
  std::size_t n = 0;
  while (fs::exists(a / (index_name(n) + ".ppm"))) ++n;
  return n;
}

std::vector<SamplePair> load_split(const std::string& root, Split split) {
  const std::string dir = (fs::path(root) / to_string(split)).string();
  const std::size_t n = count_split(root, split);
  std::vector<SamplePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(load_pair(dir, i));
  return out;
}

}  // namespace canet
