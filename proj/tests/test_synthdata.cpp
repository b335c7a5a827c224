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


#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "canet/synthdata.hpp"
#include "doctest.h"
#include "oracles.hpp"

namespace fs = std::filesystem;
using canet::DatasetSpec;
using canet::SamplePair;
using canet::Split;

namespace {

DatasetSpec small_spec(const std::string& name = "d", std::uint64_t seed = 3) {
  DatasetSpec s;
  s.name = name;
  s.seed = seed;
  s.n_train = 6;
  s.n_val = 2;
  s.n_test = 3;
  s.height = 32;
  s.width = 32;
  return s;
}

fs::path scratch(const std::string& leaf) {
  fs::path p = fs::temp_directory_path() / ("canet_synth_" + leaf);
  fs::remove_all(p);
  return p;
}

void write_bytes(const fs::path& p, const std::string& header,
                 const std::vector<std::uint8_t>& body) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << header;
  out.write(reinterpret_cast<const char*>(body.data()), body.size());
}

}  // namespace

TEST_CASE("pairs are a pure function of seed and index") {
  DatasetSpec s = small_spec();
  SamplePair a = canet::generate_pair(s, Split::kTrain, 4);
  SamplePair b = canet::generate_pair(s, Split::kTrain, 4);
  CHECK(a.x1 == b.x1);
  CHECK(a.x2 == b.x2);
  CHECK(a.label == b.label);
  CHECK(a.x1.size() == 3 * 32 * 32);
  CHECK(canet::generate_pair(s, Split::kTest, 4).x1 != a.x1);
  CHECK(canet::generate_pair(s, Split::kTrain, 5).x1 != a.x1);
  for (float v : a.x1) {
    CHECK(v >= 0.f);
    CHECK(v <= 1.f);
    CHECK(std::abs(v * 255.f - std::round(v * 255.f)) < 1e-3f);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& objs = canet::generate_pair(s, Split::kVal, i).objects;
    CHECK(objs.size() >= s.min_objects);
    CHECK(objs.size() <= s.max_objects);
  }
}

TEST_CASE("no-change limit") {
  DatasetSpec s = small_spec();
  s.change_rate = 0.0;
  s.style.noise_sigma = 0.0;
  s.style.frame_jitter = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    SamplePair p = canet::generate_pair(s, Split::kTrain, i);
    for (auto l : p.label) CHECK(l == 0);
    CHECK(p.x1 == p.x2);
  }
  // With jitter only, frames differ by one offset per frame, up to
  // quantization and clamping at the ends of the range.
  s.style.frame_jitter = 0.05;
  SamplePair p = canet::generate_pair(s, Split::kTrain, 0);
  double offset = 0;
  std::size_t interior = 0;
  for (std::size_t i = 0; i < p.x1.size(); ++i) {
    if (p.x1[i] <= 0.f || p.x1[i] >= 1.f || p.x2[i] <= 0.f || p.x2[i] >= 1.f) continue;
    const double d = p.x2[i] - p.x1[i];
    if (interior++ == 0) offset = d;
    CHECK(std::abs(d - offset) <= 2.0 / 255.0 + 1e-6);
  }
  CHECK(interior > p.x1.size() / 2);
}

TEST_CASE("labels cover exactly the changed objects of interest") {
  for (auto gran : {canet::Granularity::kFine, canet::Granularity::kCoarse}) {
    DatasetSpec s = small_spec("l", 11);
    s.interest = {canet::ShapeClass::kBox, canet::ShapeClass::kBar};
    s.granularity = gran;
    s.change_rate = 0.7;
    std::size_t noninterest_changes = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      SamplePair p = canet::generate_pair(s, Split::kTrain, i);
      std::vector<std::uint8_t> fine(p.label.size(), 0);
      std::vector<std::uint8_t> other(p.label.size(), 0);
      for (std::size_t y = 0; y < p.height; ++y)
        for (std::size_t x = 0; x < p.width; ++x)
          for (const auto& o : p.objects) {
            if (!o.changed() || !o.covers(double(y), double(x))) continue;
            (s.is_interest(o.cls) ? fine : other)[y * p.width + x] = 1;
          }
      for (const auto& o : p.objects)
        noninterest_changes += o.changed() && !s.is_interest(o.cls);
      const auto expect = gran == canet::Granularity::kFine
                              ? fine
                              : oracle::dilate(fine, p.height, p.width, s.coarse_radius);
      CHECK(p.label == expect);
      // Pixels of a changed non-interest object stay 0 unless a labeled
      // object also reaches them.
      for (std::size_t k = 0; k < p.label.size(); ++k)
        if (other[k] && !expect[k]) CHECK(p.label[k] == 0);
    }
    CHECK(noninterest_changes > 0);
  }
}

TEST_CASE("style never touches the label") {
  DatasetSpec a = small_spec("a", 5);
  DatasetSpec b = a;
  b.style.brightness = 0.2;
  b.style.gain = {0.8, 1.2, 0.9};
  b.style.noise_sigma = 0.08;
  for (std::size_t i = 0; i < 5; ++i) {
    SamplePair pa = canet::generate_pair(a, Split::kTest, i);
    SamplePair pb = canet::generate_pair(b, Split::kTest, i);
    CHECK(pa.label == pb.label);
    CHECK(pa.x1 != pb.x1);
  }
}

TEST_CASE("coarsen_label") {
  std::vector<std::uint8_t> dot(7 * 7, 0);
  dot[3 * 7 + 3] = 1;
  CHECK(canet::coarsen_label(dot, 7, 7, 0) == dot);
  auto plus = canet::coarsen_label(dot, 7, 7, 1);
  std::size_t on = 0;
  for (auto v : plus) on += v;
  CHECK(on == 5);
  for (auto [y, x] : std::vector<std::array<int, 2>>{{3, 3}, {2, 3}, {4, 3}, {3, 2}, {3, 4}})
    CHECK(plus[y * 7 + x] == 1);

  std::mt19937_64 rng(2);
  for (int r : {1, 2, 3}) {
    std::vector<std::uint8_t> m(20 * 17);
    for (auto& v : m) v = rng() % 13 == 0;
    auto c = canet::coarsen_label(m, 20, 17, r);
    CHECK(c == oracle::dilate(m, 20, 17, r));
    for (std::size_t i = 0; i < m.size(); ++i) CHECK(c[i] >= m[i]);
  }
}

TEST_CASE("netpbm round trip and errors") {
  fs::path dir = scratch("pnm");
  fs::create_directories(dir);
  canet::Image8 rgb{2, 3, 3, {}};
  for (std::size_t i = 0; i < 18; ++i) rgb.pixels.push_back(std::uint8_t(i * 14));
  canet::write_pnm((dir / "a.ppm").string(), rgb);
  canet::Image8 back = canet::read_pnm((dir / "a.ppm").string());
  CHECK(back.height == 2);
  CHECK(back.width == 3);
  CHECK(back.channels == 3);
  CHECK(back.pixels == rgb.pixels);

  // Hand-written header with comments and odd spacing.
  write_bytes(dir / "c.pgm", "P5\n# made by hand\n2 # width\n 2\n255\n", {0, 255, 7, 9});
  canet::Image8 g = canet::read_pnm((dir / "c.pgm").string());
  CHECK(g.channels == 1);
  CHECK(g.pixels == std::vector<std::uint8_t>{0, 255, 7, 9});

  write_bytes(dir / "bad1.pgm", "P2\n2 2\n255\n", {0, 1, 2, 3});
  write_bytes(dir / "bad2.pgm", "P5\n2 2\n65535\n", {0, 1, 2, 3});
  write_bytes(dir / "bad3.pgm", "P5\n2 2\n255\n", {0, 1});
  write_bytes(dir / "bad4.pgm", "P5\nx 2\n255\n", {0, 1, 2, 3});
  for (const char* f : {"bad1.pgm", "bad2.pgm", "bad3.pgm", "bad4.pgm"}) {
    try {
      canet::read_pnm((dir / f).string());
      FAIL("accepted " << f);
    } catch (const canet::Error& e) {
      CHECK(e.code() == canet::ErrorCode::kFormat);
    }
  }
  CHECK_THROWS_AS(canet::read_pnm((dir / "missing.pgm").string()), canet::Error);
  fs::remove_all(dir);
}

TEST_CASE("pair files round trip and dimension checks") {
  fs::path dir = scratch("pairs");
  DatasetSpec s = small_spec();
  SamplePair p = canet::generate_pair(s, Split::kTrain, 1);
  canet::save_pair(p, dir.string(), 7);
  CHECK(fs::exists(dir / "A" / "00007.ppm"));
  CHECK(fs::exists(dir / "B" / "00007.ppm"));
  CHECK(fs::exists(dir / "label" / "00007.pgm"));
  SamplePair q = canet::load_pair(dir.string(), 7);
  CHECK(q.x1 == p.x1);
  CHECK(q.x2 == p.x2);
  CHECK(q.label == p.label);

  canet::Image8 small{16, 16, 3, std::vector<std::uint8_t>(16 * 16 * 3, 9)};
  canet::write_pnm((dir / "B" / "00007.ppm").string(), small);
  try {
    canet::load_pair(dir.string(), 7);
    FAIL("mismatch accepted");
  } catch (const canet::Error& e) {
    CHECK(e.code() == canet::ErrorCode::kFormat);
    CHECK(std::string(e.what()).find("00007") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("external directory in the same layout") {
  // Written byte by byte, not through the library writer. Labels use any
  // nonzero value for change; A is colour and B greyscale.
  fs::path root = scratch("external");
  for (int i = 0; i < 2; ++i) {
    char idx[8];
    std::snprintf(idx, sizeof idx, "%05d", i);
    std::vector<std::uint8_t> a, b, l;
    for (int k = 0; k < 16; ++k) {
      a.insert(a.end(), {std::uint8_t(k), std::uint8_t(2 * k), std::uint8_t(255 - k)});
      b.push_back(std::uint8_t(10 * k));
      l.push_back(k % 5 == i ? 128 : 0);
    }
    write_bytes(root / "test" / "A" / (std::string(idx) + ".ppm"), "P6\n4 4\n255\n", a);
    write_bytes(root / "test" / "B" / (std::string(idx) + ".ppm"), "P5 4 4 255\n", b);
    write_bytes(root / "test" / "label" / (std::string(idx) + ".pgm"), "P5\n4 4\n255\n", l);
  }
  CHECK(canet::count_split(root.string(), Split::kTest) == 2);
  auto data = canet::load_split(root.string(), Split::kTest);
  REQUIRE(data.size() == 2);
  CHECK(data[1].x1[0 * 16 + 5] == doctest::Approx(5.0 / 255.0));   // red of pixel 5
  CHECK(data[1].x1[2 * 16 + 5] == doctest::Approx(250.0 / 255.0));  // blue
  for (int c = 0; c < 3; ++c) CHECK(data[1].x2[c * 16 + 3] == doctest::Approx(30.0 / 255.0));
  for (int k = 0; k < 16; ++k) CHECK(data[1].label[k] == (k % 5 == 1 ? 1 : 0));
  fs::remove_all(root);
}

TEST_CASE("write_dataset is reproducible") {
  fs::path r1 = scratch("ds1"), r2 = scratch("ds2");
  DatasetSpec s = small_spec("repro", 8);
  canet::write_dataset(s, r1.string());
  canet::write_dataset(s, r2.string());
  CHECK(canet::count_split(r1.string(), Split::kTrain) == 6);
  CHECK(canet::count_split(r1.string(), Split::kVal) == 2);
  CHECK(canet::count_split(r1.string(), Split::kTest) == 3);
  for (const auto& e : fs::recursive_directory_iterator(r1)) {
    if (!e.is_regular_file()) continue;
    fs::path other = r2 / fs::relative(e.path(), r1);
    std::ifstream a(e.path(), std::ios::binary), b(other, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
  }
  auto loaded = canet::load_split(r1.string(), Split::kVal);
  auto direct = canet::generate_split(s, Split::kVal);
  REQUIRE(loaded.size() == direct.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].x1 == direct[i].x1);
    CHECK(loaded[i].label == direct[i].label);
  }
  fs::remove_all(r1);
  fs::remove_all(r2);
}

TEST_CASE("spec text round trip and validation") {
  DatasetSpec s = small_spec("txt", 42);
  s.style.gain = {1.25, 0.9, 0.75};
  s.granularity = canet::Granularity::kCoarse;
  s.interest = {canet::ShapeClass::kBar};
  DatasetSpec back = canet::parse_dataset_spec(canet::parse_config_text(canet::to_text(s)));
  CHECK(canet::to_text(back) == canet::to_text(s));
  CHECK(back.style.gain == s.style.gain);

  auto reject = [](const std::string& text, const std::string& key) {
    try {
      canet::parse_dataset_spec(canet::parse_config_text(text));
    } catch (const canet::Error& e) {
      return e.code() == canet::ErrorCode::kConfig &&
             std::string(e.what()).find(key) != std::string::npos;
    }
    return false;
  };
  CHECK(reject("granularity = medium\n", "granularity"));
  CHECK(reject("colour = red\n", "colour"));
  CHECK(reject("brightness = 0.9\n", "brightness"));
  CHECK(reject("height = 0\n", "height"));
  DatasetSpec odd = small_spec();
  odd.height = 40;
  CHECK_NOTHROW(odd.validate(8));
  CHECK_THROWS_AS(odd.validate(16), canet::Error);
  CHECK(reject("min_objects = 5\nmax_objects = 2\n", "objects"));
}

TEST_CASE("dataset family") {
  auto f = canet::make_dataset_family(1234);
  CHECK(f.hist.interest == f.style.interest);
  CHECK(f.hist.granularity == f.style.granularity);
  CHECK(f.label.style.brightness == f.hist.style.brightness);
  CHECK(f.label.style.gain == f.hist.style.gain);
  CHECK(f.label.style.noise_sigma == f.hist.style.noise_sigma);
  CHECK(f.label.interest != f.hist.interest);
  CHECK(f.label.granularity != f.hist.granularity);
  CHECK(f.both.interest == f.label.interest);
  CHECK(f.both.style.gain == f.style.style.gain);

  // Normalized 64-bin intensity histograms over 100 pairs.
  auto histogram = [](const DatasetSpec& s) {
    std::vector<double> h(64, 0.0);
    double total = 0;
    for (std::size_t i = 0; i < 100; ++i) {
      SamplePair p = canet::generate_pair(s, Split::kTrain, i);
      for (const auto* frame : {&p.x1, &p.x2})
        for (float v : *frame) {
          h[std::min<std::size_t>(63, std::size_t(v * 64))] += 1;
          total += 1;
        }
    }
    for (double& v : h) v /= total;
    return h;
  };
  DatasetSpec hist = f.hist, style = f.style;
  for (auto* s : {&hist, &style}) s->height = s->width = 32;
  auto a = histogram(hist), b = histogram(style);
  double dist = 0;
  for (std::size_t i = 0; i < 64; ++i) dist += std::abs(a[i] - b[i]);
  dist /= 64;
  CHECK(dist > 0.01);
}
