#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gdformer/data.hpp"
#include "gdformer/errors.hpp"
#include "gdformer/rng.hpp"

using namespace gdformer;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("gdf_data_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("load_csv reads rows and round-trips values") {
  TempDir dir;
  write_file(dir.file("d.csv"), "a,b\n1.5,2\n-3,4.25\n0,1e-3\n");
  TimeSeriesDataset ds = load_csv(dir.file("d.csv"), true);
  CHECK(ds.length == 3);
  CHECK(ds.channels == 2);
  CHECK(ds.channel_names == std::vector<std::string>{"a", "b"});
  CHECK(ds.at(0, 0) == 1.5);
  CHECK(ds.at(2, 1) == 1e-3);
}

TEST_CASE("load_csv errors carry line numbers") {
  TempDir dir;
  write_file(dir.file("ragged.csv"), "1,2\n3\n");
  try {
    load_csv(dir.file("ragged.csv"), false);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  write_file(dir.file("bad.csv"), "1,2\n3,oops\n");
  try {
    load_csv(dir.file("bad.csv"), false);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("oops") != std::string::npos);
  }
}

TEST_CASE("label length mismatch names both lengths") {
  TempDir dir;
  write_file(dir.file("d.csv"), "1,2\n3,4\n5,6\n");
  write_file(dir.file("l.csv"), "0\n1\n");
  try {
    load_csv(dir.file("d.csv"), false, dir.file("l.csv"));
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2") != std::string::npos);
    CHECK(msg.find("3") != std::string::npos);
  }
}

TEST_CASE("csv write/read round trip is bit exact") {
  TempDir dir;
  Rng rng(99);
  TimeSeriesDataset ds;
  ds.length = 100;
  ds.channels = 5;
  for (std::size_t i = 0; i < 500; ++i) ds.values.push_back(rng.normal() * 1e3);
  save_csv(ds, dir.file("rt.csv"));
  TimeSeriesDataset back = load_csv(dir.file("rt.csv"), true);
  REQUIRE(back.length == ds.length);
  REQUIRE(back.channels == ds.channels);
  for (std::size_t i = 0; i < 500; ++i) CHECK(back.values[i] == ds.values[i]);
}

TEST_CASE("binary dataset container round trip") {
  TempDir dir;
  Rng rng(5);
  TimeSeriesDataset ds;
  ds.length = 37;
  ds.channels = 3;
  for (std::size_t i = 0; i < 37 * 3; ++i) ds.values.push_back(rng.normal());
  ds.labels.assign(37, 0);
  ds.labels[10] = 1;
  save_dataset_binary(ds, dir.file("d.bin"));
  TimeSeriesDataset back = load_dataset_binary(dir.file("d.bin"));
  CHECK(back.values == ds.values);
  CHECK(back.labels == ds.labels);
}

TEST_CASE("make_windows drops the remainder") {
  TimeSeriesDataset ds;
  ds.length = 250;
  ds.channels = 2;
  ds.values.assign(500, 0.0);
  for (std::size_t i = 0; i < 500; ++i) ds.values[i] = static_cast<double>(i);

  WindowSet ws = make_windows(ds, 100);
  CHECK(ws.count() == 2);
  CHECK(ws.offsets == std::vector<std::size_t>{0, 100});

  WindowSet one = make_windows([&] {
    TimeSeriesDataset d2 = ds;
    d2.length = 100;
    d2.values.resize(200);
    return d2;
  }(), 100);
  CHECK(one.count() == 1);

  TimeSeriesDataset d3 = ds;
  d3.length = 99;
  d3.values.resize(198);
  CHECK_THROWS_AS(make_windows(d3, 100), DataError);
}

TEST_CASE("window reassembly reproduces the source prefix") {
  Rng rng(4);
  TimeSeriesDataset ds;
  ds.length = 257;
  ds.channels = 3;
  for (std::size_t i = 0; i < ds.length * 3; ++i) ds.values.push_back(rng.normal());
  WindowSet ws = make_windows(ds, 50);
  REQUIRE(ws.count() == 5);
  for (std::size_t w = 0; w < ws.count(); ++w) {
    Tensor win = ws.window_at(w);
    for (std::size_t t = 0; t < 50; ++t)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(win.at(t, c) == ds.at(ws.offsets[w] + t, c));
  }
}

TEST_CASE("cover windows add one tail window aligned to the end") {
  TimeSeriesDataset ds;
  ds.length = 150;
  ds.channels = 1;
  ds.values.assign(150, 1.0);
  WindowSet ws = make_cover_windows(ds, 100);
  CHECK(ws.offsets == std::vector<std::size_t>{0, 50});

  ds.length = 200;
  ds.values.assign(200, 1.0);
  CHECK(make_cover_windows(ds, 100).offsets == std::vector<std::size_t>{0, 100});
}

TEST_CASE("mask: alpha 0 leaves everything unmasked") {
  Tensor window = Tensor::full({4, 3}, 7.0);
  MaskedWindow mw = apply_mask(window, {0.0, 123});
  for (auto m : mw.mask) CHECK(m == 0);
  for (std::size_t i = 0; i < window.numel(); ++i) CHECK(mw.window.at(i) == 7.0);
}

TEST_CASE("mask statistics at alpha 0.05 over 200 seeds") {
  std::size_t total = 0;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto mask = draw_mask(100, 25, {0.05, seed});
    std::size_t count = 0;
    for (auto m : mask) count += m;
    total += count;
    // constraints on every draw
    for (std::size_t r = 0; r < 100; ++r) {
      bool all = true;
      for (std::size_t c = 0; c < 25 && all; ++c) all = mask[r * 25 + c];
      CHECK_FALSE(all);
    }
    for (std::size_t c = 0; c < 25; ++c) {
      bool all = true;
      for (std::size_t r = 0; r < 100 && all; ++r) all = mask[r * 25 + c];
      CHECK_FALSE(all);
    }
  }
  const double mean = static_cast<double>(total) / 200.0;
  CHECK(mean > 125.0 * 0.9);
  CHECK(mean < 125.0 * 1.1);
}

TEST_CASE("mask constraints hold at alpha 0.5 on a 2x2 window") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto mask = draw_mask(2, 2, {0.5, seed});
    CHECK_FALSE(bool(mask[0] && mask[1]));  // row 0
    CHECK_FALSE(bool(mask[2] && mask[3]));  // row 1
    CHECK_FALSE(bool(mask[0] && mask[2]));  // col 0
    CHECK_FALSE(bool(mask[1] && mask[3]));  // col 1
  }
}

TEST_CASE("mask rejection gives up with a config error") {
  // at this ratio an 8x8 draw satisfying both constraints is essentially
  // impossible, so all 1000 attempts get rejected
  CHECK_THROWS_AS(draw_mask(8, 8, {0.9999, 0}), ConfigError);
}

TEST_CASE("synthetic: rate zero means no labels") {
  SynthSpec spec;
  spec.length = 2000;
  spec.anomaly_rate = 0.0;
  spec.seed = 8;
  TimeSeriesDataset ds = generate_synthetic(spec);
  for (int l : ds.labels) CHECK(l == 0);
  ds.validate();
}

TEST_CASE("synthetic: label count tracks the rate") {
  SynthSpec spec;
  spec.length = 10000;
  spec.anomaly_rate = 0.05;
  spec.seed = 9;
  TimeSeriesDataset ds = generate_synthetic(spec);
  std::size_t count = 0;
  for (int l : ds.labels) count += l;
  CHECK(count > 450);
  CHECK(count < 550);
}

TEST_CASE("synthetic: same seed, bit-identical dataset") {
  SynthSpec spec;
  spec.length = 3000;
  spec.anomaly_rate = 0.03;
  spec.seed = 31;
  TimeSeriesDataset a = generate_synthetic(spec);
  TimeSeriesDataset b = generate_synthetic(spec);
  CHECK(a.values == b.values);
  CHECK(a.labels == b.labels);
}

TEST_CASE("mask constraints across a larger seed sweep") {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto mask = draw_mask(10, 4, {0.3, seed});
    for (std::size_t r = 0; r < 10; ++r) {
      bool all = true;
      for (std::size_t c = 0; c < 4 && all; ++c) all = mask[r * 4 + c];
      CHECK_FALSE(all);
    }
    for (std::size_t c = 0; c < 4; ++c) {
      bool all = true;
      for (std::size_t r = 0; r < 10 && all; ++r) all = mask[r * 4 + c];
      CHECK_FALSE(all);
    }
  }
}

TEST_CASE("head_fraction takes the leading rows") {
  TimeSeriesDataset ds;
  ds.length = 10;
  ds.channels = 1;
  for (std::size_t i = 0; i < 10; ++i) ds.values.push_back(static_cast<double>(i));
  TimeSeriesDataset head = head_fraction(ds, 0.8);
  CHECK(head.length == 8);
  CHECK(head.values.back() == 7.0);
  CHECK_THROWS_AS(head_fraction(ds, 0.0), ConfigError);
}
