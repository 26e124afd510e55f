#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "stp/data/external.hpp"
#include "stp/data/synth.hpp"
#include "stp/error.hpp"

using namespace stp;
namespace fs = std::filesystem;

namespace {

data::StreamSpec tiny_spec() {
  data::StreamSpec s;
  s.train_per_class = 12;
  s.val_per_class = 3;
  s.test_per_class = 5;
  return s;
}

fs::path temp_dir(const std::string& name) {
  auto d = fs::temp_directory_path() / ("stp_data_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("grating: closed form without noise or jitter") {
  data::StreamSpec s;
  s.num_classes = 2;
  s.noise_sigma = 0;
  s.phase_jitter = false;
  const auto a = data::grating(s, 0, 0.0, 1);
  const auto b = data::grating(s, 1, 0.0, 1);
  // Class 1 is class 0 rotated by 90 degrees: b(y, x) = a(x, y).
  for (int y = 0; y < s.side; ++y)
    for (int x = 0; x < s.side; ++x) {
      const double w = 2 * std::numbers::pi * s.frequency / s.side;
      CHECK(a.at(y, x) == doctest::Approx(0.5 + 0.4 * std::sin(w * x)).epsilon(1e-6));
      CHECK(b.at(y, x) == doctest::Approx(a.at(x, y)).epsilon(1e-5));
    }
}

TEST_CASE("synth pool: range, counts, determinism") {
  const auto spec = tiny_spec();
  const auto p1 = data::synth_class_pool(spec);
  const auto p2 = data::synth_class_pool(spec);
  CHECK(p1.development.samples == p2.development.samples);
  CHECK(p1.test.samples == p2.test.samples);
  CHECK(p1.development.samples.size() == 8u * 15);
  for (const auto& s : p1.development.samples)
    for (float v : s.image.pixels) CHECK((v >= 0.0f && v <= 1.0f));
  auto bad = spec;
  bad.num_classes = 37;
  CHECK_THROWS_AS(data::synth_class_pool(bad), InputError);
  bad = spec;
  bad.side = 7;
  CHECK_THROWS_AS(data::synth_class_pool(bad), InputError);
}

TEST_CASE("build_stream: partition, first-large split, identity order") {
  auto spec = tiny_spec();
  spec.task_class_counts = {2, 2, 2, 2};
  const auto pool = data::synth_class_pool(spec);
  auto st = data::build_stream(pool, spec);
  REQUIRE(st.size() == 4);
  std::set<int> all;
  for (const auto& t : st)
    for (int c : t.classes) CHECK(all.insert(c).second);
  CHECK(all.size() == 8);
  for (const auto& t : st)
    for (const auto& s : t.train)
      CHECK(std::find(t.classes.begin(), t.classes.end(), s.label) != t.classes.end());

  spec.permute_classes = false;
  st = data::build_stream(pool, spec);
  CHECK(st[0].classes == std::vector<int>{0, 1});
  CHECK(st[1].classes == std::vector<int>{2, 3});

  spec.task_class_counts = {4, 2, 2};
  st = data::build_stream(pool, spec);
  CHECK(st[0].classes.size() == 4);
  spec.task_class_counts = {4, 4, 2};
  CHECK_THROWS_AS(data::build_stream(pool, spec), InputError);
}

TEST_CASE("train_val_split: stratified counts and partition law") {
  data::TaskDataset t;
  t.classes = {3, 5};
  for (int c : t.classes)
    for (int i = 0; i < 10; ++i) {
      data::Sample s;
      s.image = data::RasterImage(2, 2, 1, static_cast<float>(i) / 10);
      s.label = c;
      t.train.push_back(s);
    }
  const auto a = data::train_val_split(t, 0.1, 7);
  const auto b = data::train_val_split(t, 0.1, 7);
  CHECK(a.train == b.train);
  CHECK(a.val.size() == 2);
  CHECK(a.train.size() == 18);
  for (int c : t.classes)
    CHECK(std::count_if(a.val.begin(), a.val.end(), [&](const auto& s) { return s.label == c; }) == 1);
  for (const auto& v : a.val) CHECK(std::find(a.train.begin(), a.train.end(), v) == a.train.end());
  CHECK_THROWS_AS(data::train_val_split(t, 0.5, 7), InputError);
  t.train.resize(11);  // class 5 left with one sample
  CHECK_THROWS_AS(data::train_val_split(t, 0.1, 7), InputError);
}

TEST_CASE("make_stream: default split sizes") {
  const auto st = data::make_stream(tiny_spec());
  for (const auto& t : st) {
    CHECK(t.val.size() == t.classes.size() * 3);
    CHECK(t.train.size() == t.classes.size() * 12);
    CHECK(t.test.size() == t.classes.size() * 5);
  }
}

TEST_CASE("round_half_up") {
  CHECK(data::round_half_up(1.5) == 2);
  CHECK(data::round_half_up(2.5) == 3);
  CHECK(data::round_half_up(0.3) == 0);
  CHECK(data::round_half_up(0.49999) == 0);
}

TEST_CASE("IDX: hand-built file loads and normalises") {
  const auto dir = temp_dir("idx");
  {
    std::ofstream img(dir / "img.idx", std::ios::binary);
    const unsigned char header[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 4, 0, 0, 0, 4};
    img.write(reinterpret_cast<const char*>(header), sizeof header);
    for (int i = 0; i < 32; ++i) img.put(static_cast<char>(i == 0 ? 255 : i));
    std::ofstream lab(dir / "lab.idx", std::ios::binary);
    const unsigned char lh[] = {0, 0, 8, 1, 0, 0, 0, 2, 1, 0};
    lab.write(reinterpret_cast<const char*>(lh), sizeof lh);
  }
  data::ExternalOptions opt;
  opt.labels = dir / "lab.idx";
  opt.num_classes = 2;
  const auto d = data::load_external(dir / "img.idx", data::ExternalFormat::Idx, opt);
  REQUIRE(d.samples.size() == 2);
  CHECK(d.samples[0].image.height == 4);
  CHECK(d.samples[0].image.pixels[0] == 1.0f);
  CHECK(d.samples[0].label == 1);
  CHECK(d.samples[1].label == 0);

  // Truncated payload.
  fs::resize_file(dir / "img.idx", 20);
  try {
    data::load_external(dir / "img.idx", data::ExternalFormat::Idx, opt);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("expected 48 bytes, got 20") != std::string::npos);
  }
  std::ofstream(dir / "bad.idx", std::ios::binary) << std::string("\0\0\x08\x02", 4);
  CHECK_THROWS_AS(data::load_external(dir / "bad.idx", data::ExternalFormat::Idx, opt), FormatError);
}

TEST_CASE("IDX and CSV writers round-trip") {
  const auto dir = temp_dir("rt");
  auto spec = tiny_spec();
  const auto pool = data::synth_class_pool(spec);
  data::Dataset d{{pool.test.samples.begin(), pool.test.samples.begin() + 6}, 8};
  data::write_idx(dir / "i.idx", dir / "l.idx", d);
  data::ExternalOptions o;
  o.labels = dir / "l.idx";
  o.num_classes = 8;
  const auto back = data::load_external(dir / "i.idx", data::ExternalFormat::Idx, o);
  REQUIRE(back.samples.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.samples[i].label == d.samples[i].label);
    for (std::size_t p = 0; p < d.samples[i].image.size(); ++p)
      CHECK(std::abs(back.samples[i].image.pixels[p] - d.samples[i].image.pixels[p]) <= 0.5f / 255 + 1e-6f);
  }
  data::write_csv_pixels(dir / "d.csv", d);
  data::ExternalOptions c;
  c.side = 16;
  const auto csv = data::load_external(dir / "d.csv", data::ExternalFormat::CsvPixels, c);
  REQUIRE(csv.samples.size() == 6);
  CHECK(csv.samples[3].image == d.samples[3].image);

  std::ofstream(dir / "bad.csv") << "0,0.5\n";
  try {
    data::load_external(dir / "bad.csv", data::ExternalFormat::CsvPixels, c);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("row 1") != std::string::npos);
  }
}
