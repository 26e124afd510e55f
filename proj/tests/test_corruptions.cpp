#include <doctest.h>

#include <cmath>
#include <numeric>

#include "stp/corruptions.hpp"
#include "stp/data/synth.hpp"
#include "stp/error.hpp"
#include "stp/rng.hpp"

using namespace stp;
using data::RasterImage;

namespace {

RasterImage random_image(std::uint64_t seed, int side = 16, int channels = 1) {
  CounterRng rng(seed, {0x1A6Eull});
  RasterImage img(side, side, channels);
  for (auto& p : img.pixels) p = static_cast<float>(rng.uniform());
  return img;
}

double mean_l1(const RasterImage& a, const RasterImage& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.pixels[i] - b.pixels[i]);
  return s / static_cast<double>(a.size());
}

const corrupt::Kind kAllKinds[] = {corrupt::Kind::GaussianNoise, corrupt::Kind::GaussianBlur, corrupt::Kind::Contrast,
                                   corrupt::Kind::Pixelate, corrupt::Kind::ContrastPlus1};

}  // namespace

TEST_CASE("severity tables are monotone") {
  using T = corrupt::SeverityTable;
  for (std::size_t i = 1; i < 5; ++i) {
    CHECK(T::noise_sigma[i] >= T::noise_sigma[i - 1]);
    CHECK(T::blur_sigma[i] >= T::blur_sigma[i - 1]);
    CHECK(T::contrast_factor[i] <= T::contrast_factor[i - 1]);
    CHECK(T::pixelate_block[i] >= T::pixelate_block[i - 1]);
  }
  for (double c : T::contrast_factor) CHECK(c < 1.0);
  CHECK(T::noise_sigma[4] == 0.10);
}

TEST_CASE("gaussian_noise: clipping and determinism") {
  const auto img = random_image(1);
  CHECK(corrupt::gaussian_noise(img, 3, 9) == corrupt::gaussian_noise(img, 3, 9));
  CHECK_FALSE(corrupt::gaussian_noise(img, 3, 9) == corrupt::gaussian_noise(img, 3, 10));
  RasterImage hi(4, 4, 1, 0.99f);
  for (float v : corrupt::gaussian_noise(hi, 5, 3).pixels) CHECK(v <= 1.0f);
  // Severity 5 changes essentially every pixel.
  const auto out = corrupt::gaussian_noise(RasterImage(32, 32, 1, 0.5f), 5, 4);
  const auto changed = std::count_if(out.pixels.begin(), out.pixels.end(), [](float v) { return v != 0.5f; });
  CHECK(static_cast<double>(changed) >= 0.99 * 1024);
  CHECK_THROWS_AS(corrupt::gaussian_noise(img, 6, 1), InputError);
}

TEST_CASE("gaussian_blur: kernel, constants, impulse") {
  for (double s : corrupt::SeverityTable::blur_sigma) {
    const auto k = corrupt::gaussian_kernel(s);
    CHECK(std::abs(std::accumulate(k.begin(), k.end(), 0.0) - 1.0) < 1e-9);
    CHECK(k.size() == 2 * static_cast<std::size_t>(std::ceil(3 * s)) + 1);
  }
  RasterImage flat(9, 9, 2, 0.37f);
  for (int sev = 1; sev <= 5; ++sev)
    for (std::size_t i = 0; i < flat.size(); ++i)
      CHECK(std::abs(corrupt::gaussian_blur(flat, sev).pixels[i] - 0.37f) < 1e-7);

  // Centre coefficient of the normalised 1-D kernel, computed independently.
  const double sigma = 0.4;
  const int r = static_cast<int>(std::ceil(3 * sigma));
  double z = 0;
  for (int i = -r; i <= r; ++i) z += std::exp(-0.5 * i * i / (sigma * sigma));
  const double centre = 1.0 / z;
  RasterImage imp(15, 15, 1, 0.0f);
  imp.at(7, 7) = 1.0f;
  CHECK(corrupt::blur_with_sigma(imp, sigma).at(7, 7) == doctest::Approx(centre * centre).epsilon(1e-6));
  CHECK(corrupt::gaussian_blur(imp, 1).at(7, 7) == doctest::Approx(centre * centre).epsilon(1e-6));
  CHECK_THROWS_AS(corrupt::gaussian_blur(RasterImage(1, 5, 1), 1), InputError);
}

TEST_CASE("contrast: arithmetic and constants") {
  RasterImage two(1, 2, 1);
  two.pixels = {1.0f, 0.0f};  // mean 0.5
  CHECK(corrupt::contrast(two, 2).pixels[0] == doctest::Approx(0.75));
  RasterImage flat(4, 4, 3, 0.2f);
  CHECK(corrupt::contrast(flat, 5) == flat);
  // Per-channel means.
  RasterImage rg(1, 2, 2);
  rg.pixels = {0.0f, 1.0f, 1.0f, 1.0f};
  const auto out = corrupt::contrast_with_factor(rg, 0.0);
  CHECK(out.pixels[0] == doctest::Approx(0.5));
  CHECK(out.pixels[1] == doctest::Approx(1.0));
}

TEST_CASE("pixelate: block means and clamping") {
  RasterImage img(2, 2, 1);
  img.pixels = {0.0f, 1.0f, 0.0f, 1.0f};
  for (float v : corrupt::pixelate(img, 1).pixels) CHECK(v == 0.5f);
  const auto r = random_image(3, 4);
  const float mean = std::accumulate(r.pixels.begin(), r.pixels.end(), 0.0f) / 16;
  for (float v : corrupt::pixelate(r, 5).pixels) CHECK(v == doctest::Approx(mean).epsilon(1e-6));
  // Ragged edge: 5x5 with b=2 leaves a 1-wide last column averaged over 2 pixels.
  RasterImage rag(5, 5, 1, 0.0f);
  rag.at(0, 4) = 1.0f;
  CHECK(corrupt::pixelate_with_block(rag, 2).at(1, 4) == doctest::Approx(0.5));
  RasterImage blocky(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) blocky.at(y, x) = static_cast<float>((y / 2) * 2 + x / 2) / 4;
  CHECK(corrupt::pixelate(blocky, 1) == blocky);
}

TEST_CASE("apply: dispatch, range, unknown names") {
  RasterImage flat(6, 6, 1, 0.4f);
  CHECK(corrupt::apply("gaussian_blur", 1, flat, 0) == corrupt::gaussian_blur(flat, 1));
  CHECK(corrupt::apply(corrupt::CorruptionKind{corrupt::Kind::ContrastPlus1, 2}, random_image(2), 0) ==
        corrupt::contrast(random_image(2), 3));
  CHECK_THROWS_AS(corrupt::apply("jpeg", 1, flat, 0), InputError);
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto img = random_image(s, 8);
    const auto k = kAllKinds[s % 5];
    const int sev = 1 + static_cast<int>(s / 5 % 5);
    for (float v : corrupt::apply({k, sev}, img, s).pixels) REQUIRE((v >= 0.0f && v <= 1.0f));
  }
}

TEST_CASE("distortion is nondecreasing in severity") {
  data::StreamSpec spec;
  spec.num_classes = 8;
  for (auto k : {corrupt::Kind::GaussianNoise, corrupt::Kind::GaussianBlur, corrupt::Kind::Contrast,
                 corrupt::Kind::Pixelate}) {
    double prev = -1;
    for (int sev = 1; sev <= 5; ++sev) {
      double total = 0;
      for (int i = 0; i < 100; ++i) {
        const auto img = data::grating(spec, i % 8, 0.1 * i, static_cast<std::uint64_t>(i));
        total += mean_l1(img, corrupt::apply({k, sev}, img, static_cast<std::uint64_t>(i)));
      }
      CHECK(total / 100 >= prev);
      prev = total / 100;
    }
  }
}
