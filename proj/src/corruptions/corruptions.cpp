#include "stp/corruptions.hpp"

#include <algorithm>
#include <cmath>

#include "stp/error.hpp"
#include "stp/rng.hpp"

namespace stp::corrupt {

namespace {

void check_severity(int severity) {
  if (severity < 1 || severity > 5) throw InputError("corruption severity must be in [1,5], got " + std::to_string(severity));
}

std::size_t level(int severity) {
  check_severity(severity);
  return static_cast<std::size_t>(severity - 1);
}

// Half-sample symmetric reflection (d c b a | a b c d | d c b a), periodic
// so that radii larger than the image still map inside it.
int reflect(int i, int n) {
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

float clip01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

}  // namespace

std::string_view name(Kind kind) {
  switch (kind) {
    case Kind::GaussianNoise: return "gaussian_noise";
    case Kind::GaussianBlur: return "gaussian_blur";
    case Kind::Contrast: return "contrast";
    case Kind::Pixelate: return "pixelate";
    case Kind::ContrastPlus1: return "contrast_plus1";
  }
  return "?";
}

Kind parse_kind(std::string_view n) {
  for (Kind k : {Kind::GaussianNoise, Kind::GaussianBlur, Kind::Contrast, Kind::Pixelate, Kind::ContrastPlus1})
    if (name(k) == n) return k;
  throw InputError("unknown corruption '" + std::string(n) + "'");
}

const std::vector<std::string>& default_catalog() {
  static const std::vector<std::string> catalog{"gaussian_blur", "gaussian_noise", "contrast", "pixelate",
                                                "contrast_plus1"};
  return catalog;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0)) throw InputError("gaussian_kernel: sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    sum += w;
  }
  for (auto& w : k) w /= sum;
  return k;
}

RasterImage gaussian_noise(const RasterImage& img, int severity, std::uint64_t seed) {
  const double sigma = SeverityTable::noise_sigma[level(severity)];
  CounterRng rng(seed, {0x9015Eull});
  RasterImage out = img;
  for (auto& p : out.pixels) p = clip01(p + sigma * rng.normal());
  return out;
}

RasterImage blur_with_sigma(const RasterImage& img, double sigma) {
  if (img.height < 2 || img.width < 2) throw InputError("gaussian_blur: image must be at least 2x2");
  const auto kernel = gaussian_kernel(sigma);
  const int r = static_cast<int>(kernel.size() / 2);
  const int h = img.height, w = img.width, ch = img.channels;
  std::vector<double> tmp(img.size());
  auto idx = [&](int y, int x, int c) { return (static_cast<std::size_t>(y) * w + x) * ch + c; };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += kernel[static_cast<std::size_t>(t + r)] * img.pixels[idx(y, reflect(x + t, w), c)];
        tmp[idx(y, x, c)] = acc;
      }
  RasterImage out = img;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < ch; ++c) {
        double acc = 0.0;
        for (int t = -r; t <= r; ++t) acc += kernel[static_cast<std::size_t>(t + r)] * tmp[idx(reflect(y + t, h), x, c)];
        out.pixels[idx(y, x, c)] = clip01(acc);
      }
  return out;
}

RasterImage gaussian_blur(const RasterImage& img, int severity) {
  return blur_with_sigma(img, SeverityTable::blur_sigma[level(severity)]);
}

RasterImage contrast_with_factor(const RasterImage& img, double factor) {
  RasterImage out = img;
  const std::size_t n = static_cast<std::size_t>(img.height) * img.width;
  for (int c = 0; c < img.channels; ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += img.pixels[i * img.channels + c];
    mean /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto& p = out.pixels[i * img.channels + c];
      p = clip01(mean + factor * (p - mean));
    }
  }
  return out;
}

RasterImage contrast(const RasterImage& img, int severity) {
  return contrast_with_factor(img, SeverityTable::contrast_factor[level(severity)]);
}

RasterImage pixelate_with_block(const RasterImage& img, int block) {
  if (block < 1) throw InputError("pixelate: block size must be positive");
  const int b = std::min({block, img.height, img.width});
  RasterImage out = img;
  for (int by = 0; by < img.height; by += b)
    for (int bx = 0; bx < img.width; bx += b) {
      const int ey = std::min(by + b, img.height), ex = std::min(bx + b, img.width);
      for (int c = 0; c < img.channels; ++c) {
        double sum = 0.0;
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) sum += img.at(y, x, c);
        const float mean = clip01(sum / static_cast<double>((ey - by) * (ex - bx)));
        for (int y = by; y < ey; ++y)
          for (int x = bx; x < ex; ++x) out.at(y, x, c) = mean;
      }
    }
  return out;
}

RasterImage pixelate(const RasterImage& img, int severity) {
  return pixelate_with_block(img, SeverityTable::pixelate_block[level(severity)]);
}

RasterImage apply(const CorruptionKind& kind, const RasterImage& img, std::uint64_t seed) {
  check_severity(kind.severity);
  switch (kind.kind) {
    case Kind::GaussianNoise: return gaussian_noise(img, kind.severity, seed);
    case Kind::GaussianBlur: return gaussian_blur(img, kind.severity);
    case Kind::Contrast: return contrast(img, kind.severity);
    case Kind::Pixelate: return pixelate(img, kind.severity);
    case Kind::ContrastPlus1: return contrast(img, std::min(kind.severity + 1, 5));
  }
  throw InputError("unknown corruption kind");
}

RasterImage apply(std::string_view kind_name, int severity, const RasterImage& img, std::uint64_t seed) {
  return apply(CorruptionKind{parse_kind(kind_name), severity}, img, seed);
}

}  // namespace stp::corrupt
