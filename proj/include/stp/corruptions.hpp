#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stp/data/dataset.hpp"

namespace stp::corrupt {

using data::RasterImage;

enum class Kind { GaussianNoise, GaussianBlur, Contrast, Pixelate, ContrastPlus1 };

struct CorruptionKind {
  Kind kind = Kind::GaussianBlur;
  int severity = 5;  // 1..5
};

/// Per-kind parameters indexed by severity - 1.
struct SeverityTable {
  static constexpr std::array<double, 5> noise_sigma{0.04, 0.06, 0.08, 0.09, 0.10};
  static constexpr std::array<double, 5> blur_sigma{0.4, 0.6, 0.8, 1.0, 1.5};
  static constexpr std::array<double, 5> contrast_factor{0.75, 0.5, 0.4, 0.3, 0.15};
  static constexpr std::array<int, 5> pixelate_block{2, 3, 4, 5, 8};
};

std::string_view name(Kind kind);
Kind parse_kind(std::string_view name);

/// Multi-poison catalog, in the order poisons are assigned. The fifth entry
/// stands in for JPEG: contrast applied one severity step higher.
const std::vector<std::string>& default_catalog();

/// Normalised 1-D Gaussian kernel of radius ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

RasterImage gaussian_noise(const RasterImage& img, int severity, std::uint64_t seed);
RasterImage gaussian_blur(const RasterImage& img, int severity);
RasterImage contrast(const RasterImage& img, int severity);
RasterImage pixelate(const RasterImage& img, int severity);

/// Parameterised kernels used by the severity wrappers.
RasterImage blur_with_sigma(const RasterImage& img, double sigma);
RasterImage contrast_with_factor(const RasterImage& img, double factor);
RasterImage pixelate_with_block(const RasterImage& img, int block);

RasterImage apply(const CorruptionKind& kind, const RasterImage& img, std::uint64_t seed);
RasterImage apply(std::string_view kind_name, int severity, const RasterImage& img, std::uint64_t seed);

}  // namespace stp::corrupt
