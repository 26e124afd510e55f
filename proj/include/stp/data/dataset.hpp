#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "stp/nn/model.hpp"

namespace stp::data {

/// H x W x C intensity grid, row-major HWC, values in [0, 1].
struct RasterImage {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<float> pixels;

  RasterImage() = default;
  RasterImage(int h, int w, int c, float fill = 0.0f)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return pixels.size(); }
  float& at(int y, int x, int c = 0) { return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  float at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const RasterImage&) const = default;
};

struct Sample {
  RasterImage image;
  int label = 0;          // global class index
  bool poisoned = false;  // provenance only; never read by training
  bool operator==(const Sample&) const = default;
};

struct Dataset {
  std::vector<Sample> samples;
  int num_classes = 0;
};

/// One task of a class-incremental stream. `test` is held out and never poisoned.
struct TaskDataset {
  int task_id = 0;
  std::vector<int> classes;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

using Stream = std::vector<TaskDataset>;

struct StreamSpec {
  int num_classes = 8;
  std::vector<int> task_class_counts{4, 2, 2};
  int side = 16;
  int channels = 1;
  int train_per_class = 200;
  int val_per_class = 40;
  int test_per_class = 100;
  std::uint64_t seed = 0;
  double frequency = 3.0;     // grating cycles per image side
  double noise_sigma = 0.05;  // per-pixel Gaussian noise
  bool phase_jitter = true;   // per-sample uniform phase
  bool permute_classes = true;

  int input_width() const { return side * side * channels; }
  // Fraction that reproduces val_per_class out of (train + val) per class.
  double val_fraction() const {
    return static_cast<double>(val_per_class) / static_cast<double>(train_per_class + val_per_class);
  }
};

/// Development (train + val) and held-out test pools over all classes.
struct ClassPool {
  Dataset development;
  Dataset test;
};

/// Stacks flattened images as rows, shifted by -0.5 so mid-grey maps to 0
/// (raw [0,1] pixels stall ReLU training under distillation).
nn::MatrixF to_matrix(std::span<const Sample> samples);
std::vector<int> labels_of(std::span<const Sample> samples);

/// round(x) with halves going up; used for every count in the library.
inline long round_half_up(double x) { return static_cast<long>(std::floor(x + 0.5)); }

}  // namespace stp::data
