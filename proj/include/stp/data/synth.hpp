#pragma once

#include "stp/data/dataset.hpp"

namespace stp::data {

// Orientation spacing below pi/36 is not reliably separable at desk-scale sides.
inline constexpr int kMaxSynthClasses = 36;

/// Class k is a sinusoidal grating at orientation k*pi/K:
///   clip(0.5 + 0.4 sin(2 pi f (x cos t + y sin t) / G + phase) + noise).
ClassPool synth_class_pool(const StreamSpec& spec);

/// Single grating image; exposed for tests and tooling.
RasterImage grating(const StreamSpec& spec, int label, double phase, std::uint64_t noise_key);

/// Partitions classes into tasks following spec.task_class_counts. The
/// class-to-task assignment is a seeded permutation (identity when
/// spec.permute_classes is false). Tasks come back without a val split.
Stream build_stream(const ClassPool& pool, const StreamSpec& spec);

/// Stratified split: each class sends round(val_fraction * n_c) samples to
/// val. Must run before poisoning so both sides share the same corruption.
TaskDataset train_val_split(const TaskDataset& task, double val_fraction, std::uint64_t seed);

/// synth_class_pool + build_stream + train_val_split with the default settings.
Stream make_stream(const StreamSpec& spec);

}  // namespace stp::data
