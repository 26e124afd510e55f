#include "stp/data/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <set>

#include "stp/error.hpp"
#include "stp/rng.hpp"

namespace stp::data {

namespace {

constexpr std::uint64_t kDevSplit = 1;
constexpr std::uint64_t kTestSplit = 2;

void validate(const StreamSpec& spec) {
  if (spec.num_classes < 2) throw InputError("stream: need at least 2 classes");
  if (spec.num_classes > kMaxSynthClasses)
    throw InputError("stream: " + std::to_string(spec.num_classes) + " classes exceeds the " +
                     std::to_string(kMaxSynthClasses) + " distinguishable orientations");
  if (spec.side < 8) throw InputError("stream: image side must be >= 8");
  if (spec.channels < 1) throw InputError("stream: channels must be >= 1");
  if (spec.train_per_class < 1 || spec.val_per_class < 0 || spec.test_per_class < 1)
    throw InputError("stream: per-class sample counts must be positive");
}

Dataset make_split(const StreamSpec& spec, std::uint64_t split, int per_class) {
  Dataset out;
  out.num_classes = spec.num_classes;
  out.samples.reserve(static_cast<std::size_t>(per_class) * spec.num_classes);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      CounterRng rng(spec.seed, {0x5A4Dull, split, static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(i)});
      const double phase = spec.phase_jitter ? rng.uniform(0.0, 2.0 * std::numbers::pi) : 0.0;
      out.samples.push_back({grating(spec, k, phase, rng.next_u64()), k, false});
    }
  }
  return out;
}

}  // namespace

RasterImage grating(const StreamSpec& spec, int label, double phase, std::uint64_t noise_key) {
  const int g = spec.side;
  RasterImage img(g, g, spec.channels);
  const double theta = label * std::numbers::pi / spec.num_classes;
  const double ct = std::cos(theta), st = std::sin(theta);
  const double omega = 2.0 * std::numbers::pi * spec.frequency / g;
  CounterRng noise(noise_key);
  for (int y = 0; y < g; ++y) {
    for (int x = 0; x < g; ++x) {
      const double base = 0.5 + 0.4 * std::sin(omega * (x * ct + y * st) + phase);
      for (int c = 0; c < spec.channels; ++c) {
        const double eps = spec.noise_sigma > 0 ? spec.noise_sigma * noise.normal() : 0.0;
        img.at(y, x, c) = static_cast<float>(std::clamp(base + eps, 0.0, 1.0));
      }
    }
  }
  return img;
}

ClassPool synth_class_pool(const StreamSpec& spec) {
  validate(spec);
  return {make_split(spec, kDevSplit, spec.train_per_class + spec.val_per_class),
          make_split(spec, kTestSplit, spec.test_per_class)};
}

Stream build_stream(const ClassPool& pool, const StreamSpec& spec) {
  const int total = std::accumulate(spec.task_class_counts.begin(), spec.task_class_counts.end(), 0);
  if (spec.task_class_counts.empty()) throw InputError("build_stream: no tasks requested");
  for (int c : spec.task_class_counts)
    if (c < 1) throw InputError("build_stream: every task needs at least one class");
  if (total > pool.development.num_classes)
    throw InputError("build_stream: " + std::to_string(total) + " classes requested from a pool of " +
                     std::to_string(pool.development.num_classes));

  std::vector<int> order(static_cast<std::size_t>(pool.development.num_classes));
  std::iota(order.begin(), order.end(), 0);
  if (spec.permute_classes) {
    CounterRng rng(spec.seed, {0xC1A55ull});
    rng.shuffle(std::span(order));
  }

  std::map<int, int> task_of;
  Stream stream;
  std::size_t next = 0;
  for (std::size_t t = 0; t < spec.task_class_counts.size(); ++t) {
    TaskDataset task;
    task.task_id = static_cast<int>(t);
    for (int i = 0; i < spec.task_class_counts[t]; ++i) {
      const int cls = order[next++];
      if (!task_of.emplace(cls, static_cast<int>(t)).second)
        throw InputError("build_stream: class " + std::to_string(cls) + " requested twice");
      task.classes.push_back(cls);
    }
    stream.push_back(std::move(task));
  }
  for (const auto& s : pool.development.samples)
    if (auto it = task_of.find(s.label); it != task_of.end()) stream[it->second].train.push_back(s);
  for (const auto& s : pool.test.samples)
    if (auto it = task_of.find(s.label); it != task_of.end()) stream[it->second].test.push_back(s);
  return stream;
}

TaskDataset train_val_split(const TaskDataset& task, double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 0.5))
    throw InputError("train_val_split: val_fraction must lie in (0, 0.5)");
  std::vector<Sample> all = task.train;
  all.insert(all.end(), task.val.begin(), task.val.end());

  TaskDataset out;
  out.task_id = task.task_id;
  out.classes = task.classes;
  out.test = task.test;
  for (int cls : task.classes) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < all.size(); ++i)
      if (all[i].label == cls) idx.push_back(i);
    if (idx.size() < 2)
      throw InputError("train_val_split: class " + std::to_string(cls) + " has fewer than 2 samples");
    CounterRng rng(seed, {0x5B117ull, static_cast<std::uint64_t>(task.task_id), static_cast<std::uint64_t>(cls)});
    rng.shuffle(std::span(idx));
    const auto n_val = static_cast<std::size_t>(round_half_up(val_fraction * static_cast<double>(idx.size())));
    std::set<std::size_t> val_idx(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    for (std::size_t i = 0; i < all.size(); ++i) {
      if (all[i].label != cls) continue;
      (val_idx.count(i) ? out.val : out.train).push_back(all[i]);
    }
  }
  return out;
}

Stream make_stream(const StreamSpec& spec) {
  Stream stream = build_stream(synth_class_pool(spec), spec);
  if (spec.val_per_class > 0)
    for (auto& task : stream) task = train_val_split(task, spec.val_fraction(), spec.seed);
  return stream;
}

}  // namespace stp::data
