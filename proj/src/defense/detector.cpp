#include "stp/defense/detector.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <ostream>
#include <memory>
#include <set>

#include <nlohmann/json.hpp>

#include "stp/error.hpp"
#include "stp/parallel.hpp"

namespace stp::defense {

ActivationProfile mean_activations(const nn::Model<float>& model, std::span<const data::Sample> samples) {
  if (samples.empty()) throw InputError("mean_activations: empty data");
  const auto fwd = nn::forward_features(model, data::to_matrix(samples));
  ActivationProfile out;
  for (const auto& a : fwd.activations) out.layers.push_back(a.cast<double>().colwise().mean().transpose());
  return out;
}

std::vector<double> layer_distances(const ActivationProfile& before, const ActivationProfile& after) {
  if (before.layers.size() != after.layers.size())
    throw InputError("layer_distances: profiles have " + std::to_string(before.layers.size()) + " and " +
                     std::to_string(after.layers.size()) + " layers");
  std::vector<double> v;
  for (std::size_t l = 0; l < before.layers.size(); ++l) {
    if (before.layers[l].size() != after.layers[l].size())
      throw InputError("layer_distances: layer " + std::to_string(l) + " widths differ");
    v.push_back((after.layers[l] - before.layers[l]).norm());
  }
  return v;
}

std::vector<double> cumulative_profile(std::span<const double> v) {
  if (v.empty()) throw InputError("cumulative_profile: empty distance vector");
  std::vector<double> c(v.size());
  double run = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) c[i] = run += v[i];
  return c;
}

double profile_angle(std::span<const double> c) {
  if (c.size() < 2) throw InputError("profile_angle: need at least 2 layers");
  const double rise = c.back() - c.front();
  const double run = static_cast<double>(c.size() - 1);
  return std::atan(rise / run) * 180.0 / std::numbers::pi;
}

TaskVectorProfile task_vector(const ActivationProfile& before, const ActivationProfile& after) {
  TaskVectorProfile t;
  t.v = layer_distances(before, after);
  t.c = cumulative_profile(t.v);
  t.angle_deg = profile_angle(t.c);
  return t;
}

TaskVectorProfile task_vector(const nn::Model<float>& before, const nn::Model<float>& after,
                              std::span<const data::Sample> samples) {
  return task_vector(mean_activations(before, samples), mean_activations(after, samples));
}

std::string_view name(Statistic s) {
  switch (s) {
    case Statistic::MaxPlusIqr: return "max+iqr";
    case Statistic::Max: return "max";
    case Statistic::P90: return "p90";
    case Statistic::MaxMinusIqr: return "max-iqr";
    case Statistic::P75: return "p75";
  }
  return "?";
}

Statistic parse_statistic(std::string_view n) {
  std::string lower(n);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(lower.begin(), lower.end(), '_', '-');
  if (lower == "max-plus-iqr") lower = "max+iqr";
  if (lower == "max-minus-iqr") lower = "max-iqr";
  for (auto s : all_statistics())
    if (name(s) == lower) return s;
  throw InputError("unknown threshold statistic '" + std::string(n) + "'");
}

const std::vector<Statistic>& all_statistics() {
  static const std::vector<Statistic> all{Statistic::MaxPlusIqr, Statistic::Max, Statistic::P90,
                                          Statistic::MaxMinusIqr, Statistic::P75};
  return all;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("percentile: no values");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p + 1.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo - 1] + frac * (values[lo] - values[lo - 1]);
}

double aggregate_stat(std::span<const double> angles, Statistic statistic) {
  if (angles.size() < 2) throw InputError("aggregate_stat: need at least 2 angles");
  const std::vector<double> v(angles.begin(), angles.end());
  const double max = *std::max_element(v.begin(), v.end());
  auto iqr = [&] { return percentile(v, 0.75) - percentile(v, 0.25); };
  switch (statistic) {
    case Statistic::MaxPlusIqr: return max + iqr();
    case Statistic::Max: return max;
    case Statistic::P90: return percentile(v, 0.90);
    case Statistic::MaxMinusIqr: return max - iqr();
    case Statistic::P75: return percentile(v, 0.75);
  }
  throw InputError("aggregate_stat: unknown statistic");
}

DetectorState detector_from_angles(std::vector<double> angles, Statistic statistic) {
  std::sort(angles.begin(), angles.end());
  DetectorState d;
  d.statistic = statistic;
  d.alpha_deg = aggregate_stat(angles, statistic);
  d.calibration_angles = std::move(angles);
  return d;
}

std::vector<double> calibration_angles(const data::Stream& stream, int clean_task_index, const cl::MethodConfig& cfg,
                                       const std::vector<std::uint64_t>& seeds, int workers) {
  if (seeds.size() < 2) throw InputError("calibrate_alpha: need at least 2 seeds");
  if (clean_task_index < 0 || static_cast<std::size_t>(clean_task_index) >= stream.size())
    throw InputError("calibrate_alpha: calibration task " + std::to_string(clean_task_index) + " not in stream");
  const auto c = static_cast<std::size_t>(clean_task_index);
  return parallel_map(seeds.size(), workers, [&](std::size_t s) {
    const auto seed = seeds[s];
    cl::Learner learner = cl::make_learner(static_cast<int>(stream.front().train.front().image.size()), cfg, seed);
    for (std::size_t t = 0; t < c; ++t) cl::train_task(learner, stream[t], cfg, seed, static_cast<int>(t));
    const nn::Model<float> before = learner.model;
    cl::train_task(learner, stream[c], cfg, seed, clean_task_index);
    return task_vector(before, learner.model, stream[c].train).angle_deg;
  });
}

DetectorState calibrate_alpha(const data::Stream& stream, int clean_task_index, const cl::MethodConfig& cfg,
                              const std::vector<std::uint64_t>& seeds, Statistic statistic, int workers) {
  DetectorState d =
      detector_from_angles(calibration_angles(stream, clean_task_index, cfg, seeds, workers), statistic);
  d.calibration_task_id = stream[static_cast<std::size_t>(clean_task_index)].task_id;
  d.calibration_seeds = seeds;
  return d;
}

bool detect(double beta_deg, const DetectorState& detector) {
  if (!detector.calibrated()) throw StateError("detect: detector has not been calibrated");
  return beta_deg > *detector.alpha_deg;
}

void write_audit_log(std::ostream& out, const std::vector<AuditRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j = {{"task_id", r.task_id},
                                {"beta_deg", r.beta_deg},
                                {"alpha_deg", r.alpha_deg},
                                {"detected", r.detected},
                                {"checkpoint_hash", r.checkpoint_hash}};
    out << j.dump() << '\n';
  }
}

GuardedResult guarded_run(const data::Stream& stream, const cl::MethodConfig& cfg, std::uint64_t seed,
                          const DetectFn& detector, int first_guarded) {
  if (stream.empty() || stream.front().train.empty()) throw InputError("guarded_run: empty stream");
  GuardedResult out;
  cl::Learner learner = cl::make_learner(static_cast<int>(stream.front().train.front().image.size()), cfg, seed);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    const auto ti = static_cast<int>(t);
    if (ti < first_guarded) {
      out.logs.push_back(cl::train_task(learner, stream[t], cfg, seed, ti));
    } else {
      const cl::Checkpoint checkpoint = cl::make_checkpoint(learner, ti);
      const nn::Model<float> before = learner.model;
      out.logs.push_back(cl::train_task(learner, stream[t], cfg, seed, ti));
      const double beta = task_vector(before, learner.model, stream[t].train).angle_deg;
      const bool poisoned = detector(ti, beta);
      AuditRecord rec{stream[t].task_id, beta, std::nan(""), poisoned, checkpoint.hash};
      out.events.push_back(rec);
      if (poisoned) {
        learner = cl::restore(checkpoint);
        out.rolled_back.push_back(ti);
      }
    }
    out.acc.push_back(cl::acc_row(learner, stream, t));
  }
  out.final = std::move(learner);
  return out;
}

GuardedResult guarded_run(const data::Stream& stream, const cl::MethodConfig& cfg, std::uint64_t seed,
                          const DetectorState& detector, int first_guarded) {
  if (!detector.calibrated()) throw StateError("guarded_run: detector has not been calibrated");
  auto result = guarded_run(
      stream, cfg, seed, [&](int, double beta) { return detect(beta, detector); }, first_guarded);
  for (auto& e : result.events) e.alpha_deg = *detector.alpha_deg;
  return result;
}

std::vector<PrPoint> pr_curve(std::span<const ScoredTask> scored) {
  std::size_t positives = 0;
  for (const auto& s : scored) positives += s.poisoned;
  if (positives == 0 || positives == scored.size())
    throw InputError("pr_curve: need at least one poisoned and one clean task");
  std::set<double> thresholds;
  for (const auto& s : scored) thresholds.insert(s.beta);
  std::vector<PrPoint> out;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (const auto& s : scored)
      if (s.beta >= t) (s.poisoned ? tp : fp) += 1;
    const double precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    out.push_back({t, precision, static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return out;
}

DetectionMetrics detection_metrics(std::span<const bool> predicted, std::span<const bool> truth) {
  if (predicted.size() != truth.size()) throw InputError("detection_metrics: length mismatch");
  DetectionMetrics m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) (predicted[i] ? m.tp : m.fn) += 1;
    else (predicted[i] ? m.fp : m.tn) += 1;
  }
  const auto ratio = [](int a, int b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  m.acc = ratio(m.tp + m.tn, static_cast<int>(truth.size()));
  m.clean_acc = ratio(m.tn, m.tn + m.fp);
  m.attack_acc = ratio(m.tp, m.tp + m.fn);
  m.precision = m.tp + m.fp == 0 ? 1.0 : ratio(m.tp, m.tp + m.fp);
  m.f1 = m.tp == 0 ? 0.0 : 2.0 * m.tp / static_cast<double>(2 * m.tp + m.fp + m.fn);
  return m;
}

DetectionMetrics detection_metrics(std::span<const ScoredTask> scored, double alpha_deg) {
  const auto n = scored.size();
  std::unique_ptr<bool[]> predicted(new bool[n]), truth(new bool[n]);
  for (std::size_t i = 0; i < n; ++i) {
    predicted[i] = scored[i].beta > alpha_deg;
    truth[i] = scored[i].poisoned;
  }
  return detection_metrics(std::span<const bool>(predicted.get(), n), std::span<const bool>(truth.get(), n));
}

}  // namespace stp::defense
