#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stp/cl/learner.hpp"
#include "stp/cl/trainer.hpp"
#include "stp/data/dataset.hpp"

namespace stp::defense {

/// Mean post-rectifier activation per trunk layer over a dataset. Heads are
/// excluded: a freshly initialised head would dominate every distance.
struct ActivationProfile {
  std::vector<Eigen::VectorXd> layers;
};

ActivationProfile mean_activations(const nn::Model<float>& model, std::span<const data::Sample> samples);

/// v_l = || after_l - before_l ||_2 per layer.
std::vector<double> layer_distances(const ActivationProfile& before, const ActivationProfile& after);

/// c_k = sum_{l <= k} v_l.
std::vector<double> cumulative_profile(std::span<const double> v);

/// Angle at c_first of the right triangle (0, c_first), (L-1, c_last),
/// (L-1, c_first) with unit layer spacing: atan((c_last - c_first) / (L - 1))
/// in degrees.
double profile_angle(std::span<const double> c);

struct TaskVectorProfile {
  std::vector<double> v;
  std::vector<double> c;
  double angle_deg = 0;
};

TaskVectorProfile task_vector(const ActivationProfile& before, const ActivationProfile& after);

/// Angle of the task vector produced by training `before` into `after`,
/// measured on `samples`.
TaskVectorProfile task_vector(const nn::Model<float>& before, const nn::Model<float>& after,
                              std::span<const data::Sample> samples);

enum class Statistic { MaxPlusIqr, Max, P90, MaxMinusIqr, P75 };

std::string_view name(Statistic s);
Statistic parse_statistic(std::string_view name);
const std::vector<Statistic>& all_statistics();

/// Linear order-statistic interpolation: h = (n - 1) p + 1 on the sorted
/// values (1-based), value = x_floor(h) + (h - floor(h)) (x_floor(h)+1 - x_floor(h)).
double percentile(std::vector<double> values, double p);

double aggregate_stat(std::span<const double> angles, Statistic statistic);

struct DetectorState {
  std::optional<double> alpha_deg;  // empty until calibrated
  Statistic statistic = Statistic::P90;
  int calibration_task_id = 1;
  std::vector<std::uint64_t> calibration_seeds;
  std::vector<double> calibration_angles;  // sorted ascending

  bool calibrated() const { return alpha_deg.has_value(); }
};

/// Per-seed angle of the calibration task's update, in seed order.
std::vector<double> calibration_angles(const data::Stream& stream, int clean_task_index, const cl::MethodConfig& cfg,
                                       const std::vector<std::uint64_t>& seeds, int workers = 1);

/// Threshold from a clean early task: per seed, train the stream up to the
/// calibration task, measure the angle of that task's update on its own
/// train data, then aggregate the angles with `statistic`.
DetectorState calibrate_alpha(const data::Stream& stream, int clean_task_index, const cl::MethodConfig& cfg,
                              const std::vector<std::uint64_t>& seeds, Statistic statistic, int workers = 1);

/// Builds a detector from precomputed angles.
DetectorState detector_from_angles(std::vector<double> angles, Statistic statistic);

/// beta > alpha, strictly.
bool detect(double beta_deg, const DetectorState& detector);

struct AuditRecord {
  int task_id = 0;
  double beta_deg = 0;
  double alpha_deg = 0;
  bool detected = false;
  std::uint64_t checkpoint_hash = 0;
};

/// One JSON object per line.
void write_audit_log(std::ostream& out, const std::vector<AuditRecord>& records);

struct GuardedResult {
  cl::AccMatrix acc;
  std::vector<AuditRecord> events;  // one per guarded task
  std::vector<int> rolled_back;     // task indices
  std::vector<cl::TrainLog> logs;   // every trained task, rolled back or not
  cl::Learner final;
};

/// Decision hook: (task index, beta in degrees) -> poisoned?
using DetectFn = std::function<bool(int task, double beta_deg)>;

/// checkpoint -> train -> beta on the task's train data -> on detection the
/// checkpoint is restored (hash-verified) and the task skipped. Tasks before
/// `first_guarded` train unguarded. Metrics use the clean test splits.
GuardedResult guarded_run(const data::Stream& stream, const cl::MethodConfig& cfg, std::uint64_t seed,
                          const DetectFn& detector, int first_guarded = 0);

GuardedResult guarded_run(const data::Stream& stream, const cl::MethodConfig& cfg, std::uint64_t seed,
                          const DetectorState& detector, int first_guarded = 0);

struct ScoredTask {
  double beta = 0;
  bool poisoned = false;
};

struct PrPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

/// Thresholds at every distinct score, ascending; a task is flagged when its
/// score >= threshold. Precision is 1 when nothing is flagged.
std::vector<PrPoint> pr_curve(std::span<const ScoredTask> scored);

struct DetectionMetrics {
  double acc = 0;        // correct decisions / all tasks
  double clean_acc = 0;  // specificity
  double attack_acc = 0; // recall
  double precision = 0;
  double f1 = 0;
  int tp = 0, fp = 0, tn = 0, fn = 0;
};

DetectionMetrics detection_metrics(std::span<const ScoredTask> scored, double alpha_deg);
DetectionMetrics detection_metrics(std::span<const bool> predicted, std::span<const bool> truth);

}  // namespace stp::defense
