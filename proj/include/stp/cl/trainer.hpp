#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "stp/attacks.hpp"
#include "stp/cl/learner.hpp"
#include "stp/data/dataset.hpp"

namespace stp::cl {

struct EpochLog {
  double train_loss = 0;
  double train_acc = 0;  // new-head accuracy over the epoch's batches
  double val_acc = 0;    // class-IL accuracy on the task's val split (NaN if empty)
};

struct TrainLog {
  int task_index = 0;
  std::uint64_t seed = 0;
  std::vector<EpochLog> epochs;
  double wall_seconds = 0;  // informational; never written to deterministic outputs
};

/// R[i][j]: accuracy on task j's test classes after training task i, j <= i.
using AccMatrix = std::vector<std::vector<double>>;

/// Trains one task in place: appends a head, runs seeded minibatch SGD, then
/// updates EWC / replay state. `teacher` is the pre-task model used by LwF;
/// when null a snapshot is taken internally.
TrainLog train_task(Learner& learner, const data::TaskDataset& task, const MethodConfig& cfg, std::uint64_t seed,
                    int task_index, const nn::Model<float>* teacher = nullptr);

/// Task-agnostic prediction: argmax over all concatenated head logits, ties to
/// the lowest index. Returns the predicted global class per sample.
std::vector<int> predict_class_il(const Learner& learner, std::span<const data::Sample> samples);

/// Per-task accuracy on the given test splits.
std::vector<double> eval_class_il(const Learner& learner, const std::vector<const std::vector<data::Sample>*>& tests);

double accuracy(const Learner& learner, std::span<const data::Sample> samples);

struct StreamResult {
  AccMatrix acc;
  std::vector<Checkpoint> checkpoints;  // taken before each task
  std::vector<TrainLog> logs;
  Learner final;
};

StreamResult run_stream(const data::Stream& stream, const MethodConfig& cfg, std::uint64_t seed);

/// Row i of the accuracy matrix for a learner that has just finished task i.
std::vector<double> acc_row(const Learner& learner, const data::Stream& stream, std::size_t i);

struct JointResult {
  std::map<int, double> per_class;  // clean test accuracy per global class
  std::vector<double> per_task;     // clean test accuracy per task's class group
  std::vector<double> per_task_val;  // val-split accuracy (poisoned where the stream is)
  double total = 0;
};

/// Single-head upper bound trained on all tasks at once with the same
/// schedule as one CL task. If a poison is given it is applied to its task
/// before merging.
JointResult joint_train(const data::Stream& stream, const std::optional<attack::PoisonPlan>& poison,
                        const MethodConfig& cfg, std::uint64_t seed);

}  // namespace stp::cl
