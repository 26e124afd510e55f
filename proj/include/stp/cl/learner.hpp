#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stp/data/dataset.hpp"
#include "stp/nn/checkpoint.hpp"
#include "stp/nn/ewc.hpp"
#include "stp/nn/model.hpp"
#include "stp/nn/optim.hpp"

namespace stp::cl {

enum class Method { Finetune, Lwf, Ewc, Replay, Joint };

std::string_view name(Method m);
Method parse_method(std::string_view name);

struct MethodConfig {
  Method method = Method::Lwf;
  double lambda = 10.0;       // LwF distillation weight or EWC penalty strength
  double temperature = 2.0;   // LwF
  double fisher_merge = 0.5;  // EWC: F = gamma F_old + (1 - gamma) F_task
  int buffer_capacity = 0;    // REPLAY
  int epochs = 50;
  int batch_size = 32;
  double lr = 0.05;
  std::vector<int> lr_milestones{30, 40};
  double lr_decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double clip_grad_norm = 1.0;  // global L2 clip before each step; 0 disables
  std::vector<int> hidden{128, 128};

  void validate() const;
  double lr_at(int epoch) const;
  /// Default regularisation strength for a method (LwF 10, EWC 5000, else 0).
  static double default_lambda(Method m);
};

/// Class-balanced rehearsal memory.
struct ReplayBuffer {
  std::vector<data::Sample> samples;
  std::vector<int> classes;  // in order of first appearance
  bool operator==(const ReplayBuffer&) const = default;
};

/// Largest-remainder quotas: capacity / n per class, the first
/// (capacity mod n) classes in arrival order get one extra slot.
std::vector<int> replay_quotas(int capacity, int num_classes);

ReplayBuffer replay_update(const ReplayBuffer& buffer, const data::TaskDataset& task, int capacity,
                           std::uint64_t seed);

/// Complete mutable state of a continual learner.
struct Learner {
  nn::Model<float> model;
  nn::OptimState<float> optim;
  nn::EwcState<float> ewc;
  ReplayBuffer buffer;
  std::vector<int> class_order;  // global class of each concatenated logit
  std::vector<int> head_tasks;   // task id owning each head

  bool operator==(const Learner& o) const;
};

Learner make_learner(int input_width, const MethodConfig& cfg, std::uint64_t seed);

nn::CheckpointData to_checkpoint_data(const Learner& learner);
Learner from_checkpoint_data(const nn::CheckpointData& data);

/// Serialised learner plus integrity hash.
struct Checkpoint {
  int task_index = 0;
  std::string bytes;
  std::uint64_t hash = 0;
};

Checkpoint make_checkpoint(const Learner& learner, int task_index);
/// Throws IntegrityError when the stored hash does not match the bytes.
Learner restore(const Checkpoint& checkpoint);

}  // namespace stp::cl
