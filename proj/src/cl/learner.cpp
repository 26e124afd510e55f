#include "stp/cl/learner.hpp"

#include <algorithm>
#include <numeric>
#include <span>

#include "stp/error.hpp"
#include "stp/rng.hpp"

namespace stp::cl {

std::string_view name(Method m) {
  switch (m) {
    case Method::Finetune: return "finetune";
    case Method::Lwf: return "lwf";
    case Method::Ewc: return "ewc";
    case Method::Replay: return "replay";
    case Method::Joint: return "joint";
  }
  return "?";
}

Method parse_method(std::string_view n) {
  std::string lower(n);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  for (auto m : {Method::Finetune, Method::Lwf, Method::Ewc, Method::Replay, Method::Joint})
    if (name(m) == lower) return m;
  throw InputError("unknown method '" + std::string(n) + "'");
}

double MethodConfig::default_lambda(Method m) {
  switch (m) {
    case Method::Lwf: return 10.0;
    case Method::Ewc: return 5000.0;
    default: return 0.0;
  }
}

void MethodConfig::validate() const {
  if (lambda < 0) throw InputError("method: lambda must be >= 0");
  if (!(temperature > 0)) throw InputError("method: temperature must be > 0");
  if (fisher_merge < 0 || fisher_merge > 1) throw InputError("method: fisher_merge must be in [0,1]");
  if (buffer_capacity < 0) throw InputError("method: buffer_capacity must be >= 0");
  if (epochs < 1) throw InputError("method: epochs must be >= 1");
  if (batch_size < 1) throw InputError("method: batch_size must be >= 1");
  if (!(lr > 0)) throw InputError("method: lr must be > 0");
  if (momentum < 0 || momentum >= 1) throw InputError("method: momentum must be in [0,1)");
  if (weight_decay < 0) throw InputError("method: weight_decay must be >= 0");
  if (clip_grad_norm < 0) throw InputError("method: clip_grad_norm must be >= 0");
  if (hidden.empty()) throw InputError("method: need at least one hidden layer");
}

double MethodConfig::lr_at(int epoch) const {
  double rate = lr;
  for (int m : lr_milestones)
    if (epoch >= m) rate *= lr_decay;
  return rate;
}

std::vector<int> replay_quotas(int capacity, int num_classes) {
  if (num_classes <= 0) return {};
  std::vector<int> q(static_cast<std::size_t>(num_classes), capacity / num_classes);
  for (int i = 0; i < capacity % num_classes; ++i) ++q[static_cast<std::size_t>(i)];
  return q;
}

ReplayBuffer replay_update(const ReplayBuffer& buffer, const data::TaskDataset& task, int capacity,
                           std::uint64_t seed) {
  if (capacity < 0) throw InputError("replay_update: capacity must be >= 0");
  ReplayBuffer out;
  out.classes = buffer.classes;
  for (int c : task.classes)
    if (std::find(out.classes.begin(), out.classes.end(), c) == out.classes.end()) out.classes.push_back(c);
  if (capacity == 0) return {{}, out.classes};

  const auto quotas = replay_quotas(capacity, static_cast<int>(out.classes.size()));
  for (std::size_t k = 0; k < out.classes.size(); ++k) {
    const int cls = out.classes[k];
    const auto quota = static_cast<std::size_t>(quotas[k]);
    std::vector<const data::Sample*> kept;
    for (const auto& s : buffer.samples)
      if (s.label == cls) kept.push_back(&s);
    if (kept.empty()) {
      std::vector<const data::Sample*> candidates;
      for (const auto& s : task.train)
        if (s.label == cls) candidates.push_back(&s);
      CounterRng rng(seed, {0xB0FFull, static_cast<std::uint64_t>(cls)});
      rng.shuffle(std::span(candidates));
      kept = std::move(candidates);
    }
    for (std::size_t i = 0; i < std::min(quota, kept.size()); ++i) out.samples.push_back(*kept[i]);
  }
  return out;
}

bool Learner::operator==(const Learner& o) const {
  return model == o.model && optim.lr == o.optim.lr && optim.momentum == o.optim.momentum &&
         optim.weight_decay == o.optim.weight_decay && optim.velocity == o.optim.velocity && ewc == o.ewc &&
         buffer == o.buffer && class_order == o.class_order && head_tasks == o.head_tasks;
}

Learner make_learner(int input_width, const MethodConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Learner l;
  l.model = nn::make_model<float>(input_width, cfg.hidden, seed);
  l.optim.lr = static_cast<float>(cfg.lr);
  l.optim.momentum = static_cast<float>(cfg.momentum);
  l.optim.weight_decay = static_cast<float>(cfg.weight_decay);
  l.ewc.merge_coeff = static_cast<float>(cfg.fisher_merge);
  return l;
}

nn::CheckpointData to_checkpoint_data(const Learner& l) {
  nn::CheckpointData d;
  d.model = l.model;
  d.optim = l.optim;
  d.ewc = l.ewc;
  nlohmann::json buf = nlohmann::json::array();
  std::vector<float> pixels;
  for (const auto& s : l.buffer.samples) {
    buf.push_back({s.label, s.poisoned, s.image.height, s.image.width, s.image.channels});
    pixels.insert(pixels.end(), s.image.pixels.begin(), s.image.pixels.end());
  }
  d.extra = {{"class_order", l.class_order},
             {"head_tasks", l.head_tasks},
             {"buffer_classes", l.buffer.classes},
             {"buffer", buf}};
  d.extra_arrays.push_back(std::move(pixels));
  return d;
}

Learner from_checkpoint_data(const nn::CheckpointData& d) {
  Learner l;
  l.model = d.model;
  l.optim = d.optim;
  l.ewc = d.ewc;
  l.class_order = d.extra.at("class_order").get<std::vector<int>>();
  l.head_tasks = d.extra.at("head_tasks").get<std::vector<int>>();
  l.buffer.classes = d.extra.at("buffer_classes").get<std::vector<int>>();
  const auto& pixels = d.extra_arrays.at(0);
  std::size_t offset = 0;
  for (const auto& e : d.extra.at("buffer")) {
    data::Sample s;
    s.label = e.at(0).get<int>();
    s.poisoned = e.at(1).get<bool>();
    s.image = data::RasterImage(e.at(2).get<int>(), e.at(3).get<int>(), e.at(4).get<int>());
    if (offset + s.image.size() > pixels.size()) throw FormatError("checkpoint: replay buffer pixels truncated");
    std::copy_n(pixels.begin() + static_cast<std::ptrdiff_t>(offset), s.image.size(), s.image.pixels.begin());
    offset += s.image.size();
    l.buffer.samples.push_back(std::move(s));
  }
  return l;
}

Checkpoint make_checkpoint(const Learner& learner, int task_index) {
  Checkpoint c;
  c.task_index = task_index;
  c.bytes = nn::encode_checkpoint(to_checkpoint_data(learner));
  c.hash = nn::content_hash(c.bytes);
  return c;
}

Learner restore(const Checkpoint& checkpoint) {
  if (nn::content_hash(checkpoint.bytes) != checkpoint.hash)
    throw IntegrityError("checkpoint for task " + std::to_string(checkpoint.task_index) + " failed its hash check");
  return from_checkpoint_data(nn::decode_checkpoint(checkpoint.bytes));
}

}  // namespace stp::cl
