#include "stp/cl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include "stp/error.hpp"
#include "stp/nn/loss.hpp"
#include "stp/rng.hpp"

namespace stp::cl {

namespace {

using nn::MatrixF;

int position_of(const std::vector<int>& order, int cls) {
  const auto it = std::find(order.begin(), order.end(), cls);
  return it == order.end() ? -1 : static_cast<int>(it - order.begin());
}

int argmax_row(const MatrixF& m, Eigen::Index r) {
  Eigen::Index best = 0;
  for (Eigen::Index c = 1; c < m.cols(); ++c)
    if (m(r, c) > m(r, best)) best = c;
  return static_cast<int>(best);
}

}  // namespace

TrainLog train_task(Learner& learner, const data::TaskDataset& task, const MethodConfig& cfg, std::uint64_t seed,
                    int task_index, const nn::Model<float>* teacher) {
  cfg.validate();
  const auto started = std::chrono::steady_clock::now();
  if (task.train.empty()) throw InputError("train_task: task " + std::to_string(task.task_id) + " has no samples");
  for (int c : task.classes)
    if (position_of(learner.class_order, c) >= 0)
      throw InputError("train_task: class " + std::to_string(c) + " was already learned");

  auto& model = learner.model;
  const std::size_t n_old = model.heads.size();
  const bool distill = cfg.method == Method::Lwf && cfg.lambda > 0 && n_old > 0;
  std::optional<nn::Model<float>> own_teacher;
  if (distill && teacher == nullptr) {
    own_teacher = model;
    teacher = &*own_teacher;
  }
  if (distill && teacher->heads.size() != n_old)
    throw InputError("train_task: teacher has " + std::to_string(teacher->heads.size()) + " heads, expected " +
                     std::to_string(n_old));

  nn::add_head(model, static_cast<int>(task.classes.size()));
  const std::size_t new_head = n_old;
  const int offset = static_cast<int>(learner.class_order.size());
  learner.class_order.insert(learner.class_order.end(), task.classes.begin(), task.classes.end());
  learner.head_tasks.push_back(task.task_id);

  const MatrixF inputs = data::to_matrix(task.train);
  std::vector<int> local(task.train.size());
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    const auto it = std::find(task.classes.begin(), task.classes.end(), task.train[i].label);
    if (it == task.classes.end())
      throw InputError("train_task: sample label " + std::to_string(task.train[i].label) + " not in task classes");
    local[i] = static_cast<int>(it - task.classes.begin());
  }

  const bool replay = cfg.method == Method::Replay && !learner.buffer.samples.empty();
  MatrixF replay_inputs;
  std::vector<int> replay_labels;
  if (replay) {
    replay_inputs = data::to_matrix(learner.buffer.samples);
    for (const auto& s : learner.buffer.samples) replay_labels.push_back(position_of(learner.class_order, s.label));
  }

  nn::Trainable trainable;
  trainable.heads.assign(model.heads.size(), distill || replay);
  trainable.heads[new_head] = true;

  learner.optim.momentum = static_cast<float>(cfg.momentum);
  learner.optim.weight_decay = static_cast<float>(cfg.weight_decay);
  learner.optim.reset(model);

  const float lambda = static_cast<float>(cfg.lambda);
  const float temperature = static_cast<float>(cfg.temperature);
  const bool ewc = cfg.method == Method::Ewc;

  TrainLog log;
  log.task_index = task_index;
  log.seed = seed;
  const auto n = static_cast<std::size_t>(inputs.rows());
  std::vector<Eigen::Index> order(n);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    learner.optim.lr = static_cast<float>(cfg.lr_at(epoch));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    CounterRng shuffle_rng(seed, {0xE90Cull, static_cast<std::uint64_t>(task_index), static_cast<std::uint64_t>(epoch)});
    shuffle_rng.shuffle(std::span(order));

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, batch_no = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<Eigen::Index> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto nb = static_cast<Eigen::Index>(idx.size());
      MatrixF batch;
      std::vector<int> labels;
      if (replay) {
        const auto nr = std::min<std::size_t>(idx.size(), learner.buffer.samples.size());
        std::vector<Eigen::Index> ridx(learner.buffer.samples.size());
        std::iota(ridx.begin(), ridx.end(), Eigen::Index{0});
        CounterRng rr(seed, {0x2E91Aull, static_cast<std::uint64_t>(task_index), static_cast<std::uint64_t>(epoch),
                             batch_no});
        rr.shuffle(std::span(ridx));
        ridx.resize(nr);
        batch.resize(nb + static_cast<Eigen::Index>(nr), inputs.cols());
        batch.topRows(nb) = inputs(idx, Eigen::all);
        batch.bottomRows(static_cast<Eigen::Index>(nr)) = replay_inputs(ridx, Eigen::all);
        for (auto i : idx) labels.push_back(offset + local[static_cast<std::size_t>(i)]);
        for (auto i : ridx) labels.push_back(replay_labels[static_cast<std::size_t>(i)]);
      } else {
        batch = inputs(idx, Eigen::all);
        for (auto i : idx) labels.push_back(local[static_cast<std::size_t>(i)]);
      }

      const auto fwd = nn::forward_features(model, batch);
      std::vector<MatrixF> grad_logits(model.heads.size());
      double loss = 0.0;
      if (replay) {
        const auto ce = nn::cross_entropy<float>(nn::concat_logits(fwd.logits), labels);
        loss += ce.loss;
        Eigen::Index col = 0;
        for (std::size_t k = 0; k < model.heads.size(); ++k) {
          const auto w = model.heads[k].fan_out();
          grad_logits[k] = ce.grad.middleCols(col, w);
          col += w;
        }
      } else {
        auto ce = nn::cross_entropy<float>(fwd.logits[new_head], labels);
        loss += ce.loss;
        grad_logits[new_head] = std::move(ce.grad);
      }
      if (distill) {
        const auto tfwd = nn::forward_features(*teacher, batch);
        const std::vector<MatrixF> student(fwd.logits.begin(), fwd.logits.begin() + static_cast<std::ptrdiff_t>(n_old));
        const auto kd = nn::lwf_distillation_grad<float>(student, tfwd.logits, temperature);
        loss += static_cast<double>(lambda) * kd.loss;
        for (std::size_t k = 0; k < n_old; ++k) {
          if (grad_logits[k].size() == 0)
            grad_logits[k] = lambda * kd.grads[k];
          else
            grad_logits[k] += lambda * kd.grads[k];
        }
      }
      if (ewc) loss += nn::ewc_penalty(model, learner.ewc, lambda);
      if (!std::isfinite(loss))
        throw NumericError("train_task: non-finite loss in task " + std::to_string(task_index) + ", epoch " +
                           std::to_string(epoch));

      auto grads = nn::backward(model, batch, fwd, grad_logits);
      if (cfg.clip_grad_norm > 0) nn::clip_global_norm(grads, static_cast<float>(cfg.clip_grad_norm));
      nn::sgd_step(model, grads, learner.optim, trainable);
      if (ewc) nn::ewc_proximal(model, learner.ewc, lambda, learner.optim.lr);

      loss_sum += loss * static_cast<double>(nb);
      const auto& head_logits = fwd.logits[new_head];
      for (Eigen::Index r = 0; r < nb; ++r)
        if (argmax_row(head_logits, r) == local[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)])]) ++correct;
      seen += static_cast<std::size_t>(nb);
    }
    EpochLog e;
    e.train_loss = loss_sum / static_cast<double>(seen);
    e.train_acc = static_cast<double>(correct) / static_cast<double>(seen);
    e.val_acc = task.val.empty() ? std::numeric_limits<double>::quiet_NaN() : accuracy(learner, task.val);
    log.epochs.push_back(e);
  }

  if (ewc) {
    auto fisher = nn::fisher_diagonal(model, inputs, local, new_head, derive_key(seed, {0xF15Eull, static_cast<std::uint64_t>(task_index)}));
    nn::consolidate(learner.ewc, model, std::move(fisher));
  }
  if (cfg.method == Method::Replay)
    learner.buffer = replay_update(learner.buffer, task, cfg.buffer_capacity,
                                   derive_key(seed, {0xB0FFull, static_cast<std::uint64_t>(task_index)}));

  log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return log;
}

std::vector<int> predict_class_il(const Learner& learner, std::span<const data::Sample> samples) {
  std::vector<int> out;
  if (samples.empty()) return out;
  if (learner.model.heads.empty()) return std::vector<int>(samples.size(), -1);
  const auto fwd = nn::forward_features(learner.model, data::to_matrix(samples));
  const MatrixF logits = nn::concat_logits(fwd.logits);
  out.reserve(samples.size());
  for (Eigen::Index r = 0; r < logits.rows(); ++r)
    out.push_back(learner.class_order[static_cast<std::size_t>(argmax_row(logits, r))]);
  return out;
}

double accuracy(const Learner& learner, std::span<const data::Sample> samples) {
  if (samples.empty()) return std::numeric_limits<double>::quiet_NaN();
  const auto pred = predict_class_il(learner, samples);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (pred[i] == samples[i].label) ++correct;
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

std::vector<double> eval_class_il(const Learner& learner, const std::vector<const std::vector<data::Sample>*>& tests) {
  std::vector<double> out;
  out.reserve(tests.size());
  for (const auto* t : tests) out.push_back(accuracy(learner, *t));
  return out;
}

std::vector<double> acc_row(const Learner& learner, const data::Stream& stream, std::size_t i) {
  std::vector<const std::vector<data::Sample>*> tests;
  for (std::size_t j = 0; j <= i; ++j) tests.push_back(&stream[j].test);
  return eval_class_il(learner, tests);
}

StreamResult run_stream(const data::Stream& stream, const MethodConfig& cfg, std::uint64_t seed) {
  if (stream.empty() || stream.front().train.empty()) throw InputError("run_stream: empty stream");
  StreamResult out;
  Learner learner = make_learner(static_cast<int>(stream.front().train.front().image.size()), cfg, seed);
  for (std::size_t t = 0; t < stream.size(); ++t) {
    out.checkpoints.push_back(make_checkpoint(learner, static_cast<int>(t)));
    out.logs.push_back(train_task(learner, stream[t], cfg, seed, static_cast<int>(t)));
    out.acc.push_back(acc_row(learner, stream, t));
  }
  out.final = std::move(learner);
  return out;
}

JointResult joint_train(const data::Stream& stream, const std::optional<attack::PoisonPlan>& poison,
                        const MethodConfig& cfg, std::uint64_t seed) {
  if (stream.empty()) throw InputError("joint_train: empty stream");
  const data::Stream source = poison ? attack::apply_plan(stream, *poison) : stream;
  data::TaskDataset merged;
  merged.task_id = 0;
  for (const auto& t : source) {
    merged.classes.insert(merged.classes.end(), t.classes.begin(), t.classes.end());
    merged.train.insert(merged.train.end(), t.train.begin(), t.train.end());
    merged.val.insert(merged.val.end(), t.val.begin(), t.val.end());
  }
  MethodConfig single = cfg;
  single.method = Method::Finetune;
  Learner learner = make_learner(static_cast<int>(merged.train.front().image.size()), single, seed);
  train_task(learner, merged, single, seed, 0);

  JointResult out;
  std::size_t correct_total = 0, count_total = 0;
  for (const auto& t : source) {
    const auto pred = predict_class_il(learner, t.test);
    std::size_t correct = 0;
    std::map<int, std::pair<std::size_t, std::size_t>> per;
    for (std::size_t i = 0; i < t.test.size(); ++i) {
      const bool ok = pred[i] == t.test[i].label;
      correct += ok;
      auto& [c, n] = per[t.test[i].label];
      c += ok;
      ++n;
    }
    for (const auto& [cls, cn] : per) out.per_class[cls] = static_cast<double>(cn.first) / static_cast<double>(cn.second);
    out.per_task.push_back(static_cast<double>(correct) / static_cast<double>(t.test.size()));
    out.per_task_val.push_back(accuracy(learner, t.val));
    correct_total += correct;
    count_total += t.test.size();
  }
  out.total = static_cast<double>(correct_total) / static_cast<double>(count_total);
  return out;
}

}  // namespace stp::cl
