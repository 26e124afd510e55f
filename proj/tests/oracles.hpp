#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance binary. Nothing here calls the code path it is checking.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "stp/attacks.hpp"
#include "stp/data/dataset.hpp"
#include "stp/defense/detector.hpp"
#include "stp/nn/ewc.hpp"
#include "stp/nn/loss.hpp"
#include "stp/nn/model.hpp"
#include "stp/rng.hpp"

namespace oracle {

using stp::nn::MatrixD;
using stp::nn::Model;

enum class LossKind { Ce, CeLwf, CeEwc };

// Small double-precision problem: two heads (old: 3 classes, new: 2), one
// teacher, one EWC state with random anchor and Fisher.
struct GradProblem {
  Model<double> model;
  Model<double> teacher;
  stp::nn::EwcState<double> ewc;
  MatrixD batch;
  std::vector<int> labels;
  double lambda = 0;
  double temperature = 2.0;
  LossKind kind = LossKind::Ce;

  static GradProblem make(LossKind kind, std::uint64_t seed) {
    GradProblem p;
    p.kind = kind;
    const int widths[] = {9, 7};
    p.model = stp::nn::make_model<double>(6, widths, seed);
    stp::nn::add_head(p.model, 3);
    stp::nn::add_head(p.model, 2);
    stp::CounterRng rng(seed, {0xFDull});
    // Nudge biases off zero so no unit sits on a kink.
    for (auto* l : p.model.layers())
      for (Eigen::Index i = 0; i < l->bias.size(); ++i) l->bias(i) = rng.uniform(0.05, 0.3);
    p.batch = MatrixD(8, 6);
    for (Eigen::Index i = 0; i < p.batch.size(); ++i) p.batch.data()[i] = rng.uniform(-1, 1);
    // Central differences straddle a ReLU kink when a pre-activation sits
    // within ~h of zero; redraw that layer's biases until every one clears.
    MatrixD x = p.batch;
    for (auto& l : p.model.trunk) {
      MatrixD z;
      for (;;) {
        z = x * l.weight;
        z.rowwise() += l.bias;
        if (z.cwiseAbs().minCoeff() > 0.02) break;
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = rng.uniform(0.05, 0.3);
      }
      x = z.cwiseMax(0.0);
    }
    p.teacher = p.model;
    for (auto* l : p.teacher.layers())
      for (Eigen::Index i = 0; i < l->weight.size(); ++i) l->weight.data()[i] += rng.uniform(-0.3, 0.3);
    for (int i = 0; i < 8; ++i) p.labels.push_back(static_cast<int>(rng.below(2)));
    if (kind == LossKind::CeLwf) p.lambda = 10.0;
    if (kind == LossKind::CeEwc) {
      p.lambda = 50.0;
      for (const auto& l : p.model.trunk) {
        auto a = l, f = l;
        for (Eigen::Index i = 0; i < a.weight.size(); ++i) {
          a.weight.data()[i] += rng.uniform(-0.2, 0.2);
          f.weight.data()[i] = rng.uniform(0, 0.1);
        }
        for (Eigen::Index i = 0; i < a.bias.size(); ++i) {
          a.bias(i) += rng.uniform(-0.2, 0.2);
          f.bias(i) = rng.uniform(0, 0.1);
        }
        p.ewc.anchor.push_back(a);
        p.ewc.fisher.push_back(f);
      }
    }
    return p;
  }

  double loss(const Model<double>& m) const {
    const auto fwd = stp::nn::forward_features(m, batch);
    double l = stp::nn::cross_entropy<double>(fwd.logits[1], labels).loss;
    if (kind == LossKind::CeLwf) {
      const auto t = stp::nn::forward_features(teacher, batch);
      l += lambda * stp::nn::lwf_distillation<double>({fwd.logits[0]}, {t.logits[0]}, temperature);
    }
    if (kind == LossKind::CeEwc) l += stp::nn::ewc_penalty(m, ewc, lambda);
    return l;
  }

  Model<double> analytic() const {
    const auto fwd = stp::nn::forward_features(model, batch);
    std::vector<MatrixD> g(2);
    g[1] = stp::nn::cross_entropy<double>(fwd.logits[1], labels).grad;
    if (kind == LossKind::CeLwf) {
      const auto t = stp::nn::forward_features(teacher, batch);
      g[0] = lambda * stp::nn::lwf_distillation_grad<double>({fwd.logits[0]}, {t.logits[0]}, temperature).grads[0];
    }
    auto grads = stp::nn::backward(model, batch, fwd, g);
    if (kind == LossKind::CeEwc) stp::nn::add_ewc_gradient(model, ewc, lambda, grads);
    return grads;
  }
};

inline double& param_at(Model<double>& m, std::size_t flat) {
  for (auto* l : m.layers()) {
    const auto nw = static_cast<std::size_t>(l->weight.size());
    if (flat < nw) return l->weight.data()[flat];
    flat -= nw;
    const auto nb = static_cast<std::size_t>(l->bias.size());
    if (flat < nb) return l->bias(static_cast<Eigen::Index>(flat));
    flat -= nb;
  }
  throw std::out_of_range("param_at");
}

// Worst relative error |a - n| / max(|a| + |n|, 1e-8) over `samples` randomly
// chosen parameters, n from central differences with step h.
inline double finite_difference_error(LossKind kind, std::uint64_t seed, int samples = 100, double h = 1e-3) {
  auto p = GradProblem::make(kind, seed);
  auto grads = p.analytic();
  const auto total = static_cast<std::size_t>(p.model.parameter_count());
  stp::CounterRng pick(seed, {0x5A3Dull});
  double worst = 0;
  for (int s = 0; s < samples; ++s) {
    const auto idx = static_cast<std::size_t>(pick.below(total));
    auto plus = p.model, minus = p.model;
    param_at(plus, idx) += h;
    param_at(minus, idx) -= h;
    const double numeric = (p.loss(plus) - p.loss(minus)) / (2 * h);
    const double a = param_at(grads, idx);
    worst = std::max(worst, std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-8));
  }
  return worst;
}

// Poisoning laws on one random draw. Returns false on the first violation.
inline bool poison_laws_hold(std::uint64_t draw) {
  stp::CounterRng rng(draw, {0xE91ull});
  const int n_classes = 1 + static_cast<int>(rng.below(6));
  const int class_size = 1 + static_cast<int>(rng.below(23));
  stp::data::TaskDataset task;
  task.task_id = 1;
  for (int c = 0; c < n_classes; ++c) {
    const int cls = 10 + 3 * c;
    task.classes.push_back(cls);
    for (int i = 0; i < class_size; ++i) {
      stp::data::Sample s;
      s.image = stp::data::RasterImage(8, 8, 1);
      for (auto& px : s.image.pixels) px = static_cast<float>(rng.uniform());
      s.label = cls;
      task.train.push_back(s);
      if (i % 3 == 0) task.val.push_back(s);
    }
  }
  stp::attack::PoisonSpec spec;
  spec.pcp = 1 + 99 * rng.uniform();
  spec.pp = 1 + 99 * rng.uniform();
  spec.pn = 1 + static_cast<int>(rng.below(5));
  spec.severity = 1 + static_cast<int>(rng.below(5));
  spec.seed = rng.next_u64();
  const auto out = stp::attack::poison_task(task, spec);

  const long expected_classes = std::max<long>(1, static_cast<long>(std::floor(spec.pcp / 100.0 * n_classes + 0.5)));
  // Per split: every class has flag count 0 or round(pp/100 n_c); the number
  // of flagged classes is the pcp count; unflagged samples are untouched.
  auto flagged_set = [&](const std::vector<stp::data::Sample>& before, const std::vector<stp::data::Sample>& after,
                         std::vector<int>& flagged) {
    if (before.size() != after.size()) return false;
    long want = -1;
    for (int cls : task.classes) {
      long n_c = 0, hits = 0;
      for (std::size_t i = 0; i < before.size(); ++i) {
        if (before[i].label != cls) continue;
        ++n_c;
        if (after[i].label != cls) return false;
        if (after[i].poisoned) ++hits;
        else if (!(after[i] == before[i])) return false;
      }
      want = static_cast<long>(std::floor(spec.pp / 100.0 * static_cast<double>(n_c) + 0.5));
      if (hits != 0 && hits != want) return false;
      if (hits > 0) flagged.push_back(cls);
    }
    if (want == 0) return flagged.empty();
    return static_cast<long>(flagged.size()) == expected_classes;
  };
  std::vector<int> train_flags, val_flags;
  if (!flagged_set(task.train, out.train, train_flags) || !flagged_set(task.val, out.val, val_flags)) return false;
  if (!train_flags.empty() && !val_flags.empty() && train_flags != val_flags) return false;
  return out.test == task.test;
}

inline double deg(double rad) { return rad * 180.0 / 3.14159265358979323846; }

// Spearman rank correlation with average ranks for ties.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = (static_cast<double>(i + j) / 2.0) + 1.0;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Precision/recall at threshold t by direct counting (flag when score >= t).
struct Confusion {
  int tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Confusion confusion_at(const std::vector<stp::defense::ScoredTask>& s, double t) {
  Confusion c;
  for (const auto& x : s) {
    const bool flag = x.beta >= t;
    if (flag && x.poisoned) ++c.tp;
    else if (flag) ++c.fp;
    else if (x.poisoned) ++c.fn;
    else ++c.tn;
  }
  return c;
}

// Compares pr_curve output against exhaustive enumeration over every
// distinct score. Returns the largest absolute discrepancy (inf on shape
// mismatch).
inline double pr_curve_discrepancy(const std::vector<stp::defense::ScoredTask>& s) {
  const auto curve = stp::defense::pr_curve(s);
  std::vector<double> thresholds;
  for (const auto& x : s) thresholds.push_back(x.beta);
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  if (curve.size() != thresholds.size()) return INFINITY;
  double worst = 0;
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    const auto c = confusion_at(s, thresholds[i]);
    const double precision = c.tp + c.fp == 0 ? 1.0 : static_cast<double>(c.tp) / (c.tp + c.fp);
    const double recall = static_cast<double>(c.tp) / (c.tp + c.fn);
    worst = std::max({worst, std::abs(curve[i].threshold - thresholds[i]), std::abs(curve[i].precision - precision),
                      std::abs(curve[i].recall - recall)});
  }
  return worst;
}

}  // namespace oracle
