#pragma once

#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "stp/nn/loss.hpp"
#include "stp/nn/model.hpp"

namespace stp::nn {

/// Trunk-only quadratic anchor. `fisher` and `anchor` mirror the trunk layers.
template <typename Scalar>
struct EwcState {
  std::vector<Dense<Scalar>> anchor;
  std::vector<Dense<Scalar>> fisher;
  Scalar merge_coeff = Scalar(0.5);

  bool empty() const { return anchor.empty(); }

  bool operator==(const EwcState& o) const {
    return anchor == o.anchor && fisher == o.fisher && merge_coeff == o.merge_coeff;
  }
};

namespace detail {
template <typename Scalar>
void check_aligned(const std::vector<Dense<Scalar>>& trunk, const EwcState<Scalar>& ewc, const char* who) {
  bool ok = trunk.size() == ewc.anchor.size() && trunk.size() == ewc.fisher.size();
  for (std::size_t l = 0; ok && l < trunk.size(); ++l) {
    ok = trunk[l].fan_in() == ewc.anchor[l].fan_in() && trunk[l].fan_out() == ewc.anchor[l].fan_out() &&
         trunk[l].fan_in() == ewc.fisher[l].fan_in() && trunk[l].fan_out() == ewc.fisher[l].fan_out();
  }
  if (!ok) throw InputError(std::string(who) + ": EWC state does not match trunk shapes");
}
}  // namespace detail

/// lambda/2 * sum_i F_i (theta_i - anchor_i)^2 over trunk parameters.
template <typename Scalar>
Scalar ewc_penalty(const Model<Scalar>& params, const EwcState<Scalar>& ewc, Scalar lambda) {
  if (ewc.empty()) return Scalar(0);
  detail::check_aligned(params.trunk, ewc, "ewc_penalty");
  double total = 0.0;
  for (std::size_t l = 0; l < params.trunk.size(); ++l) {
    const auto& p = params.trunk[l];
    const auto& a = ewc.anchor[l];
    const auto& f = ewc.fisher[l];
    total += static_cast<double>((f.weight.array() * (p.weight - a.weight).array().square()).sum());
    total += static_cast<double>((f.bias.array() * (p.bias - a.bias).array().square()).sum());
  }
  return static_cast<Scalar>(0.5 * static_cast<double>(lambda) * total);
}

/// Adds lambda * F * (theta - anchor) into `grads`.
template <typename Scalar>
void add_ewc_gradient(const Model<Scalar>& params, const EwcState<Scalar>& ewc, Scalar lambda, Model<Scalar>& grads) {
  if (ewc.empty()) return;
  detail::check_aligned(params.trunk, ewc, "add_ewc_gradient");
  for (std::size_t l = 0; l < params.trunk.size(); ++l) {
    const auto& p = params.trunk[l];
    const auto& a = ewc.anchor[l];
    const auto& f = ewc.fisher[l];
    grads.trunk[l].weight.array() += lambda * f.weight.array() * (p.weight - a.weight).array();
    grads.trunk[l].bias.array() += lambda * f.bias.array() * (p.bias - a.bias).array();
  }
}

/// Proximal step for the quadratic anchor: the exact minimiser of
///   lr*lambda/2 * F (x - anchor)^2 + 1/2 (x - theta)^2
/// which is (theta + lr*lambda*F*anchor) / (1 + lr*lambda*F). Unlike an
/// explicit gradient step it stays stable for arbitrarily large lambda*F.
template <typename Scalar>
void ewc_proximal(Model<Scalar>& params, const EwcState<Scalar>& ewc, Scalar lambda, Scalar lr) {
  if (ewc.empty() || lambda == Scalar(0)) return;
  detail::check_aligned(params.trunk, ewc, "ewc_proximal");
  const Scalar s = lr * lambda;
  for (std::size_t l = 0; l < params.trunk.size(); ++l) {
    auto& p = params.trunk[l];
    const auto& a = ewc.anchor[l];
    const auto& f = ewc.fisher[l];
    p.weight.array() = (p.weight.array() + s * f.weight.array() * a.weight.array()) / (Scalar(1) + s * f.weight.array());
    p.bias.array() = (p.bias.array() + s * f.bias.array() * a.bias.array()) / (Scalar(1) + s * f.bias.array());
  }
}

/// Empirical diagonal Fisher of the trunk: mean over samples of the squared
/// gradient of log p(y_true | x) under head `head`. Samples are visited one at
/// a time in a seeded order.
template <typename Scalar>
std::vector<Dense<Scalar>> fisher_diagonal(const Model<Scalar>& model, const Matrix<Scalar>& inputs,
                                           std::span<const int> labels, std::size_t head, std::uint64_t seed) {
  const auto n = inputs.rows();
  if (n == 0) throw InputError("fisher_diagonal: empty dataset");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InputError("fisher_diagonal: label count mismatch");
  if (head >= model.heads.size()) throw InputError("fisher_diagonal: model has no head " + std::to_string(head));

  std::vector<Dense<Scalar>> fisher;
  for (const auto& l : model.trunk) fisher.push_back(Dense<Scalar>::zeros(l.fan_in(), l.fan_out()));

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  CounterRng rng(seed, {0xF15E7ull});
  rng.shuffle(std::span(order));

  std::vector<Matrix<Scalar>> grad_logits(model.heads.size());
  for (auto i : order) {
    const Matrix<Scalar> x = inputs.row(i);
    const auto fwd = forward_features(model, x);
    const int y = labels[static_cast<std::size_t>(i)];
    grad_logits[head] = cross_entropy<Scalar>(fwd.logits[head], std::span(&y, 1)).grad;
    const auto g = backward(model, x, fwd, grad_logits);
    for (std::size_t l = 0; l < fisher.size(); ++l) {
      fisher[l].weight.array() += g.trunk[l].weight.array().square();
      fisher[l].bias.array() += g.trunk[l].bias.array().square();
    }
  }
  for (auto& f : fisher) {
    f.weight /= static_cast<Scalar>(n);
    f.bias /= static_cast<Scalar>(n);
  }
  return fisher;
}

/// F <- gamma * F_old + (1 - gamma) * F_task; the first task takes F_task as is.
template <typename Scalar>
void consolidate(EwcState<Scalar>& ewc, const Model<Scalar>& params, std::vector<Dense<Scalar>> task_fisher) {
  if (ewc.fisher.empty()) {
    ewc.fisher = std::move(task_fisher);
  } else {
    const Scalar g = ewc.merge_coeff;
    for (std::size_t l = 0; l < ewc.fisher.size(); ++l) {
      ewc.fisher[l].weight = g * ewc.fisher[l].weight + (Scalar(1) - g) * task_fisher[l].weight;
      ewc.fisher[l].bias = g * ewc.fisher[l].bias + (Scalar(1) - g) * task_fisher[l].bias;
    }
  }
  ewc.anchor = params.trunk;
}

}  // namespace stp::nn
