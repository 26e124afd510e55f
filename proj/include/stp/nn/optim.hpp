#pragma once

#include <cmath>
#include <vector>

#include "stp/nn/model.hpp"

namespace stp::nn {

template <typename Scalar>
struct OptimState {
  Scalar lr = Scalar(0.05);
  Scalar momentum = Scalar(0.9);
  Scalar weight_decay = Scalar(1e-4);
  Model<Scalar> velocity;  // mirrors the parameter shapes

  void reset(const Model<Scalar>& params) { velocity = params.zeros_like(); }
};

/// Which parameter groups an update touches. Frozen groups keep both their
/// values and their velocity.
struct Trainable {
  bool trunk = true;
  std::vector<bool> heads;  // missing entries count as trainable

  bool head(std::size_t k) const { return k >= heads.size() || heads[k]; }
};

/// SGD with momentum and L2 weight decay folded into the gradient:
///   g_eff = g + wd * theta;  v' = momentum * v + g_eff;  theta' = theta - lr * v'.
/// Throws NumericError without touching anything if a gradient is not finite.
template <typename Scalar>
void sgd_step(Model<Scalar>& params, const Model<Scalar>& grads, OptimState<Scalar>& optim,
              const Trainable& trainable = {}) {
  if (!params.same_shape(grads)) throw DimensionError("sgd_step: gradient shapes differ from parameters");
  if (!all_finite(grads)) throw NumericError("sgd_step: non-finite gradient, step refused");
  if (!params.same_shape(optim.velocity)) optim.reset(params);

  auto update = [&](Dense<Scalar>& p, const Dense<Scalar>& g, Dense<Scalar>& v) {
    v.weight = optim.momentum * v.weight + g.weight + optim.weight_decay * p.weight;
    v.bias = optim.momentum * v.bias + g.bias + optim.weight_decay * p.bias;
    p.weight -= optim.lr * v.weight;
    p.bias -= optim.lr * v.bias;
  };
  if (trainable.trunk)
    for (std::size_t l = 0; l < params.trunk.size(); ++l)
      update(params.trunk[l], grads.trunk[l], optim.velocity.trunk[l]);
  for (std::size_t k = 0; k < params.heads.size(); ++k)
    if (trainable.head(k)) update(params.heads[k], grads.heads[k], optim.velocity.heads[k]);
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <typename Scalar>
Scalar clip_global_norm(Model<Scalar>& grads, Scalar max_norm) {
  double sq = 0.0;
  for (const auto* l : grads.layers())
    sq += static_cast<double>(l->weight.squaredNorm()) + static_cast<double>(l->bias.squaredNorm());
  const auto norm = static_cast<Scalar>(std::sqrt(sq));
  if (norm > max_norm) {
    const Scalar s = max_norm / norm;
    for (auto* l : grads.layers()) {
      l->weight *= s;
      l->bias *= s;
    }
  }
  return norm;
}

}  // namespace stp::nn
