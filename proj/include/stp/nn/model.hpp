#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stp/error.hpp"
#include "stp/rng.hpp"

namespace stp::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using MatrixF = Matrix<float>;
using MatrixD = Matrix<double>;

/// Fully connected layer computing `x * weight + bias` for row-major batches.
/// `weight` is stored input-major: [fan_in, fan_out].
template <typename Scalar>
struct Dense {
  Matrix<Scalar> weight;
  RowVector<Scalar> bias;

  Eigen::Index fan_in() const { return weight.rows(); }
  Eigen::Index fan_out() const { return weight.cols(); }
  Eigen::Index size() const { return weight.size() + bias.size(); }

  static Dense zeros(Eigen::Index in, Eigen::Index out) {
    return {Matrix<Scalar>::Zero(in, out), RowVector<Scalar>::Zero(out)};
  }

  template <typename To>
  Dense<To> cast() const {
    return {weight.template cast<To>(), bias.template cast<To>()};
  }

  bool operator==(const Dense& o) const {
    return weight.rows() == o.weight.rows() && weight.cols() == o.weight.cols() &&
           bias.size() == o.bias.size() && weight == o.weight && bias == o.bias;
  }
};

/// Multi-head network: a rectifier trunk shared by all tasks and one linear
/// head per trained task. The same type doubles as a gradient or velocity
/// container, since those mirror the parameter shapes exactly.
template <typename Scalar>
struct Model {
  std::vector<Dense<Scalar>> trunk;
  std::vector<Dense<Scalar>> heads;
  std::uint64_t seed = 0;

  Eigen::Index input_width() const { return trunk.empty() ? 0 : trunk.front().fan_in(); }
  Eigen::Index feature_width() const { return trunk.empty() ? 0 : trunk.back().fan_out(); }

  Eigen::Index parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& l : trunk) n += l.size();
    for (const auto& h : heads) n += h.size();
    return n;
  }

  /// Global class count across heads, in concatenation order.
  Eigen::Index total_classes() const {
    Eigen::Index n = 0;
    for (const auto& h : heads) n += h.fan_out();
    return n;
  }

  template <typename To>
  Model<To> cast() const {
    Model<To> out;
    out.seed = seed;
    for (const auto& l : trunk) out.trunk.push_back(l.template cast<To>());
    for (const auto& h : heads) out.heads.push_back(h.template cast<To>());
    return out;
  }

  /// Same shapes, all zeros.
  Model zeros_like() const {
    Model out;
    out.seed = seed;
    for (const auto& l : trunk) out.trunk.push_back(Dense<Scalar>::zeros(l.fan_in(), l.fan_out()));
    for (const auto& h : heads) out.heads.push_back(Dense<Scalar>::zeros(h.fan_in(), h.fan_out()));
    return out;
  }

  bool same_shape(const Model& o) const {
    auto eq = [](const auto& a, const auto& b) {
      if (a.size() != b.size()) return false;
      for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].fan_in() != b[i].fan_in() || a[i].fan_out() != b[i].fan_out()) return false;
      return true;
    };
    return eq(trunk, o.trunk) && eq(heads, o.heads);
  }

  bool operator==(const Model& o) const {
    return seed == o.seed && trunk == o.trunk && heads == o.heads;
  }

  // Layers in declaration order: trunk first, then heads.
  std::vector<Dense<Scalar>*> layers() {
    std::vector<Dense<Scalar>*> out;
    for (auto& l : trunk) out.push_back(&l);
    for (auto& h : heads) out.push_back(&h);
    return out;
  }
  std::vector<const Dense<Scalar>*> layers() const {
    std::vector<const Dense<Scalar>*> out;
    for (const auto& l : trunk) out.push_back(&l);
    for (const auto& h : heads) out.push_back(&h);
    return out;
  }
};

/// Glorot-uniform weights, zero bias. The draw for layer `index` is keyed by
/// (seed, index) so it does not depend on how many layers were built before.
template <typename Scalar>
Dense<Scalar> init_dense(Eigen::Index in, Eigen::Index out, std::uint64_t seed, std::uint64_t index) {
  CounterRng rng(seed, {0x1A7E7ull, index});
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Dense<Scalar> layer = Dense<Scalar>::zeros(in, out);
  for (Eigen::Index r = 0; r < in; ++r)
    for (Eigen::Index c = 0; c < out; ++c)
      layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
  return layer;
}

/// Builds a trunk of rectifier layers with the given output widths.
template <typename Scalar>
Model<Scalar> make_model(Eigen::Index input_width, std::span<const int> widths, std::uint64_t seed) {
  if (input_width < 1) throw InputError("make_model: input width must be positive");
  Model<Scalar> m;
  m.seed = seed;
  Eigen::Index in = input_width;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] < 1) throw InputError("make_model: layer width must be positive");
    m.trunk.push_back(init_dense<Scalar>(in, widths[i], seed, i));
    in = widths[i];
  }
  return m;
}

/// Appends a fresh head; the trunk is left untouched.
template <typename Scalar>
void add_head(Model<Scalar>& model, int num_classes) {
  if (num_classes < 1) throw InputError("add_head: num_classes must be >= 1");
  if (model.trunk.empty()) throw StateError("add_head: model has no trunk");
  const auto index = model.trunk.size() + model.heads.size();
  model.heads.push_back(init_dense<Scalar>(model.feature_width(), num_classes, model.seed, index));
}

template <typename Scalar>
struct ForwardResult {
  std::vector<Matrix<Scalar>> activations;  // post-rectifier, one per trunk layer
  std::vector<Matrix<Scalar>> logits;       // one per head
};

template <typename Scalar>
ForwardResult<Scalar> forward_features(const Model<Scalar>& model, const Matrix<Scalar>& batch) {
  if (model.trunk.empty()) throw StateError("forward_features: empty trunk");
  ForwardResult<Scalar> out;
  out.activations.reserve(model.trunk.size());
  const Matrix<Scalar>* x = &batch;
  for (std::size_t l = 0; l < model.trunk.size(); ++l) {
    const auto& layer = model.trunk[l];
    if (x->cols() != layer.fan_in())
      throw DimensionError("trunk layer " + std::to_string(l) + ": expected input width " +
                           std::to_string(layer.fan_in()) + ", got " + std::to_string(x->cols()));
    Matrix<Scalar> z = (*x) * layer.weight;
    z.rowwise() += layer.bias;
    out.activations.push_back(z.cwiseMax(Scalar(0)));
    x = &out.activations.back();
  }
  out.logits.reserve(model.heads.size());
  for (std::size_t k = 0; k < model.heads.size(); ++k) {
    const auto& head = model.heads[k];
    if (x->cols() != head.fan_in())
      throw DimensionError("head " + std::to_string(k) + ": expected input width " +
                           std::to_string(head.fan_in()) + ", got " + std::to_string(x->cols()));
    Matrix<Scalar> z = (*x) * head.weight;
    z.rowwise() += head.bias;
    out.logits.push_back(std::move(z));
  }
  return out;
}

/// Concatenation of all head logits, in head order.
template <typename Scalar>
Matrix<Scalar> concat_logits(const std::vector<Matrix<Scalar>>& logits) {
  Eigen::Index rows = logits.empty() ? 0 : logits.front().rows();
  Eigen::Index cols = 0;
  for (const auto& l : logits) cols += l.cols();
  Matrix<Scalar> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& l : logits) {
    out.middleCols(c, l.cols()) = l;
    c += l.cols();
  }
  return out;
}

/// Reverse pass. `grad_logits[k]` is dLoss/dLogits for head k; an empty
/// matrix means the head does not contribute. Returns gradients shaped like
/// the model (heads without a gradient come back zero).
template <typename Scalar>
Model<Scalar> backward(const Model<Scalar>& model, const Matrix<Scalar>& batch,
                       const ForwardResult<Scalar>& fwd, const std::vector<Matrix<Scalar>>& grad_logits) {
  if (grad_logits.size() != model.heads.size())
    throw DimensionError("backward: expected " + std::to_string(model.heads.size()) + " head gradients");
  Model<Scalar> grads = model.zeros_like();
  const Matrix<Scalar>& features = fwd.activations.back();
  Matrix<Scalar> g = Matrix<Scalar>::Zero(features.rows(), features.cols());
  for (std::size_t k = 0; k < model.heads.size(); ++k) {
    const auto& gl = grad_logits[k];
    if (gl.size() == 0) continue;
    grads.heads[k].weight.noalias() = features.transpose() * gl;
    grads.heads[k].bias = gl.colwise().sum();
    g.noalias() += gl * model.heads[k].weight.transpose();
  }
  for (std::size_t l = model.trunk.size(); l-- > 0;) {
    const Matrix<Scalar>& act = fwd.activations[l];
    g = (act.array() > Scalar(0)).select(g, Scalar(0));
    const Matrix<Scalar>& input = l == 0 ? batch : fwd.activations[l - 1];
    grads.trunk[l].weight.noalias() = input.transpose() * g;
    grads.trunk[l].bias = g.colwise().sum();
    if (l > 0) {
      Matrix<Scalar> prev = g * model.trunk[l].weight.transpose();
      g = std::move(prev);
    }
  }
  return grads;
}

template <typename Scalar>
bool all_finite(const Model<Scalar>& m) {
  for (const auto* l : m.layers())
    if (!l->weight.allFinite() || !l->bias.allFinite()) return false;
  return true;
}

}  // namespace stp::nn
