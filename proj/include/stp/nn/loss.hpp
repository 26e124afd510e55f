#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "stp/nn/model.hpp"

namespace stp::nn {

/// Row-wise log-softmax using the max-shift trick.
template <typename Scalar>
Matrix<Scalar> log_softmax(const Matrix<Scalar>& logits) {
  Matrix<Scalar> out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const Scalar m = logits.row(r).maxCoeff();
    const Scalar lse = m + std::log((logits.row(r).array() - m).exp().sum());
    out.row(r) = logits.row(r).array() - lse;
  }
  return out;
}

template <typename Scalar>
struct LossGrad {
  Scalar loss = 0;
  Matrix<Scalar> grad;
};

/// Mean negative log-likelihood over the batch; gradient rows are
/// (softmax - onehot) / B.
template <typename Scalar>
LossGrad<Scalar> cross_entropy(const Matrix<Scalar>& logits, std::span<const int> labels) {
  const auto B = logits.rows();
  const auto K = logits.cols();
  if (static_cast<Eigen::Index>(labels.size()) != B)
    throw InputError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                     std::to_string(B));
  if (B == 0) throw InputError("cross_entropy: empty batch");
  LossGrad<Scalar> out;
  const Matrix<Scalar> logp = log_softmax(logits);
  out.grad = logp.array().exp();
  double total = 0.0;
  for (Eigen::Index r = 0; r < B; ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= K)
      throw InputError("cross_entropy: label " + std::to_string(y) + " out of range [0," + std::to_string(K) + ")");
    total -= static_cast<double>(logp(r, y));
    out.grad(r, y) -= Scalar(1);
  }
  out.grad /= static_cast<Scalar>(B);
  out.loss = static_cast<Scalar>(total / static_cast<double>(B));
  return out;
}

template <typename Scalar>
struct DistillGrad {
  Scalar loss = 0;
  std::vector<Matrix<Scalar>> grads;  // d loss / d student logits, per head
};

/// Learning-without-forgetting distillation summed over old heads:
///   sum_k  T^2 * mean_b KL( softmax(teacher_k / T) || softmax(student_k / T) ).
/// The T^2 factor keeps gradient magnitudes independent of T.
template <typename Scalar>
DistillGrad<Scalar> lwf_distillation_grad(const std::vector<Matrix<Scalar>>& student,
                                          const std::vector<Matrix<Scalar>>& teacher, Scalar temperature) {
  if (student.size() != teacher.size())
    throw InputError("lwf_distillation: " + std::to_string(student.size()) + " student heads vs " +
                     std::to_string(teacher.size()) + " teacher heads");
  if (!(temperature > Scalar(0))) throw InputError("lwf_distillation: temperature must be positive");
  DistillGrad<Scalar> out;
  double total = 0.0;
  for (std::size_t k = 0; k < student.size(); ++k) {
    const auto& s = student[k];
    const auto& t = teacher[k];
    if (s.rows() != t.rows() || s.cols() != t.cols())
      throw InputError("lwf_distillation: head " + std::to_string(k) + " shape mismatch");
    const auto B = s.rows();
    const Matrix<Scalar> log_ps = log_softmax<Scalar>(s / temperature);
    const Matrix<Scalar> log_pt = log_softmax<Scalar>(t / temperature);
    const Matrix<Scalar> pt = log_pt.array().exp();
    double head_sum = 0.0;
    for (Eigen::Index r = 0; r < B; ++r) {
      const double kl = static_cast<double>((pt.row(r).array() * (log_pt.row(r) - log_ps.row(r)).array()).sum());
      head_sum += std::max(0.0, kl);
    }
    total += static_cast<double>(temperature * temperature) * head_sum / static_cast<double>(B);
    Matrix<Scalar> g = log_ps.array().exp();
    g -= pt;
    g *= temperature / static_cast<Scalar>(B);
    out.grads.push_back(std::move(g));
  }
  out.loss = static_cast<Scalar>(total);
  return out;
}

template <typename Scalar>
Scalar lwf_distillation(const std::vector<Matrix<Scalar>>& student, const std::vector<Matrix<Scalar>>& teacher,
                        Scalar temperature) {
  return lwf_distillation_grad(student, teacher, temperature).loss;
}

}  // namespace stp::nn
