#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "coldcarve/tensor.hpp"

namespace coldcarve {

// Loss value plus its gradient. `grad` is taken w.r.t. the logits feeding the
// final Softmax for the probability losses, and w.r.t. the raw output for MSE.
template <typename T>
struct LossResult {
  double loss = 0.0;
  Tensor<T> grad;
  bool grad_is_logits = true;
};

inline constexpr double kProbabilityFloor = 1e-12;

// Mean over the batch of sum_k t_k * log(t_k / s_k), with s clamped below at
// 1e-12. Throws InvalidDistribution when a row is not a distribution.
template <typename T>
LossResult<T> kl_divergence_loss(const Tensor<T>& student_softmax, const Tensor<T>& teacher_softmax);

// Mean negative log-likelihood of the labelled class.
template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& probabilities, std::span<const int> labels);

// Mean over the batch of sum_k (y_k - target_k)^2.
template <typename T>
LossResult<T> mse_loss(const Tensor<T>& output, const Tensor<T>& target);

}  // namespace coldcarve
