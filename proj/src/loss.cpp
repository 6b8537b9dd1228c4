#include "coldcarve/loss.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coldcarve/error.hpp"

namespace coldcarve {

namespace {

template <typename T>
void check_distribution(const Tensor<T>& p, const char* what) {
  for (std::size_t s = 0; s < p.dim(0); ++s) {
    double sum = 0.0;
    for (T v : p.row(s)) {
      if (!(v >= T{}) || !std::isfinite(static_cast<double>(v)))
        throw Error(ErrorCode::InvalidDistribution, std::string(what) + " row " + std::to_string(s) + " has a negative or non-finite entry");
      sum += static_cast<double>(v);
    }
    if (std::abs(sum - 1.0) > 1e-4)
      throw Error(ErrorCode::InvalidDistribution, std::string(what) + " row " + std::to_string(s) + " sums to " + std::to_string(sum));
  }
}

}  // namespace

template <typename T>
LossResult<T> kl_divergence_loss(const Tensor<T>& student, const Tensor<T>& teacher) {
  if (student.shape() != teacher.shape() || student.rank() != 2)
    throw Error(ErrorCode::ShapeMismatch, "student and teacher outputs must be equally shaped [N, K]");
  check_distribution(student, "student");
  check_distribution(teacher, "teacher");
  const std::size_t n = student.dim(0);
  LossResult<T> r;
  r.grad = Tensor<T>(student.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < student.size(); ++i) {
    const double t = teacher[i];
    const double s = std::max(static_cast<double>(student[i]), kProbabilityFloor);
    if (t > 0.0) total += t * (std::log(t) - std::log(s));
    r.grad[i] = static_cast<T>((static_cast<double>(student[i]) - t) / static_cast<double>(n));
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename T>
LossResult<T> cross_entropy_loss(const Tensor<T>& probabilities, std::span<const int> labels) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != labels.size())
    throw Error(ErrorCode::ShapeMismatch, "cross entropy expects [N, K] probabilities and N labels");
  const std::size_t n = probabilities.dim(0), k = probabilities.dim(1);
  LossResult<T> r;
  r.grad = Tensor<T>(probabilities.shape());
  double total = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    const auto label = static_cast<std::size_t>(labels[s]);
    if (label >= k) throw Error(ErrorCode::InvalidArgument, "label out of range");
    total -= std::log(std::max(static_cast<double>(probabilities[s * k + label]), kProbabilityFloor));
    for (std::size_t c = 0; c < k; ++c)
      r.grad[s * k + c] = static_cast<T>((probabilities[s * k + c] - (c == label ? T(1) : T{})) / static_cast<T>(n));
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template <typename T>
LossResult<T> mse_loss(const Tensor<T>& output, const Tensor<T>& target) {
  if (output.shape() != target.shape()) throw Error(ErrorCode::ShapeMismatch, "mse expects equal shapes");
  const std::size_t n = output.dim(0);
  LossResult<T> r;
  r.grad_is_logits = false;
  r.grad = Tensor<T>(output.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < output.size(); ++i) {
    const double d = static_cast<double>(output[i]) - static_cast<double>(target[i]);
    total += d * d;
    r.grad[i] = static_cast<T>(2.0 * d / static_cast<double>(n));
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

template LossResult<float> kl_divergence_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> kl_divergence_loss(const Tensor<double>&, const Tensor<double>&);
template LossResult<float> cross_entropy_loss(const Tensor<float>&, std::span<const int>);
template LossResult<double> cross_entropy_loss(const Tensor<double>&, std::span<const int>);
template LossResult<float> mse_loss(const Tensor<float>&, const Tensor<float>&);
template LossResult<double> mse_loss(const Tensor<double>&, const Tensor<double>&);

}  // namespace coldcarve
