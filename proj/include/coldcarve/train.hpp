#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "coldcarve/dataset.hpp"
#include "coldcarve/network.hpp"

namespace coldcarve {

enum class LrSchedule { None, HalveEvery10, Factor09Every10, HalveEvery50 };
enum class LossKind { CrossEntropy, KlDivergence, Mse };

std::string_view schedule_name(LrSchedule s);
LrSchedule schedule_from_name(std::string_view name);  // throws Config

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  LrSchedule lr_schedule = LrSchedule::None;
  std::uint64_t seed = 0;
  // Probability that a parameter element's gradient is dropped in a step.
  // 0 disables masking and draws nothing from the mask stream.
  double gradient_dropout = 0.0;
  // Stop once the epoch loss has not improved for more than this many epochs.
  std::optional<std::size_t> early_stop_patience;

  void validate() const;  // throws InvalidArgument
};

double learning_rate_at(const TrainConfig& cfg, std::size_t epoch);

struct TrainHistory {
  double initial_loss = 0.0;        // full-data loss before the first step
  std::vector<double> epoch_loss;   // mean minibatch loss per epoch
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;       // 1-based epoch with the lowest loss
  bool early_stopped = false;
  std::size_t masked_updates = 0;   // parameter-element updates skipped by the mask
  std::size_t total_updates = 0;
};

// Targets are class labels (cross entropy) or per-sample target rows (KL
// against soft labels, MSE against regression targets).
using TrainTargets = std::variant<std::vector<int>, Tensor<float>>;

// Minibatch Adam. Shuffling, dropout and gradient masks use independent
// generators derived from cfg.seed, so enabling one never perturbs another.
TrainHistory train(Network<float>& net, const Tensor<float>& inputs, const TrainTargets& targets,
                   const TrainConfig& cfg, LossKind loss);

double evaluate_loss(const Network<float>& net, const Tensor<float>& inputs, const TrainTargets& targets,
                     LossKind loss);

// Inference-mode outputs, computed in chunks.
Tensor<float> predict(const Network<float>& net, const Tensor<float>& inputs, std::size_t chunk = 512);

// Fraction of argmax-correct predictions; throws UnlabeledData.
double accuracy(const Network<float>& net, const Dataset& data);

// x + epsilon * sign(grad_x CE(net(x), label)), clipped to [0, 1].
Tensor<float> fgsm(const Network<float>& net, const Tensor<float>& x, const std::vector<int>& labels, float epsilon);

}  // namespace coldcarve
