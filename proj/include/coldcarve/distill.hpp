#pragma once

#include <string>

#include "coldcarve/dataset.hpp"
#include "coldcarve/network.hpp"
#include "coldcarve/train.hpp"

namespace coldcarve {

// Black-box access to the victim: softmax outputs only. Holds its own copy
// of the network so no caller can update the teacher through it.
class TeacherOracle {
 public:
  explicit TeacherOracle(Network<float> teacher);  // throws InvalidArgument without a final Softmax
  Tensor<float> query(const Tensor<float>& inputs) const;
  double accuracy(const Dataset& data) const;
  const IRModel& spec() const { return net_.spec(); }

 private:
  Network<float> net_;
};

enum class DistillMode { D1, D2 };
std::string_view distill_mode_name(DistillMode m);
DistillMode distill_mode_from_name(std::string_view name);  // throws Config

struct DistillConfig {
  DistillMode mode = DistillMode::D2;
  double gradient_dropout_rate = 0.5;  // D2 only
  TrainConfig train;
  void validate() const;  // rate in [0, 1); throws InvalidArgument
};

struct DistillResult {
  Network<float> student;
  TrainHistory history;
};

// KL distillation of the student against teacher softmax outputs on the
// unlabeled recovery set. D2 additionally drops each parameter element's
// gradient with probability gradient_dropout_rate in every step.
DistillResult distill(Network<float> student, const TeacherOracle& teacher, const Dataset& recovery,
                      const DistillConfig& cfg);
DistillResult distill_d1(Network<float> student, const TeacherOracle& teacher, const Dataset& recovery,
                         DistillConfig cfg);
DistillResult distill_d2(Network<float> student, const TeacherOracle& teacher, const Dataset& recovery,
                         DistillConfig cfg);

// Fresh initialisation from cfg.seed, cross entropy on labelled data. Early
// stopping defaults to a patience of 2 epochs when cfg leaves it unset.
DistillResult retrain_scratch(const IRModel& spec, const Dataset& data, TrainConfig cfg);

// Student initialisation for correction: carved values with out-of-range and
// tiny entries zeroed.
Network<float> zero_out_initialization(const IRModel& spec, std::span<const float> carved, double lo = -5.0,
                                       double hi = 5.0, double eps = 1e-5);

struct DistillReport {
  std::string stage;  // d1, d2 or retrain
  DistillConfig config;
  std::size_t recovery_size = 0;
  TrainHistory history;
  double rad_before = 0.0;
  double rad_after = 0.0;

  std::size_t epochs_to_converge() const { return history.best_epoch; }
  std::string to_text() const;
};

}  // namespace coldcarve
