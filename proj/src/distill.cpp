#include "coldcarve/distill.hpp"

#include <iomanip>
#include <sstream>

#include "coldcarve/carver.hpp"
#include "coldcarve/error.hpp"

namespace coldcarve {

TeacherOracle::TeacherOracle(Network<float> teacher) : net_(std::move(teacher)) {
  const auto& layers = net_.spec().layers;
  if (layers.empty() || layers.back().kind != LayerKind::Softmax)
    throw Error(ErrorCode::InvalidArgument, "teacher must end in Softmax");
  net_.set_training(false);
}

Tensor<float> TeacherOracle::query(const Tensor<float>& inputs) const { return predict(net_, inputs); }

double TeacherOracle::accuracy(const Dataset& data) const { return coldcarve::accuracy(net_, data); }

std::string_view distill_mode_name(DistillMode m) { return m == DistillMode::D1 ? "d1" : "d2"; }

DistillMode distill_mode_from_name(std::string_view name) {
  if (name == "d1" || name == "D1") return DistillMode::D1;
  if (name == "d2" || name == "D2") return DistillMode::D2;
  throw Error(ErrorCode::Config, "unknown distillation mode '" + std::string(name) + "'");
}

void DistillConfig::validate() const {
  if (!(gradient_dropout_rate >= 0.0 && gradient_dropout_rate < 1.0))
    throw Error(ErrorCode::InvalidArgument, "gradient dropout rate must lie in [0, 1)");
  train.validate();
}

DistillResult distill(Network<float> student, const TeacherOracle& teacher, const Dataset& recovery,
                      const DistillConfig& cfg) {
  cfg.validate();
  if (!same_architecture(student.spec(), teacher.spec()))
    throw Error(ErrorCode::ArchitectureMismatch, "student and teacher architectures differ");
  TrainConfig tc = cfg.train;
  tc.gradient_dropout = cfg.mode == DistillMode::D2 ? cfg.gradient_dropout_rate : 0.0;
  const Tensor<float> soft = teacher.query(recovery.inputs);
  DistillResult r{std::move(student), {}};
  r.history = train(r.student, recovery.inputs, soft, tc, LossKind::KlDivergence);
  r.student.set_training(false);
  return r;
}

DistillResult distill_d1(Network<float> student, const TeacherOracle& teacher, const Dataset& recovery,
                         DistillConfig cfg) {
  cfg.mode = DistillMode::D1;
  return distill(std::move(student), teacher, recovery, cfg);
}

DistillResult distill_d2(Network<float> student, const TeacherOracle& teacher, const Dataset& recovery,
                         DistillConfig cfg) {
  cfg.mode = DistillMode::D2;
  return distill(std::move(student), teacher, recovery, cfg);
}

DistillResult retrain_scratch(const IRModel& spec, const Dataset& data, TrainConfig cfg) {
  const auto& labels = data.require_labels();
  if (!cfg.early_stop_patience) cfg.early_stop_patience = 2;
  DistillResult r{Network<float>(spec), {}};
  r.student.initialize(cfg.seed);
  r.history = train(r.student, data.inputs, labels, cfg, LossKind::CrossEntropy);
  r.student.set_training(false);
  return r;
}

Network<float> zero_out_initialization(const IRModel& spec, std::span<const float> carved, double lo, double hi,
                                       double eps) {
  return Network<float>(spec, zero_out_of_range(carved, lo, hi, eps));
}

std::string DistillReport::to_text() const {
  std::ostringstream s;
  s << std::setprecision(6);
  s << "stage " << stage << "\n";
  if (stage != "retrain") s << "gradient_dropout_rate " << config.gradient_dropout_rate << "\n";
  s << "lr " << config.train.adam.lr << "\nbatch_size " << config.train.batch_size << "\nepochs "
    << config.train.epochs << "\nlr_schedule " << schedule_name(config.train.lr_schedule) << "\nseed "
    << config.train.seed << "\nrecovery_size " << recovery_size << "\n";
  s << "initial_loss " << history.initial_loss << "\n";
  for (std::size_t e = 0; e < history.epoch_loss.size(); ++e) s << "epoch " << e + 1 << " " << history.epoch_loss[e] << "\n";
  s << "epochs_run " << history.epochs_run << "\nepochs_to_converge " << epochs_to_converge() << "\n";
  s << "rad_before " << rad_before << "\nrad_after " << rad_after << "\n";
  s << "epochs_rad " << epochs_to_converge() << "/" << rad_after << "\n";
  return s.str();
}

}  // namespace coldcarve
