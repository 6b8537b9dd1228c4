#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coldcarve/carver.hpp"
#include "coldcarve/config.hpp"
#include "coldcarve/distill.hpp"
#include "coldcarve/memory_sim.hpp"
#include "coldcarve/metrics.hpp"

namespace coldcarve {

struct ExperimentData {
  Dataset train;
  Dataset test;
  Dataset recovery;  // unlabeled unless the source is the labeled train split
};

ExperimentData load_data(const ExperimentConfig& cfg);

// ---- in-memory stages -------------------------------------------------------

struct TeacherOutcome {
  Network<float> teacher;  // conformed to the threat-model weight range
  TrainHistory history;
  double test_accuracy = 0.0;
};
TeacherOutcome train_teacher(const ExperimentConfig& cfg, const ExperimentData& data);

struct TrialOutcome {
  std::size_t trial = 0;  // SIZE_MAX for the voted image
  std::optional<RecoveredModel> recovered;
  std::string error;  // carve failure message when recovered is empty
  BitErrorRate bit_error;
  double weight_error = -1.0;
  double accuracy = 0.0;
  double rad = 0.0;
};

struct AttackOutcome {
  MemoryImage truth;
  TrialSet trials;
  std::optional<MemoryImage> voted;
  std::optional<CorrelationMatrix> correlation;
  std::vector<TrialOutcome> outcomes;  // per trial, then the voted image
  // The image whose recovery feeds correction: the vote, else trial 0.
  const TrialOutcome& primary() const { return outcomes.back().trial == SIZE_MAX ? outcomes.back() : outcomes.front(); }
};

// Dump, decay, optional vote and recovery. Trials run concurrently when
// `parallel` is set; results are ordered by trial index either way.
AttackOutcome run_attack(const Network<float>& teacher, const ExperimentConfig& cfg, const Dataset& test,
                         double teacher_accuracy, bool parallel = false);

struct CorrectionOutcome {
  DistillResult result;
  DistillReport report;
  double accuracy = 0.0;
};

// cfg.correction selects d1, d2 (student starts from zero_out_of_range of the
// carved values) or retrain (fresh weights on the labeled recovery split).
CorrectionOutcome run_correction(const TeacherOracle& teacher, const IRModel& spec, std::span<const float> carved,
                                 const ExperimentData& data, const ExperimentConfig& cfg, double teacher_accuracy);

RecoveryScore score_model(const Network<float>& teacher, const Network<float>& model, const Dataset& test,
                          const ExperimentConfig& cfg);

// ---- file-level commands ----------------------------------------------------
// Every command reads and writes under cfg.out and returns a short summary.

struct CommandResult {
  std::string summary;                      // printed by the CLI
  std::vector<std::filesystem::path> files;  // written, in order
};

CommandResult cmd_train(const ExperimentConfig& cfg);
CommandResult cmd_attack(const ExperimentConfig& cfg, bool parallel = false);  // throws on carve failure
CommandResult cmd_correct(const ExperimentConfig& cfg);
CommandResult cmd_evaluate(const ExperimentConfig& cfg, const std::string& stage = "corrected");
// Aggregates results_*.csv, correlation.csv and layer_norms_*.csv found under
// results_dir into the four figure tables. Throws EmptyResults / SchemaError.
CommandResult cmd_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir);

}  // namespace coldcarve
