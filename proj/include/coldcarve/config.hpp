#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coldcarve/carver.hpp"
#include "coldcarve/dataset.hpp"
#include "coldcarve/distill.hpp"
#include "coldcarve/memory_sim.hpp"
#include "coldcarve/train.hpp"

namespace coldcarve {

struct DatasetSpec {
  std::string generator = "desk";  // desk, blobs, moons, xor, idx, csv
  std::size_t train_size = 3000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 1;
  double noise = 0.35;
  std::size_t classes = 3;       // blobs only
  std::size_t features = 4;      // blobs only
  // File-backed generators: idx uses *_images/*_labels, csv uses *_csv.
  std::string train_images, train_labels, test_images, test_labels;
  std::string train_csv, test_csv;
  std::vector<std::size_t> sample_shape;  // csv reshape
};

struct RecoverySpec {
  std::string source = "shifted";  // shifted (unlabeled, different generator settings) or train
  double fraction = 0.1;           // of the training set size
  double shift = 0.5;
  std::uint64_t seed = 77;
};

struct AttackSpec {
  std::size_t trials = 1;
  CorrelationMode mode = CorrelationMode::Independent;
  bool vote = false;
  FillerProfile filler = FillerProfile::Mixed;
  std::size_t slack_bytes = 65536;  // image size beyond the two artifacts
};

struct EvaluateSpec {
  std::vector<float> epsilons{0.01f, 0.1f};
  std::size_t fgsm_samples = 500;
};

// One experiment. Every stochastic stage derives its seed from `seed`, so a
// --seed override reruns the whole pipeline deterministically.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string model = "lenet5";
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  RecoverySpec recovery;
  TrainConfig train;
  DecayParams decay;
  AttackSpec attack;
  CarveOptions carve;
  std::string correction = "d2";  // d1, d2 or retrain
  DistillConfig distill;
  EvaluateSpec evaluate;
  std::filesystem::path out = "runs/experiment";

  // Resolves names and ranges; throws Config.
  void validate() const;

  std::uint64_t train_seed() const { return seed; }
  std::uint64_t dump_seed() const { return seed + 101; }
  std::uint64_t decay_seed() const { return seed + 202; }
  std::uint64_t correct_seed() const { return seed + 303; }
};

ExperimentConfig parse_config(std::string_view json_text);  // throws Config
ExperimentConfig load_config(const std::filesystem::path& path);
std::string dump_config(const ExperimentConfig& cfg);

}  // namespace coldcarve
