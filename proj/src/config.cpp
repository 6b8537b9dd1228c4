#include "coldcarve/config.hpp"

#include <json.hpp>

#include "coldcarve/error.hpp"
#include "coldcarve/weight_blob.hpp"
#include "coldcarve/zoo.hpp"

namespace coldcarve {

using nlohmann::json;

namespace {

template <typename T>
void take(const json& j, const char* key, T& into) {
  if (j.contains(key)) into = j.at(key).get<T>();
}

void read_train(const json& j, TrainConfig& t) {
  take(j, "lr", t.adam.lr);
  take(j, "beta1", t.adam.beta1);
  take(j, "beta2", t.adam.beta2);
  take(j, "eps", t.adam.eps);
  take(j, "batch_size", t.batch_size);
  take(j, "epochs", t.epochs);
  if (j.contains("lr_schedule")) t.lr_schedule = schedule_from_name(j.at("lr_schedule").get<std::string>());
  if (j.contains("early_stop_patience")) t.early_stop_patience = j.at("early_stop_patience").get<std::size_t>();
}

json write_train(const TrainConfig& t) {
  json j{{"lr", t.adam.lr},
         {"beta1", t.adam.beta1},
         {"beta2", t.adam.beta2},
         {"eps", t.adam.eps},
         {"batch_size", t.batch_size},
         {"epochs", t.epochs},
         {"lr_schedule", std::string(schedule_name(t.lr_schedule))}};
  if (t.early_stop_patience) j["early_stop_patience"] = *t.early_stop_patience;
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  const auto names = zoo_names();
  if (std::find(names.begin(), names.end(), model) == names.end())
    throw Error(ErrorCode::Config, "unknown model '" + model + "'");
  const std::string& g = dataset.generator;
  if (g != "desk" && g != "blobs" && g != "moons" && g != "xor" && g != "idx" && g != "csv")
    throw Error(ErrorCode::Config, "unknown dataset generator '" + g + "'");
  auto need_file = [](const std::string& path, const char* what) {
    if (path.empty()) throw Error(ErrorCode::Config, std::string("dataset needs ") + what);
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::Config, "dataset file not found: " + path);
  };
  if (g == "idx") {
    need_file(dataset.train_images, "train_images");
    need_file(dataset.test_images, "test_images");
    need_file(dataset.train_labels, "train_labels");
    need_file(dataset.test_labels, "test_labels");
  }
  if (g == "csv") {
    need_file(dataset.train_csv, "train_csv");
    need_file(dataset.test_csv, "test_csv");
  }
  if (recovery.source != "shifted" && recovery.source != "train")
    throw Error(ErrorCode::Config, "recovery source must be 'shifted' or 'train'");
  if (!(recovery.fraction > 0.0 && recovery.fraction <= 1.0))
    throw Error(ErrorCode::Config, "recovery fraction must lie in (0, 1]");
  if (correction != "d1" && correction != "d2" && correction != "retrain")
    throw Error(ErrorCode::Config, "unknown correction mode '" + correction + "'");
  if (attack.trials == 0) throw Error(ErrorCode::Config, "attack needs at least one trial");
  if (attack.vote && (attack.trials < 3 || attack.trials % 2 == 0))
    throw Error(ErrorCode::Config, "majority vote needs an odd trial count of at least 3");
  if (carve.max_distance < 1) throw Error(ErrorCode::Config, "carve max_distance must be at least 1");
  for (float e : evaluate.epsilons)
    if (!(e >= 0.0f)) throw Error(ErrorCode::Config, "fgsm epsilons must be non-negative");
  try {
    train.validate();
    distill.validate();
    decay.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
}

ExperimentConfig parse_config(std::string_view text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    take(j, "name", c.name);
    take(j, "model", c.model);
    take(j, "seed", c.seed);
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      auto& s = c.dataset;
      take(d, "generator", s.generator);
      take(d, "train_size", s.train_size);
      take(d, "test_size", s.test_size);
      take(d, "seed", s.seed);
      take(d, "noise", s.noise);
      take(d, "classes", s.classes);
      take(d, "features", s.features);
      take(d, "train_images", s.train_images);
      take(d, "train_labels", s.train_labels);
      take(d, "test_images", s.test_images);
      take(d, "test_labels", s.test_labels);
      take(d, "train_csv", s.train_csv);
      take(d, "test_csv", s.test_csv);
      take(d, "sample_shape", s.sample_shape);
    }
    if (j.contains("recovery")) {
      const json& r = j.at("recovery");
      take(r, "source", c.recovery.source);
      take(r, "fraction", c.recovery.fraction);
      take(r, "shift", c.recovery.shift);
      take(r, "seed", c.recovery.seed);
    }
    if (j.contains("train")) read_train(j.at("train"), c.train);
    if (j.contains("decay")) {
      take(j.at("decay"), "rho0", c.decay.rho0);
      take(j.at("decay"), "rho1", c.decay.rho1);
    }
    if (j.contains("attack")) {
      const json& a = j.at("attack");
      take(a, "trials", c.attack.trials);
      take(a, "vote", c.attack.vote);
      take(a, "slack_bytes", c.attack.slack_bytes);
      if (a.contains("mode")) c.attack.mode = correlation_mode_from_name(a.at("mode").get<std::string>());
      if (a.contains("filler")) c.attack.filler = filler_from_name(a.at("filler").get<std::string>());
    }
    if (j.contains("carve")) {
      const json& k = j.at("carve");
      take(k, "max_distance", c.carve.max_distance);
      take(k, "range_lo", c.carve.range_lo);
      take(k, "range_hi", c.carve.range_hi);
      take(k, "range_fraction", c.carve.range_fraction);
      take(k, "min_magnitude", c.carve.min_magnitude);
      take(k, "island_tolerance", c.carve.island_tolerance);
      take(k, "max_candidates", c.carve.max_candidates);
    }
    if (j.contains("correct")) {
      const json& k = j.at("correct");
      take(k, "mode", c.correction);
      take(k, "gradient_dropout_rate", c.distill.gradient_dropout_rate);
      if (k.contains("train")) read_train(k.at("train"), c.distill.train);
    }
    if (j.contains("evaluate")) {
      take(j.at("evaluate"), "epsilons", c.evaluate.epsilons);
      take(j.at("evaluate"), "fgsm_samples", c.evaluate.fgsm_samples);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("config: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, e.what());
  }
  if (c.correction == "d1") c.distill.mode = DistillMode::D1;
  if (c.correction == "d2") c.distill.mode = DistillMode::D2;
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::Config, "config file not found: " + path.string());
  return parse_config(read_text(path));
}

std::string dump_config(const ExperimentConfig& c) {
  const auto& d = c.dataset;
  json j{{"name", c.name},
         {"model", c.model},
         {"seed", c.seed},
         {"out", c.out.string()},
         {"dataset",
          {{"generator", d.generator},
           {"train_size", d.train_size},
           {"test_size", d.test_size},
           {"seed", d.seed},
           {"noise", d.noise},
           {"classes", d.classes},
           {"features", d.features}}},
         {"recovery",
          {{"source", c.recovery.source},
           {"fraction", c.recovery.fraction},
           {"shift", c.recovery.shift},
           {"seed", c.recovery.seed}}},
         {"train", write_train(c.train)},
         {"decay", {{"rho0", c.decay.rho0}, {"rho1", c.decay.rho1}}},
         {"attack",
          {{"trials", c.attack.trials},
           {"mode", std::string(correlation_mode_name(c.attack.mode))},
           {"vote", c.attack.vote},
           {"filler", std::string(filler_name(c.attack.filler))},
           {"slack_bytes", c.attack.slack_bytes}}},
         {"carve",
          {{"max_distance", c.carve.max_distance},
           {"range_lo", c.carve.range_lo},
           {"range_hi", c.carve.range_hi},
           {"range_fraction", c.carve.range_fraction},
           {"min_magnitude", c.carve.min_magnitude},
           {"island_tolerance", c.carve.island_tolerance},
           {"max_candidates", c.carve.max_candidates}}},
         {"correct",
          {{"mode", c.correction},
           {"gradient_dropout_rate", c.distill.gradient_dropout_rate},
           {"train", write_train(c.distill.train)}}},
         {"evaluate", {{"epsilons", c.evaluate.epsilons}, {"fgsm_samples", c.evaluate.fgsm_samples}}}};
  if (d.generator == "idx")
    for (auto [k, v] : {std::pair{"train_images", &d.train_images}, {"train_labels", &d.train_labels},
                        {"test_images", &d.test_images}, {"test_labels", &d.test_labels}})
      j["dataset"][k] = *v;
  if (d.generator == "csv") {
    j["dataset"]["train_csv"] = d.train_csv;
    j["dataset"]["test_csv"] = d.test_csv;
    j["dataset"]["sample_shape"] = d.sample_shape;
  }
  return j.dump(2) + "\n";
}

}  // namespace coldcarve
