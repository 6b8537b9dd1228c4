// coldcarve: command line driver for the train -> attack -> correct -> evaluate pipeline.
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "coldcarve/config.hpp"
#include "coldcarve/error.hpp"
#include "coldcarve/pipeline.hpp"

namespace cc = coldcarve;

namespace {

constexpr int kOk = 0;
constexpr int kPipelineFailure = 1;
constexpr int kUsage = 2;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "experiment config (JSON)")->required();
    cmd->add_option("--seed", seed, "override the master seed");
    cmd->add_option("--out", out, "override the output directory");
  }

  cc::ExperimentConfig load() const {
    cc::ExperimentConfig cfg = cc::load_config(config);
    if (seed) cfg.seed = *seed;
    if (!out.empty()) cfg.out = out;
    return cfg;
  }
};

void print(const cc::CommandResult& r) {
  std::cout << r.summary << "\n";
  for (const auto& f : r.files) std::cout << "  wrote " << f.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cold-boot model recovery simulator"};
  app.require_subcommand(1);

  Common train_opts, attack_opts, correct_opts, eval_opts;
  auto* train = app.add_subcommand("train", "train the victim (teacher) model");
  train_opts.attach(train);

  auto* attack = app.add_subcommand("attack", "simulate decay and carve the model out of the dump");
  attack_opts.attach(attack);
  std::optional<std::size_t> trials;
  bool parallel = false;
  attack->add_option("--trials", trials, "number of decay trials")->check(CLI::PositiveNumber);
  attack->add_flag("--parallel", parallel, "run trials on multiple threads");

  auto* correct = app.add_subcommand("correct", "repair the recovered model (d1, d2 or retrain)");
  correct_opts.attach(correct);

  auto* evaluate = app.add_subcommand("evaluate", "score a stage against the teacher");
  eval_opts.attach(evaluate);
  std::string stage = "corrected";
  evaluate->add_option("--stage", stage, "teacher, recovered or corrected")
      ->check(CLI::IsMember({"teacher", "recovered", "corrected"}));

  auto* report = app.add_subcommand("report", "aggregate result files into summary tables");
  std::string results_dir, report_out;
  report->add_option("--results", results_dir, "directory holding run outputs")->required();
  report->add_option("--out", report_out, "where to write the tables (default: results dir)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    cc::CommandResult r;
    if (*train) {
      r = cc::cmd_train(train_opts.load());
    } else if (*attack) {
      auto cfg = attack_opts.load();
      if (trials) cfg.attack.trials = *trials;
      cfg.validate();
      r = cc::cmd_attack(cfg, parallel);
    } else if (*correct) {
      r = cc::cmd_correct(correct_opts.load());
    } else if (*evaluate) {
      r = cc::cmd_evaluate(eval_opts.load(), stage);
    } else {
      if (!report_out.empty()) std::filesystem::create_directories(report_out);
      r = cc::cmd_report(results_dir, report_out.empty() ? results_dir : report_out);
    }
    print(r);
    return kOk;
  } catch (const cc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    const bool usage = e.code() == cc::ErrorCode::Config || e.code() == cc::ErrorCode::InvalidArgument;
    return usage ? kUsage : kPipelineFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kPipelineFailure;
  }
}
