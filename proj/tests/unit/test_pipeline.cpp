#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "coldcarve/error.hpp"
#include "coldcarve/pipeline.hpp"
#include "coldcarve/weight_blob.hpp"

using namespace coldcarve;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("coldcarve_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ExperimentConfig xor_config(const fs::path& out) {
  ExperimentConfig c = load_config(fs::path(COLDCARVE_SOURCE_DIR) / "fixtures" / "xor.json");
  c.out = out;
  return c;
}

void run_all(const ExperimentConfig& c) {
  cmd_train(c);
  cmd_attack(c, true);
  cmd_correct(c);
  cmd_evaluate(c, "recovered");
  cmd_evaluate(c, "corrected");
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an Error");
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST_CASE("pipeline commands write every artifact and are deterministic") {
  const fs::path a = fresh_dir("run_a"), b = fresh_dir("run_b");
  run_all(xor_config(a));
  run_all(xor_config(b));
  for (const char* f : {"teacher.bin", "dump.raw", "decayed_0.raw", "voted.raw", "recovered.xml", "recovered.bin",
                        "corrected.bin", "results_attack.csv", "results_correct.csv", "correlation.csv",
                        "results_evaluate_corrected.csv", "layer_norms_corrected.csv", "carve_report.txt",
                        "distill_report.txt", "evaluation_recovered.txt"}) {
    REQUIRE_MESSAGE(fs::exists(a / f), f);
    CHECK_MESSAGE(read_file(a / f) == read_file(b / f), f);
  }
  const auto out = cmd_report(a, a);
  CHECK(out.files.size() == 4);
  const std::string by_model = read_text(a / "rad_vs_model.csv");
  CHECK(by_model.starts_with("model,stage,n,mean_rad"));
  CHECK(by_model.find("mlp_xor,recovered,3,0") != std::string::npos);
  CHECK(read_text(a / "rad_vs_datafraction.csv").find("d2,1,") != std::string::npos);
  CHECK(read_text(a / "correlation_matrix.csv").find(".,0,0,1") != std::string::npos);
  CHECK(read_text(a / "layer_norms.csv").find("dense_1") != std::string::npos);
  // rerunning the report over its own output is stable
  const std::string before = read_text(a / "rad_vs_model.csv");
  cmd_report(a, a);
  CHECK(read_text(a / "rad_vs_model.csv") == before);
}

TEST_CASE("report errors") {
  const fs::path empty = fresh_dir("empty");
  CHECK(code_of([&] { cmd_report(empty, empty); }) == ErrorCode::EmptyResults);

  const fs::path bad = fresh_dir("schema");
  write_text(bad / "results_x.csv", "not,the,header\n");
  try {
    cmd_report(bad, bad);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("results_x.csv") != std::string::npos);
  }
  write_text(bad / "results_x.csv", result_csv_header() + "\nonly,three,cols\n");
  try {
    cmd_report(bad, bad);
    FAIL("expected SchemaError");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaError);
    CHECK(std::string(e.what()).find("results_x.csv") != std::string::npos);
  }
}

TEST_CASE("commands fail cleanly without earlier stages") {
  const fs::path d = fresh_dir("order");
  const auto c = xor_config(d);
  CHECK(code_of([&] { cmd_attack(c, false); }) == ErrorCode::Io);
  CHECK(code_of([&] { cmd_evaluate(c, "corrected"); }) == ErrorCode::Io);
  CHECK(code_of([&] { cmd_evaluate(c, "bogus"); }) == ErrorCode::Config);
}

#ifdef COLDCARVE_CLI
TEST_CASE("cli exit codes") {
  const fs::path d = fresh_dir("cli");
  const std::string cli = COLDCARVE_CLI;
  const std::string fixture = (fs::path(COLDCARVE_SOURCE_DIR) / "fixtures" / "xor.json").string();
  auto run = [&](const std::string& args) {
    const int status = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  write_text(d / "missing_data.json",
             R"({"dataset":{"generator":"csv","train_csv":"/nonexistent/train.csv","test_csv":"/nonexistent/t.csv"}})");
  CHECK(run("train --config " + (d / "missing_data.json").string()) == 2);
  CHECK(run("train --config " + (d / "nope.json").string()) == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("attack") == 2);
  CHECK(run("attack --config " + fixture + " --out " + (d / "run").string()) == 1);
  CHECK(run("train --config " + fixture + " --seed 4 --out " + (d / "run").string()) == 0);
  CHECK(run("attack --config " + fixture + " --trials 3 --parallel --out " + (d / "run").string()) == 0);
  CHECK(read_text(d / "run" / "config.json").find("\"seed\": 4") != std::string::npos);
  CHECK(run("report --results " + (d / "empty").string()) == 1);
}
#endif
