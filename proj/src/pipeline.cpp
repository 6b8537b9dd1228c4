#include "coldcarve/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <sstream>

#include "coldcarve/error.hpp"
#include "coldcarve/ir_xml.hpp"
#include "coldcarve/weight_blob.hpp"
#include "coldcarve/zoo.hpp"

namespace coldcarve {

namespace fs = std::filesystem;

namespace {

Dataset generate(const DatasetSpec& d, std::size_t n, std::uint64_t seed, double shift) {
  if (d.generator == "desk") return make_desk_images(n, seed, {12, shift, d.noise});
  if (d.generator == "blobs") return make_blobs(n, d.classes, d.features, d.noise * (1.0 + shift), seed);
  if (d.generator == "moons") return make_two_moons(n, d.noise * (1.0 + shift), seed);
  return make_xor((n + 3) / 4);
}

std::size_t model_classes(const ExperimentConfig& cfg) {
  if (cfg.dataset.generator == "blobs") return cfg.dataset.classes;
  if (cfg.dataset.generator == "moons" || cfg.dataset.generator == "xor") return 2;
  return 3;
}

IRModel experiment_model(const ExperimentConfig& cfg, std::size_t classes) { return zoo_model(cfg.model, classes); }

std::string fmt(double v) {
  std::ostringstream s;
  s << std::setprecision(6) << v;
  return s.str();
}

void write_rows(const fs::path& path, const std::vector<ResultRow>& rows) {
  std::string text = result_csv_header() + "\n";
  for (const auto& r : rows) text += to_csv(r) + "\n";
  write_text(path, text);
}

ResultRow base_row(const ExperimentConfig& cfg, const std::string& stage, double teacher_accuracy) {
  ResultRow r;
  r.experiment = cfg.name;
  r.model = cfg.model;
  r.stage = stage;
  r.rho0 = cfg.decay.rho0;
  r.rho1 = cfg.decay.rho1;
  r.seed = cfg.seed;
  r.teacher_accuracy = teacher_accuracy;
  return r;
}

Network<float> load_stage(const ExperimentConfig& cfg, const std::string& stage) {
  if (stage != "teacher" && stage != "recovered" && stage != "corrected")
    throw Error(ErrorCode::Config, "unknown evaluation stage '" + stage + "'");
  const fs::path stem = cfg.out / stage;
  if (!fs::exists(stem.string() + ".xml"))
    throw Error(ErrorCode::Io, "missing checkpoint " + stem.string() + ".xml; run the earlier command first");
  return load_checkpoint(stem);
}

double first_number(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string k;
  double v = 0.0;
  while (in >> k) {
    if (k == key && in >> v) return v;
  }
  throw Error(ErrorCode::Io, "missing '" + key + "' in report");
}

}  // namespace

ExperimentData load_data(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto& d = cfg.dataset;
  ExperimentData out;
  if (d.generator == "idx") {
    out.train = load_idx(d.train_images, fs::path(d.train_labels));
    out.test = load_idx(d.test_images, fs::path(d.test_labels));
  } else if (d.generator == "csv") {
    out.train = load_csv(d.train_csv, d.sample_shape);
    out.test = load_csv(d.test_csv, d.sample_shape);
  } else {
    out.train = generate(d, d.train_size, d.seed, 0.0);
    out.test = generate(d, d.test_size, d.seed + 1, 0.0);
  }
  out.test.split = Split::Test;
  if (cfg.recovery.source == "train") {
    out.recovery = out.train.fraction(cfg.recovery.fraction, cfg.recovery.seed);
  } else {
    const auto n = static_cast<std::size_t>(std::ceil(cfg.recovery.fraction * static_cast<double>(out.train.size())));
    // File-backed corpora have no generator to shift; a held-out test slice
    // without labels stands in for the similar unlabeled corpus.
    out.recovery = (d.generator == "idx" || d.generator == "csv")
                       ? out.test.fraction(std::min(1.0, static_cast<double>(n) / out.test.size()), cfg.recovery.seed)
                             .without_labels()
                       : generate(d, n, cfg.recovery.seed, cfg.recovery.shift).without_labels();
  }
  out.recovery.split = Split::Recovery;
  const IRModel model = experiment_model(cfg, model_classes(cfg));
  Shape sample(out.train.inputs.shape().begin() + 1, out.train.inputs.shape().end());
  if (sample != model.input_shape())
    throw Error(ErrorCode::Config, "dataset samples do not match the input shape of model '" + cfg.model + "'");
  return out;
}

TeacherOutcome train_teacher(const ExperimentConfig& cfg, const ExperimentData& data) {
  TeacherOutcome t{Network<float>(experiment_model(cfg, model_classes(cfg))), {}, 0.0};
  t.teacher.initialize(cfg.train_seed());
  TrainConfig tc = cfg.train;
  tc.seed = cfg.train_seed();
  t.history = train(t.teacher, data.train.inputs, data.train.require_labels(), tc, LossKind::CrossEntropy);
  conform_to_threat_model(t.teacher.parameters(), cfg.carve.range_hi, cfg.carve.min_magnitude);
  t.teacher.set_training(false);
  t.test_accuracy = accuracy(t.teacher, data.test);
  return t;
}

AttackOutcome run_attack(const Network<float>& teacher, const ExperimentConfig& cfg, const Dataset& test,
                         double teacher_accuracy, bool parallel) {
  AttackOutcome a;
  const std::string xml = serialize_xml(teacher.spec());
  const Bytes blob = serialize_weights(teacher);
  a.truth = synthesize_dump(xml, blob, cfg.attack.filler, xml.size() + blob.size() + cfg.attack.slack_bytes,
                            cfg.dump_seed());
  DecayParams params = cfg.decay;
  params.seed = cfg.decay_seed();
  a.trials = make_trials(a.truth, params, cfg.attack.trials, cfg.attack.mode, parallel);

  auto evaluate_image = [&](const MemoryImage& image, std::size_t index) {
    TrialOutcome o;
    o.trial = index;
    o.bit_error = bit_error_rate(a.truth, image);
    try {
      o.recovered = recover_model(image.view(), cfg.carve);
      if (o.recovered->carved.size() == teacher.parameter_count())
        o.weight_error = weight_value_error_rate(teacher.parameters(), o.recovered->carved);
      if (same_architecture(o.recovered->model, teacher.spec()) ||
          (o.recovered->model.input_shape() == teacher.spec().input_shape() &&
           o.recovered->model.output_shape() == teacher.spec().output_shape())) {
        o.accuracy = accuracy(o.recovered->network, test);
        o.rad = rad(teacher_accuracy, o.accuracy);
      } else {
        o.rad = 1.0;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotFound && e.code() != ErrorCode::Unrepairable) throw;
      o.recovered.reset();
      o.error = e.what();
    }
    return o;
  };

  const std::size_t n = a.trials.trials.size();
  a.outcomes.resize(n);
  if (parallel && n > 1) {
    std::vector<std::future<TrialOutcome>> jobs;
    for (std::size_t k = 0; k < n; ++k)
      jobs.push_back(std::async(std::launch::async, evaluate_image, std::cref(a.trials.trials[k]), k));
    for (std::size_t k = 0; k < n; ++k) a.outcomes[k] = jobs[k].get();
  } else {
    for (std::size_t k = 0; k < n; ++k) a.outcomes[k] = evaluate_image(a.trials.trials[k], k);
  }
  if (cfg.attack.vote) {
    a.voted = majority_vote(a.trials);
    a.outcomes.push_back(evaluate_image(*a.voted, SIZE_MAX));
  }
  if (n >= 2) a.correlation = error_cross_correlation(a.trials, a.truth);
  return a;
}

CorrectionOutcome run_correction(const TeacherOracle& teacher, const IRModel& spec, std::span<const float> carved,
                                 const ExperimentData& data, const ExperimentConfig& cfg, double teacher_accuracy) {
  CorrectionOutcome c;
  const Network<float> uncorrected(spec, sanitize_weights(carved, cfg.carve.range_lo, cfg.carve.range_hi,
                                                          cfg.carve.min_magnitude)
                                             .values);
  c.report.rad_before = rad(teacher_accuracy, accuracy(uncorrected, data.test));
  c.report.recovery_size = data.recovery.size();
  c.report.stage = cfg.correction;
  if (cfg.correction == "retrain") {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.correct_seed();
    c.result = retrain_scratch(spec, data.recovery, tc);
    c.report.config.train = tc;
  } else {
    DistillConfig dc = cfg.distill;
    dc.mode = distill_mode_from_name(cfg.correction);
    dc.train.seed = cfg.correct_seed();
    Network<float> student =
        zero_out_initialization(spec, carved, cfg.carve.range_lo, cfg.carve.range_hi, cfg.carve.min_magnitude);
    c.result = distill(std::move(student), teacher, data.recovery, dc);
    c.report.config = dc;
  }
  c.report.history = c.result.history;
  c.accuracy = accuracy(c.result.student, data.test);
  c.report.rad_after = rad(teacher_accuracy, c.accuracy);
  return c;
}

RecoveryScore score_model(const Network<float>& teacher, const Network<float>& model, const Dataset& test,
                          const ExperimentConfig& cfg) {
  RecoveryScore s;
  s.rad = rad(accuracy(teacher, test), accuracy(model, test));
  std::vector<std::size_t> idx(std::min(cfg.evaluate.fgsm_samples, test.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Dataset probe = test.subset(idx);
  for (float eps : cfg.evaluate.epsilons)
    s.fidelity.emplace_back(eps, fidelity(teacher, model, probe.inputs, probe.require_labels(), eps));
  if (same_architecture(teacher.spec(), model.spec())) {
    s.weight_value_error_rate = weight_value_error_rate(teacher.parameters(), model.parameters());
    s.layer_norms = layer_norm_profile(teacher, model);
  }
  return s;
}

// ---------------------------------------------------------------------------

CommandResult cmd_train(const ExperimentConfig& cfg) {
  const ExperimentData data = load_data(cfg);
  const TeacherOutcome t = train_teacher(cfg, data);
  CommandResult r;
  const fs::path stem = cfg.out / "teacher";
  save_checkpoint(t.teacher, stem);
  std::ostringstream rep;
  rep << "model " << cfg.model << "\nparameters " << t.teacher.parameter_count() << "\ntrain_size "
      << data.train.size() << "\ntest_size " << data.test.size() << "\ninitial_loss " << fmt(t.history.initial_loss)
      << "\nfinal_loss " << fmt(t.history.epoch_loss.empty() ? t.history.initial_loss : t.history.epoch_loss.back())
      << "\nepochs_run " << t.history.epochs_run << "\ntest_accuracy " << fmt(t.test_accuracy) << "\n";
  write_text(cfg.out / "train_report.txt", rep.str());
  write_text(cfg.out / "config.json", dump_config(cfg));
  r.files = {stem.string() + ".xml", stem.string() + ".bin", cfg.out / "train_report.txt", cfg.out / "config.json"};
  r.summary = "test accuracy " + fmt(t.test_accuracy);
  return r;
}

CommandResult cmd_attack(const ExperimentConfig& cfg, bool parallel) {
  const ExperimentData data = load_data(cfg);
  const Network<float> teacher = load_stage(cfg, "teacher");
  const double teacher_acc = accuracy(teacher, data.test);
  const AttackOutcome a = run_attack(teacher, cfg, data.test, teacher_acc, parallel);
  CommandResult r;
  save_image(a.truth, cfg.out / "dump.raw");
  save_image(a.trials.trials.front(), cfg.out / "decayed_0.raw");
  r.files = {cfg.out / "dump.raw", cfg.out / "decayed_0.raw"};
  if (a.voted) {
    save_image(*a.voted, cfg.out / "voted.raw");
    r.files.push_back(cfg.out / "voted.raw");
  }
  std::vector<ResultRow> rows;
  std::string reports;
  for (const auto& o : a.outcomes) {
    ResultRow row = base_row(cfg, o.trial == SIZE_MAX ? "recovered_voted" : "recovered", teacher_acc);
    row.model_accuracy = o.accuracy;
    row.rad = o.recovered ? o.rad : 1.0;
    row.weight_error = o.weight_error;
    rows.push_back(row);
    reports += "# trial " + (o.trial == SIZE_MAX ? std::string("voted") : std::to_string(o.trial)) + "\n";
    reports += "rho0_hat " + fmt(o.bit_error.rho0_hat) + "\nrho1_hat " + fmt(o.bit_error.rho1_hat) + "\n";
    reports += o.recovered ? o.recovered->report.to_text() : "carve_error " + o.error + "\n";
  }
  write_rows(cfg.out / "results_attack.csv", rows);
  write_text(cfg.out / "carve_report.txt", reports);
  r.files.push_back(cfg.out / "results_attack.csv");
  r.files.push_back(cfg.out / "carve_report.txt");
  if (a.correlation) {
    std::string text = "i,j,value\n";
    for (std::size_t i = 0; i < a.correlation->n; ++i)
      for (std::size_t j = 0; j < a.correlation->n; ++j)
        text += std::to_string(i) + "," + std::to_string(j) + "," + fmt(a.correlation->at(i, j)) + "\n";
    write_text(cfg.out / "correlation.csv", text);
    r.files.push_back(cfg.out / "correlation.csv");
  }
  const TrialOutcome& p = a.primary();
  if (!p.recovered) throw Error(ErrorCode::Unrepairable, "recovery failed: " + p.error);
  save_checkpoint(p.recovered->network, cfg.out / "recovered");
  write_file(cfg.out / "recovered_carved.bin", encode_floats(p.recovered->carved));
  r.files.push_back(cfg.out / "recovered.xml");
  r.files.push_back(cfg.out / "recovered.bin");
  r.files.push_back(cfg.out / "recovered_carved.bin");
  std::size_t ok = 0;
  for (const auto& o : a.outcomes) ok += o.recovered.has_value();
  r.summary = "recovered " + std::to_string(ok) + "/" + std::to_string(a.outcomes.size()) + " images; rad " +
              fmt(p.rad) + "; weight error " + fmt(p.weight_error);
  return r;
}

CommandResult cmd_correct(const ExperimentConfig& cfg) {
  const ExperimentData data = load_data(cfg);
  const Network<float> teacher = load_stage(cfg, "teacher");
  const double teacher_acc = accuracy(teacher, data.test);
  if (!fs::exists(cfg.out / "recovered.xml") || !fs::exists(cfg.out / "recovered_carved.bin"))
    throw Error(ErrorCode::Io, "missing recovered model; run attack first");
  const IRModel spec = parse_xml(read_text(cfg.out / "recovered.xml"));
  const std::vector<float> carved = decode_floats(read_file(cfg.out / "recovered_carved.bin"));
  const TeacherOracle oracle(teacher);
  const CorrectionOutcome c = run_correction(oracle, spec, carved, data, cfg, teacher_acc);
  save_checkpoint(c.result.student, cfg.out / "corrected");
  write_text(cfg.out / "distill_report.txt", c.report.to_text());
  ResultRow row = base_row(cfg, cfg.correction, teacher_acc);
  row.data_fraction = cfg.recovery.fraction;
  row.model_accuracy = c.accuracy;
  row.rad = c.report.rad_after;
  row.epochs = c.report.epochs_to_converge();
  write_rows(cfg.out / "results_correct.csv", {row});
  CommandResult r;
  r.files = {cfg.out / "corrected.xml", cfg.out / "corrected.bin", cfg.out / "distill_report.txt",
             cfg.out / "results_correct.csv"};
  r.summary = cfg.correction + " epochs/rad " + std::to_string(c.report.epochs_to_converge()) + "/" +
              fmt(c.report.rad_after) + " (before " + fmt(c.report.rad_before) + ")";
  return r;
}

CommandResult cmd_evaluate(const ExperimentConfig& cfg, const std::string& stage) {
  if (stage != "teacher" && stage != "recovered" && stage != "corrected")
    throw Error(ErrorCode::Config, "unknown evaluation stage '" + stage + "'");
  const ExperimentData data = load_data(cfg);
  const Network<float> teacher = load_stage(cfg, "teacher");
  const Network<float> model = load_stage(cfg, stage);
  RecoveryScore s = score_model(teacher, model, data.test, cfg);
  if (fs::exists(cfg.out / "dump.raw") && fs::exists(cfg.out / "decayed_0.raw")) {
    const auto ber = bit_error_rate(load_image(cfg.out / "dump.raw"), load_image(cfg.out / "decayed_0.raw"));
    s.bit_error = {ber.rho0_hat, ber.rho1_hat};
  }
  const double teacher_acc = accuracy(teacher, data.test);
  ResultRow row = base_row(cfg, "evaluate_" + stage, teacher_acc);
  row.model_accuracy = accuracy(model, data.test);
  row.rad = s.rad;
  row.weight_error = s.layer_norms.empty() ? -1.0 : s.weight_value_error_rate;
  if (stage == "corrected" && fs::exists(cfg.out / "distill_report.txt")) {
    row.data_fraction = cfg.recovery.fraction;
    row.epochs = static_cast<std::size_t>(first_number(read_text(cfg.out / "distill_report.txt"), "epochs_to_converge"));
  }
  for (const auto& [eps, f] : s.fidelity) {
    if (std::abs(eps - 0.01) < 1e-6) row.fidelity_low = f;
    if (std::abs(eps - 0.1) < 1e-6) row.fidelity_high = f;
  }
  std::string norms = "experiment,model,stage,layer,name,value\n";
  for (const auto& l : s.layer_norms)
    norms += cfg.name + "," + cfg.model + "," + stage + "," + std::to_string(l.layer) + "," + l.name + "," +
             fmt(l.value) + "\n";
  write_text(cfg.out / ("evaluation_" + stage + ".txt"), s.to_text());
  write_text(cfg.out / ("layer_norms_" + stage + ".csv"), norms);
  write_rows(cfg.out / ("results_evaluate_" + stage + ".csv"), {row});
  CommandResult r;
  r.files = {cfg.out / ("evaluation_" + stage + ".txt"), cfg.out / ("layer_norms_" + stage + ".csv"),
             cfg.out / ("results_evaluate_" + stage + ".csv")};
  r.summary = stage + " rad " + fmt(s.rad);
  for (const auto& [eps, f] : s.fidelity) r.summary += "; fidelity@" + fmt(eps) + " " + fmt(f);
  return r;
}

CommandResult cmd_report(const fs::path& results_dir, const fs::path& out_dir) {
  if (!fs::is_directory(results_dir)) throw Error(ErrorCode::Io, "results directory not found: " + results_dir.string());
  std::vector<fs::path> result_files, correlation_files, norm_files;
  for (const auto& e : fs::recursive_directory_iterator(results_dir)) {
    if (!e.is_regular_file()) continue;
    const std::string name = e.path().filename().string();
    if (e.path().parent_path() == out_dir &&
        (name == "rad_vs_model.csv" || name == "rad_vs_datafraction.csv" || name == "correlation_matrix.csv" ||
         name == "layer_norms.csv"))
      continue;
    if (name.starts_with("results_") && name.ends_with(".csv")) result_files.push_back(e.path());
    else if (name == "correlation.csv") correlation_files.push_back(e.path());
    else if (name.starts_with("layer_norms_") && name.ends_with(".csv")) norm_files.push_back(e.path());
  }
  std::sort(result_files.begin(), result_files.end());
  std::sort(correlation_files.begin(), correlation_files.end());
  std::sort(norm_files.begin(), norm_files.end());

  auto lines_of = [](const fs::path& p) {
    std::vector<std::string> lines;
    std::istringstream in(read_text(p));
    for (std::string line; std::getline(in, line);)
      if (!line.empty() && line != "\r") lines.push_back(line);
    return lines;
  };

  std::vector<ResultRow> rows;
  for (const auto& f : result_files) {
    const auto lines = lines_of(f);
    if (lines.empty() || lines.front() != result_csv_header())
      throw Error(ErrorCode::SchemaError, "unexpected header in " + f.string());
    for (std::size_t i = 1; i < lines.size(); ++i) {
      try {
        rows.push_back(parse_result_row(lines[i]));
      } catch (const Error& e) {
        throw Error(ErrorCode::SchemaError, f.string() + " line " + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }
  if (rows.empty()) throw Error(ErrorCode::EmptyResults, "no result rows under " + results_dir.string());

  struct Acc {
    std::size_t n = 0;
    double sum = 0.0, lo = INFINITY, hi = -INFINITY;
    void add(double v) {
      ++n;
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  };
  std::map<std::pair<std::string, std::string>, Acc> by_model;
  std::map<std::pair<std::string, double>, Acc> by_fraction;
  for (const auto& r : rows) {
    by_model[{r.model, r.stage}].add(r.rad);
    if (r.data_fraction > 0.0) by_fraction[{r.stage, r.data_fraction}].add(r.rad);
  }
  std::string model_csv = "model,stage,n,mean_rad,min_rad,max_rad\n";
  for (const auto& [k, a] : by_model)
    model_csv += k.first + "," + k.second + "," + std::to_string(a.n) + "," + fmt(a.sum / a.n) + "," + fmt(a.lo) +
                 "," + fmt(a.hi) + "\n";
  std::string fraction_csv = "stage,data_fraction,n,mean_rad,min_rad,max_rad\n";
  for (const auto& [k, a] : by_fraction)
    fraction_csv += k.first + "," + fmt(k.second) + "," + std::to_string(a.n) + "," + fmt(a.sum / a.n) + "," +
                    fmt(a.lo) + "," + fmt(a.hi) + "\n";

  std::string corr_csv = "source,i,j,value\n";
  for (const auto& f : correlation_files) {
    const auto lines = lines_of(f);
    if (lines.empty() || lines.front() != "i,j,value") throw Error(ErrorCode::SchemaError, "unexpected header in " + f.string());
    const std::string source = fs::relative(f.parent_path(), results_dir).generic_string();
    for (std::size_t i = 1; i < lines.size(); ++i) corr_csv += (source.empty() ? "." : source) + "," + lines[i] + "\n";
  }
  std::string norms_csv = "experiment,model,stage,layer,name,value\n";
  for (const auto& f : norm_files) {
    const auto lines = lines_of(f);
    if (lines.empty() || lines.front() != "experiment,model,stage,layer,name,value")
      throw Error(ErrorCode::SchemaError, "unexpected header in " + f.string());
    for (std::size_t i = 1; i < lines.size(); ++i) norms_csv += lines[i] + "\n";
  }

  CommandResult r;
  const std::pair<const char*, const std::string*> outputs[] = {{"rad_vs_model.csv", &model_csv},
                                                                {"rad_vs_datafraction.csv", &fraction_csv},
                                                                {"correlation_matrix.csv", &corr_csv},
                                                                {"layer_norms.csv", &norms_csv}};
  for (const auto& [name, text] : outputs) {
    write_text(out_dir / name, *text);
    r.files.push_back(out_dir / name);
  }
  r.summary = std::to_string(rows.size()) + " result rows from " + std::to_string(result_files.size()) + " files";
  return r;
}

}  // namespace coldcarve
