// Acceptance run: one PASS/FAIL line per criterion, with the measured
// quantities and wall time. Optional arguments select criteria by number.
#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "../support/gradcheck.hpp"
#include "coldcarve/carver.hpp"
#include "coldcarve/distill.hpp"
#include "coldcarve/ir_xml.hpp"
#include "coldcarve/memory_sim.hpp"
#include "coldcarve/metrics.hpp"
#include "coldcarve/pipeline.hpp"
#include "coldcarve/weight_blob.hpp"
#include "coldcarve/zoo.hpp"

using namespace coldcarve;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? NAN : s / static_cast<double>(v.size());
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + num(v[i], 3);
  return s + "]";
}

// P(more than half of t independent trials flip) for per-trial rate p.
double majority_flip_rate(double p, std::size_t t) {
  double q = 0.0;
  for (std::size_t k = t / 2 + 1; k <= t; ++k)
    q += std::exp(std::lgamma(t + 1.0) - std::lgamma(k + 1.0) - std::lgamma(t - k + 1.0)) * std::pow(p, k) *
         std::pow(1.0 - p, t - k);
  return q;
}

Network<float> victim(const IRModel& m, std::mt19937_64& rng) {
  Network<float> net(m);
  net.initialize(rng());
  auto params = net.parameters();
  std::normal_distribution<float> bias(0.0f, 0.1f);
  for (const auto& s : net.slices())
    for (std::size_t k = 0; k < s.bias_count; ++k) params[s.offset + s.weight_count + k] = bias(rng);
  conform_to_threat_model(params);
  return net;
}

MemoryImage dump_of(const Network<float>& net, std::uint64_t seed) {
  const std::string xml = serialize_xml(net.spec());
  const Bytes blob = serialize_weights(net);
  return synthesize_dump(xml, blob, FillerProfile::Mixed, xml.size() + blob.size() + 65536, seed);
}

// ---------------------------------------------------------------------------

Verdict round_trip() {
  std::mt19937_64 rng(2024);
  std::size_t ok = 0;
  for (int i = 0; i < 200; ++i) {
    const Network<float> net = victim(random_model(rng), rng);
    const MemoryImage truth = dump_of(net, rng());
    const MemoryImage decayed = apply_decay(truth, DecayParams{0.0, 0.0, rng()});
    try {
      const RecoveredModel r = recover_model(decayed.view());
      const auto a = r.network.parameters(), b = net.parameters();
      const bool bits = a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](float x, float y) {
                          return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
                        });
      ok += bits && same_architecture(r.model, net.spec());
    } catch (const Error&) {
    }
  }
  return {ok == 200, std::to_string(ok) + "/200 bit-identical"};
}

Verdict decay_statistics() {
  const std::size_t n = 1 << 20;
  const double bits = 8.0 * n;
  MemoryImage ones{Bytes(n, 0xFF), {}}, zeros{Bytes(n, 0x00), {}};
  const auto down = bit_error_rate(ones, apply_decay(ones, DecayParams{0.01, 0.0, 31}));
  const auto up = bit_error_rate(zeros, apply_decay(zeros, DecayParams{0.0, 0.001, 32}));
  const double s0 = std::sqrt(0.01 * 0.99 / bits), s1 = std::sqrt(0.001 * 0.999 / bits);
  const double z0 = (down.rho0_hat - 0.01) / s0, z1 = (up.rho1_hat - 0.001) / s1;
  return {std::abs(z0) <= 3 && std::abs(z1) <= 3,
          "rho0_hat " + num(down.rho0_hat, 6) + " (z " + num(z0, 3) + "), rho1_hat " + num(up.rho1_hat, 6) +
              " (z " + num(z1, 3) + ")"};
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared stages run once inside whichever criterion needs them first; the
// criteria that depend on them charge these times against their budgets.
double teacher_seconds = 0.0, low_error_seconds = 0.0, high_error_seconds = 0.0;

struct Fixture {
  ExperimentConfig cfg;
  ExperimentData data;
  Network<float> teacher;
  double teacher_accuracy = 0.0;
  Dataset probe;  // FGSM inputs
};

Fixture& fixture() {
  static Fixture f = [] {
    const auto t0 = std::chrono::steady_clock::now();
    Fixture x;
    x.cfg = load_config(fs::path(COLDCARVE_SOURCE_DIR) / "fixtures" / "desk.json");
    x.data = load_data(x.cfg);
    auto t = train_teacher(x.cfg, x.data);
    x.teacher = std::move(t.teacher);
    x.teacher_accuracy = t.test_accuracy;
    std::vector<std::size_t> idx(std::min<std::size_t>(x.cfg.evaluate.fgsm_samples, x.data.test.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    x.probe = x.data.test.subset(idx);
    teacher_seconds = seconds_since(t0);
    return x;
  }();
  return f;
}

// Scored on the pinned fixture teacher. The sweep over every zoo model with a
// large enough XML is reported alongside but does not decide the verdict.
Verdict low_error_architecture() {
  auto trials = [](const Network<float>& net, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const MemoryImage truth = dump_of(net, rng());
    std::size_t ok = 0;
    for (int t = 0; t < 100; ++t) {
      const MemoryImage decayed = apply_decay(truth, DecayParams{2.7e-6, 9e-8, rng()});
      try {
        ok += same_architecture(carve_architecture(decayed.view()).model, net.spec());
      } catch (const Error&) {
      }
    }
    return ok;
  };
  const auto& f = fixture();
  const std::size_t xml_size = serialize_xml(f.teacher.spec()).size();
  const std::size_t ok = trials(f.teacher, 606);
  std::string detail = "fixture " + f.cfg.model + " (" + std::to_string(xml_size) + "B) " + std::to_string(ok) +
                       "/100; zoo sweep:";
  std::uint64_t seed = 700;
  for (const auto& name : zoo_names()) {
    const IRModel m = zoo_model(name);
    const std::size_t size = serialize_xml(m).size();
    if (size < 2048) continue;
    std::mt19937_64 rng(++seed);
    detail += " " + name + " " + std::to_string(trials(victim(m, rng), rng())) + "/100";
  }
  return {xml_size >= 2048 && ok == 100, detail};
}

double fid(const Network<float>& m, float eps) {
  const auto& f = fixture();
  return fidelity(f.teacher, m, f.probe.inputs, f.probe.require_labels(), eps);
}

struct LowErrorRuns {
  std::vector<double> rads;
  std::vector<std::pair<double, double>> fidelity;  // first 5 trials
  std::size_t failures = 0;
};

const LowErrorRuns& low_error_runs() {
  static LowErrorRuns r = [] {
    LowErrorRuns out;
    auto& f = fixture();
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig c = f.cfg;
    c.decay.rho0 = 2.7e-6;
    c.decay.rho1 = 9e-8;
    c.attack.trials = 20;
    const AttackOutcome a = run_attack(f.teacher, c, f.data.test, f.teacher_accuracy, true);
    for (const auto& o : a.outcomes) {
      if (!o.recovered) {
        ++out.failures;
        continue;
      }
      out.rads.push_back(o.rad);
      if (out.fidelity.size() < 5) out.fidelity.emplace_back(fid(o.recovered->network, 0.01f), fid(o.recovered->network, 0.1f));
    }
    low_error_seconds = seconds_since(t0);
    return out;
  }();
  return r;
}

struct HighErrorSeed {
  bool carved = false;
  double uncorrected = NAN, d2 = NAN, d2_split = NAN, retrain = NAN;
  double fid_low = NAN, fid_high = NAN;
};

const std::vector<HighErrorSeed>& high_error_seeds() {
  static std::vector<HighErrorSeed> seeds = [] {
    std::vector<HighErrorSeed> out;
    auto& f = fixture();
    const auto t0 = std::chrono::steady_clock::now();
    const TeacherOracle oracle(f.teacher);
    for (std::uint64_t s = 0; s < 5; ++s) {
      HighErrorSeed h;
      ExperimentConfig c = f.cfg;
      c.seed = s;
      const AttackOutcome a = run_attack(f.teacher, c, f.data.test, f.teacher_accuracy, false);
      const TrialOutcome& o = a.primary();
      if (o.recovered) {
        h.carved = true;
        h.uncorrected = o.rad;
        const auto& rec = *o.recovered;
        const auto d2 = run_correction(oracle, rec.model, rec.carved, f.data, c, f.teacher_accuracy);
        h.d2 = d2.report.rad_after;
        h.fid_low = fid(d2.result.student, 0.01f);
        h.fid_high = fid(d2.result.student, 0.1f);

        ExperimentConfig split = c;
        split.recovery.source = "train";
        const ExperimentData labeled = load_data(split);
        h.d2_split = run_correction(oracle, rec.model, rec.carved, labeled, split, f.teacher_accuracy).report.rad_after;
        split.correction = "retrain";
        h.retrain = run_correction(oracle, rec.model, rec.carved, labeled, split, f.teacher_accuracy).report.rad_after;
      }
      out.push_back(h);
    }
    high_error_seconds = seconds_since(t0);
    return out;
  }();
  return seeds;
}

bool all_carved(const std::vector<HighErrorSeed>& s) {
  return std::all_of(s.begin(), s.end(), [](const auto& h) { return h.carved; });
}

std::vector<double> field(const std::vector<HighErrorSeed>& s, double HighErrorSeed::*m) {
  std::vector<double> v;
  for (const auto& h : s) v.push_back(h.*m);
  return v;
}

Verdict low_error_rad() {
  const auto& f = fixture();
  const auto& r = low_error_runs();
  const double m = mean(r.rads);
  const double spent = teacher_seconds + low_error_seconds;
  return {f.teacher_accuracy >= 0.9 && r.failures == 0 && m <= 0.01 && spent < 300,
          "teacher accuracy " + num(f.teacher_accuracy) + ", carve failures " + std::to_string(r.failures) +
              ", mean RAD over 20 trials " + num(m) + ", max " + num(*std::max_element(r.rads.begin(), r.rads.end())) +
              "; teacher training + 20 trials took " + num(spent, 3) + "s of 300s"};
}

Verdict high_error_degradation() {
  const auto& s = high_error_seeds();
  const auto u = field(s, &HighErrorSeed::uncorrected);
  return {all_carved(s) && mean(u) >= 0.2, "uncorrected RAD " + list(u) + " mean " + num(mean(u))};
}

Verdict kd_correction() {
  const auto& s = high_error_seeds();
  const auto u = field(s, &HighErrorSeed::uncorrected), d = field(s, &HighErrorSeed::d2);
  return {all_carved(s) && mean(d) < 0.1 && mean(d) < mean(u) && high_error_seconds < 900,
          "D2 RAD " + list(d) + " mean " + num(mean(d)) + " vs uncorrected mean " + num(mean(u)) +
              "; attack and correction over 5 seeds took " + num(high_error_seconds, 3) + "s of 900s"};
}

Verdict kd_vs_retrain() {
  const auto& s = high_error_seeds();
  const auto d = field(s, &HighErrorSeed::d2_split), r = field(s, &HighErrorSeed::retrain);
  return {all_carved(s) && mean(r) > mean(d),
          "retrain RAD " + list(r) + " mean " + num(mean(r)) + " vs D2 " + list(d) + " mean " + num(mean(d))};
}

Verdict fidelity_check() {
  const auto& low = low_error_runs();
  const auto& s = high_error_seeds();
  double low_min = 1.0;
  for (const auto& [a, b] : low.fidelity) low_min = std::min({low_min, a, b});
  const auto hl = field(s, &HighErrorSeed::fid_low), hh = field(s, &HighErrorSeed::fid_high);
  const double high_min = std::min(*std::min_element(hl.begin(), hl.end()), *std::min_element(hh.begin(), hh.end()));
  return {low.fidelity.size() == 5 && low_min >= 0.9 && all_carved(s) && high_min >= 0.7,
          "low error min over 5 runs " + num(low_min) + "; after D2 eps 0.01 " + list(hl) + ", eps 0.1 " + list(hh)};
}

Verdict majority_vote_dichotomy() {
  std::mt19937_64 rng(9);
  MemoryImage truth{Bytes(1 << 20), {}};
  for (auto& b : truth.bytes) b = static_cast<std::uint8_t>(rng());
  const DecayParams p{0.01, 0.001, 77};
  std::string detail;
  bool pass = true;
  for (std::size_t t : {3, 5}) {
    const TrialSet set = make_trials(truth, p, t, CorrelationMode::Independent, true);
    const auto v = bit_error_rate(truth, majority_vote(set));
    const double q0 = majority_flip_rate(p.rho0, t), q1 = majority_flip_rate(p.rho1, t);
    const double z0 = (v.rho0_hat - q0) / std::sqrt(q0 * (1 - q0) / v.ones);
    const double z1 = (v.rho1_hat - q1) / std::sqrt(q1 * (1 - q1) / v.zeros);
    pass = pass && v.rho0_hat < p.rho0 && v.rho1_hat < p.rho1 && std::abs(z0) <= 3 && std::abs(z1) <= 3;
    detail += "independent T=" + std::to_string(t) + " rho0 " + num(v.rho0_hat, 3) + " vs " + num(q0, 3) + " (z " +
              num(z0, 2) + "), rho1 " + num(v.rho1_hat, 3) + " vs " + num(q1, 3) + " (z " + num(z1, 2) + "); ";
  }
  const TrialSet fixed = make_trials(truth, p, 5, CorrelationMode::FixedPositions, true);
  double single = 0.0;
  for (const auto& trial : fixed.trials) single += bit_error_rate(truth, trial).overall();
  single /= fixed.trials.size();
  const double voted = bit_error_rate(truth, majority_vote(fixed)).overall();
  const double corr = error_cross_correlation(fixed, truth).min_off_diagonal();
  pass = pass && std::abs(voted - single) <= 0.1 * single && corr >= 0.9;
  detail += "fixed voted " + num(voted, 4) + " vs single " + num(single, 4) + ", min correlation " + num(corr, 3);
  return {pass, detail};
}

Verdict gradient_oracle() {
  std::mt19937_64 rng(123);
  bool pass = true;
  std::string detail;
  for (LayerKind kind : {LayerKind::Dense, LayerKind::Conv2D, LayerKind::MaxPool2D, LayerKind::ReLU, LayerKind::PReLU,
                         LayerKind::Dropout, LayerKind::Flatten, LayerKind::Softmax}) {
    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    for (int c = 0; c < 100; ++c) {
      auto [model, head] = gradcheck::layer_case(kind, rng);
      auto problem = gradcheck::make_problem(model, head, rng);
      const auto o = gradcheck::check(problem);
      worst = std::max(worst, o.worst);
      checked += o.checked;
      skipped += o.skipped;
    }
    pass = pass && worst <= 1e-3;
    detail += std::string(kind_name(kind)) + " " + num(worst, 2) + " (" + std::to_string(skipped) + "/" +
              std::to_string(checked + skipped) + " kinks); ";
  }
  return {pass, "worst relative error " + detail};
}

Verdict decoy_rejection() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> decoy(64), w(64);
  for (auto& v : decoy) v = 100.0f + u(rng);
  for (auto& v : w) v = u(rng);
  Bytes image(4096);
  for (auto& b : image) b = static_cast<std::uint8_t>(' ' + rng() % 95);
  const Bytes d = encode_floats(decoy), b = encode_floats(w);
  std::copy(d.begin(), d.end(), image.begin() + 400);
  std::copy(b.begin(), b.end(), image.begin() + 2400);
  try {
    const auto c = carve_weights(image, w.size());
    return {c.values == w && c.report.weights_offset == 2400 && c.report.scan_restarts >= 1,
            "found at " + std::to_string(c.report.weights_offset) + ", scan_restarts " +
                std::to_string(c.report.scan_restarts)};
  } catch (const Error& e) {
    return {false, e.what()};
  }
}

Verdict sanitization_properties() {
  std::mt19937_64 rng(77);
  std::vector<float> in(10000);
  for (std::size_t i = 0; i < in.size(); ++i) {
    switch (rng() % 5) {
      case 0: in[i] = std::bit_cast<float>(static_cast<std::uint32_t>(rng())); break;  // any pattern, NaN included
      case 1: in[i] = std::ldexp(1.0f + (rng() % 1000) / 1000.0f, static_cast<int>(rng() % 60)) * (rng() % 2 ? 1 : -1); break;
      case 2: in[i] = std::ldexp(1.0f, -static_cast<int>(17 + rng() % 110)) * (rng() % 2 ? 1 : -1); break;
      case 3: in[i] = std::numeric_limits<float>::quiet_NaN(); break;
      default: in[i] = std::uniform_real_distribution<float>(-5.0f, 5.0f)(rng);
    }
  }
  const auto once = sanitize_weights(in).values;
  const auto twice = sanitize_weights(once).values;
  std::size_t bad = 0, halved = 0, doubled = 0, nans = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const float x = in[i], y = once[i];
    bool ok = std::bit_cast<std::uint32_t>(y) == std::bit_cast<std::uint32_t>(twice[i]);
    if (!std::isfinite(x)) {
      ok = ok && y == 0.0f;
      nans += std::isnan(x);
    } else if (std::abs(x) > 5.0f) {
      int k = 0;
      float t = x;
      while (std::abs(t) > 5.0f) t *= 0.5f, ++k;
      ok = ok && y == t && std::abs(y) > 2.5f && std::abs(y) <= 5.0f && std::ldexp(y, k) == x;
      ++halved;
    } else if (x != 0.0f && std::abs(x) < 1e-5f) {
      ok = ok && std::abs(y) >= 1e-5f && std::abs(y) < 2e-5f && std::signbit(x) == std::signbit(y) &&
           std::ldexp(y, std::ilogb(x) - std::ilogb(y)) == x;
      ++doubled;
    } else {
      ok = ok && std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y);
    }
    bad += !ok;
  }
  return {bad == 0, std::to_string(in.size()) + " cases, " + std::to_string(halved) + " halved, " +
                        std::to_string(doubled) + " doubled, " + std::to_string(nans) + " NaN, " +
                        std::to_string(bad) + " violations"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // wall-clock bound on the call; 0 when none or charged inside
  std::function<Verdict()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {1, "round-trip exactness", 60, round_trip},
      {2, "architecture recovery at low error", 120, low_error_architecture},
      {3, "decay statistics", 0, decay_statistics},
      {4, "low-error RAD", 0, low_error_rad},
      {5, "high-error degradation", 0, high_error_degradation},
      {6, "D2 correction", 0, kd_correction},
      {7, "D2 beats retraining", 0, kd_vs_retrain},
      {8, "FGSM fidelity", 0, fidelity_check},
      {9, "majority-vote dichotomy", 0, majority_vote_dichotomy},
      {10, "gradient oracle", 0, gradient_oracle},
      {11, "decoy rejection", 0, decoy_rejection},
      {12, "sanitization properties", 0, sanitization_properties},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::string timing = num(secs, 3) + "s";
    if (c.budget_s > 0) {
      timing += " of " + num(c.budget_s, 4) + "s";
      if (secs > c.budget_s) {
        v.pass = false;
        v.detail += " [over time budget]";
      }
    }
    failures += !v.pass;
    std::printf("%s %2d %-36s %s (%s)\n", v.pass ? "PASS" : "FAIL", c.id, c.name, v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
