#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "coldcarve/error.hpp"
#include "coldcarve/memory_sim.hpp"

using namespace coldcarve;

namespace {

MemoryImage filled(std::size_t n, std::uint8_t byte) {
  MemoryImage m;
  m.bytes.assign(n, byte);
  return m;
}

bool within_3sigma(double hat, double p, double n) { return std::abs(hat - p) <= 3 * std::sqrt(p * (1 - p) / n); }

}  // namespace

TEST_CASE("decay identities") {
  const MemoryImage ones = filled(4096, 0xFF);
  CHECK(apply_decay(ones, {0.0, 0.0, 1}) == ones);
  CHECK(apply_decay(ones, {1.0, 0.0, 1}) == filled(4096, 0x00));
  CHECK(apply_decay(filled(4096, 0x00), {0.0, 1.0, 1}) == ones);
  CHECK_THROWS_AS(apply_decay(ones, {1.5, 0.0, 1}), Error);
}

TEST_CASE("decay rates are binomial") {
  const std::size_t n = 1 << 20;
  const auto down = bit_error_rate(filled(n, 0xFF), apply_decay(filled(n, 0xFF), {0.01, 0.0, 3}));
  CHECK(within_3sigma(down.rho0_hat, 0.01, 8.0 * n));
  const auto up = bit_error_rate(filled(n, 0), apply_decay(filled(n, 0), {0.0, 0.001, 4}));
  CHECK(within_3sigma(up.rho1_hat, 0.001, 8.0 * n));
}

TEST_CASE("bit_error_rate oracles") {
  MemoryImage a = filled(125, 0xFF), b = a;  // 1000 one-bits
  for (int i = 0; i < 10; ++i) b.bytes[i * 10] ^= 0x01;
  const auto r = bit_error_rate(a, b);
  CHECK(r.rho0_hat == doctest::Approx(0.01));
  MemoryImage mixed = filled(64, 0x0F), inverted = filled(64, 0xF0);
  const auto inv = bit_error_rate(mixed, inverted);
  CHECK(inv.rho0_hat == 1.0);
  CHECK(inv.rho1_hat == 1.0);
  CHECK_THROWS_AS(bit_error_rate(a, filled(3, 0)), Error);
}

TEST_CASE("majority vote") {
  TrialSet t;
  t.trials = {filled(1, 1), filled(1, 1), filled(1, 0)};
  CHECK(majority_vote(t).bytes[0] == 1);
  t.trials.pop_back();
  try {
    majority_vote(t);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EvenTrialCount);
  }
}

TEST_CASE("fixed positions give fully correlated errors") {
  const MemoryImage truth = filled(1 << 14, 0xA5);
  const auto fixed = make_trials(truth, {0.01, 0.001, 7}, 5, CorrelationMode::FixedPositions);
  CHECK(error_cross_correlation(fixed, truth).min_off_diagonal() >= 0.9);
  const auto indep = make_trials(truth, {0.01, 0.001, 7}, 5, CorrelationMode::Independent, true);
  CHECK(error_cross_correlation(indep, truth).mean_off_diagonal() < 0.1);
  const auto serial = make_trials(truth, {0.01, 0.001, 7}, 5, CorrelationMode::Independent, false);
  CHECK(serial.trials == indep.trials);
}

TEST_CASE("synthesize_dump places artifacts without overlap") {
  const std::string xml = "<net name=\"x\"></net>";
  const Bytes blob(64, 0x3F);
  for (auto filler : {FillerProfile::RandomBytes, FillerProfile::AsciiText, FillerProfile::Mixed}) {
    const auto img = synthesize_dump(xml, blob, filler, 4096, 11);
    CHECK(img.bytes.size() == 4096);
    CHECK_NOTHROW(img.validate());
    const auto* x = img.find("xml");
    const auto* b = img.find("bin");
    REQUIRE(x);
    REQUIRE(b);
    CHECK(std::string(img.bytes.begin() + x->offset, img.bytes.begin() + x->offset + x->length) == xml);
    CHECK(Bytes(img.bytes.begin() + b->offset, img.bytes.begin() + b->offset + b->length) == blob);
    CHECK(synthesize_dump(xml, blob, filler, 4096, 11) == img);
  }
  CHECK_THROWS_AS(synthesize_dump(xml, blob, FillerProfile::Mixed, 100, 1), Error);
}

TEST_CASE("image and manifest persist") {
  const auto img = synthesize_dump("<net name=\"x\"></net>", Bytes(64, 1), FillerProfile::Mixed, 2048, 5);
  const auto path = std::filesystem::temp_directory_path() / "coldcarve_unit_image.raw";
  save_image(img, path);
  CHECK(load_image(path) == img);
  CHECK(parse_manifest(format_manifest(img.manifest)) == img.manifest);
}
