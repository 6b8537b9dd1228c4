#include "doctest.h"

#include <cmath>
#include <cstring>
#include <functional>
#include <limits>
#include <random>

#include "coldcarve/carver.hpp"
#include "coldcarve/error.hpp"
#include "coldcarve/ir_xml.hpp"
#include "coldcarve/memory_sim.hpp"
#include "coldcarve/weight_blob.hpp"
#include "coldcarve/zoo.hpp"

using namespace coldcarve;

namespace {

Bytes ascii_filler(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::string words = "the quick brown fox jumps over lazy dogs while memory fades ";
  Bytes out(n);
  for (auto& b : out) b = static_cast<std::uint8_t>(words[rng() % words.size()]);
  return out;
}

template <typename E>
ErrorCode code_of(E&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::InvalidArgument;  // sentinel for "no throw"
}

}  // namespace

TEST_CASE("repair_token maps corrupted tokens to the dictionary") {
  const auto dict = TokenDictionary::ir_dialect();
  CHECK(repair_token("layerS", dict, 2) == "layers");
  CHECK(repair_token("precisioN", dict, 2) == "precision");
  CHECK(code_of([&] { repair_token("zzzzzz", dict, 2); }) == ErrorCode::NoMatch);
  CHECK(code_of([&] { repair_token("layers", dict, 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("utf8 validity") {
  const std::string ascii = "abcdefgh";
  CHECK(is_valid_utf8(std::span(reinterpret_cast<const std::uint8_t*>(ascii.data()), ascii.size())));
  const std::uint8_t ff[] = {0xFF};
  CHECK_FALSE(is_valid_utf8(ff));
  const std::uint8_t eacute[] = {0xC3, 0xA9, 0xC3, 0xA9, 0xC3, 0xA9, 0xC3, 0xA9};
  CHECK(is_valid_utf8(eacute));
  CHECK(is_valid_utf8_window(eacute));
}

TEST_CASE("corrupted snippet carves to an input-only model") {
  const std::string snippet =
      "<net name=\"simpla_ffnn\" wers)on=\"7>\n"
      "  <layerS>\n"
      "    <layer id=\"0\" name=\"sequantiah[1_input\" \n"
      "    type=\"I.put\">\n"
      "      <mutput>\n"
      "        <port iD=\"0\" precisioN=\"FP32\">\n"
      "          <dim>14/diM>\n"
      "          <dim>3</dim>\n"
      "        <.port>\n"
      "      </output>\n"
      "    </layer:\n"
      "  </layers>\n"
      "</net>\n";
  Bytes image = ascii_filler(300, 1);
  image.insert(image.begin() + 100, snippet.begin(), snippet.end());
  const auto carve = carve_architecture(image);
  REQUIRE(carve.model.layers.size() == 1);
  CHECK(carve.model.layers[0].kind == LayerKind::Input);
  CHECK(carve.model.input_shape() == Shape{3});
  CHECK(carve.report.xml_found);
  CHECK(carve.report.xml_offset == 100);
  auto repaired = [&](const std::string& word) {
    for (const auto& r : carve.report.xml_repairs)
      if (r.repaired == word) return true;
    return false;
  };
  CHECK(repaired("layers"));
  CHECK(repaired("precision"));
  CHECK(repaired("output"));
}

TEST_CASE("carve_weights finds a float run in ascii filler") {
  std::vector<float> w(16);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : w) v = u(rng);
  Bytes image = ascii_filler(512, 2);
  const Bytes blob = encode_floats(w);
  image.insert(image.begin() + 200, blob.begin(), blob.end());
  const auto carve = carve_weights(image, 16);
  CHECK(carve.values == w);
  CHECK(carve.report.weights_offset == 200);
  CHECK(carve.report.scan_restarts == 0);
  CHECK(code_of([&] { carve_weights(ascii_filler(512, 4), 16); }) == ErrorCode::NotFound);
}

TEST_CASE("decoy run out of range is rejected before the true blob") {
  std::vector<float> decoy(16), w(16);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  for (auto& v : decoy) v = 100.0f + u(rng);
  for (auto& v : w) v = u(rng);
  Bytes image = ascii_filler(1024, 9);
  const Bytes d = encode_floats(decoy), b = encode_floats(w);
  image.insert(image.begin() + 600, b.begin(), b.end());
  image.insert(image.begin() + 160, d.begin(), d.end());
  const auto carve = carve_weights(image, 16);
  CHECK(carve.values == w);
  CHECK(carve.report.scan_restarts >= 1);
}

TEST_CASE("sanitize rules") {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const std::vector<float> in{12.0f, 1e-7f, nan, 0.5f, -12.0f, 0.0f};
  const auto r = sanitize_weights(in);
  CHECK(r.values[0] == doctest::Approx(3.0));
  CHECK(r.values[1] == doctest::Approx(1.28e-5).epsilon(1e-4));
  CHECK(r.values[2] == 0.0f);
  CHECK(r.values[3] == 0.5f);
  CHECK(r.values[4] == doctest::Approx(-3.0));
  CHECK(r.values[5] == 0.0f);
  const std::vector<float> z{6.0f, 0.5f, 1e-9f};
  CHECK(zero_out_of_range(z) == std::vector<float>{0.0f, 0.5f, 0.0f});
}

TEST_CASE("zero-decay recovery is bit-identical for random models") {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const IRModel m = random_model(rng);
    Network<float> net(m);
    net.initialize(rng());
    auto params = net.parameters();
    std::normal_distribution<float> bias(0.0f, 0.1f);
    for (const auto& s : net.slices())
      for (std::size_t k = 0; k < s.bias_count; ++k) params[s.offset + s.weight_count + k] = bias(rng);
    conform_to_threat_model(params);
    const std::string xml = serialize_xml(m);
    const Bytes blob = serialize_weights(net);
    const auto filler = static_cast<FillerProfile>(i % 3);
    const MemoryImage img = synthesize_dump(xml, blob, filler, xml.size() + blob.size() + 8192, rng());
    INFO("model " << i << " filler " << filler_name(filler));
    const auto rec = recover_model(img.view());
    CHECK(same_architecture(rec.model, m));
    CHECK(rec.report.xml_repairs.empty());
    CHECK(rec.report.weights_sanitized.empty());
    const auto got = rec.network.parameters();
    CHECK(std::equal(got.begin(), got.end(), net.parameters().begin(), net.parameters().end(),
                     [](float a, float b) { return std::memcmp(&a, &b, 4) == 0; }));
  }
}

namespace {

// Zero-decay recovery of lenet5 after `edit` rewrites its XML text.
RecoveredModel recover_edited(const std::function<void(std::string&)>& edit, Network<float>& truth) {
  std::mt19937_64 rng(21);
  truth = Network<float>(zoo_model("lenet5"));
  truth.initialize(rng());
  auto params = truth.parameters();
  std::normal_distribution<float> bias(0.0f, 0.1f);
  for (const auto& s : truth.slices())
    for (std::size_t k = 0; k < s.bias_count; ++k) params[s.offset + s.weight_count + k] = bias(rng);
  conform_to_threat_model(params);
  std::string xml = serialize_xml(truth.spec());
  edit(xml);
  const Bytes blob = serialize_weights(truth);
  const MemoryImage img =
      synthesize_dump(xml, blob, FillerProfile::RandomBytes, xml.size() + blob.size() + 8192, 3);
  return recover_model(img.view());
}

}  // namespace

TEST_CASE("weights break a tie between two one-bit shape repairs") {
  // input channels '1' read as '3' (0x31 -> 0x33): the conv input port still
  // says 1, so either side could be the damaged one
  Network<float> truth;
  const auto r = recover_edited(
      [](std::string& xml) {
        const auto port = xml.find("<dim>1</dim>", xml.find("<dim>1</dim>") + 1);
        xml.replace(port, 12, "<dim>3</dim>");
      },
      truth);
  CHECK(same_architecture(r.model, truth.spec()));
  CHECK(r.report.architecture_fallback >= 1);
  const std::span<const float> a = r.network.parameters(), b = truth.parameters();
  CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

TEST_CASE("a value written once can still be repaired") {
  // the kernel size appears nowhere else in the file
  Network<float> truth;
  const auto r = recover_edited(
      [](std::string& xml) { xml.replace(xml.find("kernel=\"5,5\""), 12, "kernel=\"4,4\""); }, truth);
  CHECK(same_architecture(r.model, truth.spec()));
  CHECK(r.report.architecture_fallback == 0);
}

TEST_CASE("a damaged edge block does not sink the carve") {
  Network<float> truth;
  const auto r = recover_edited(
      [](std::string& xml) {
        const auto e = xml.find("<edge ");
        xml.replace(e, 6, "<edxe ");
        const auto e2 = xml.find("<edge ", e);
        xml.replace(e2, 6, "#!$%^ ");
      },
      truth);
  CHECK(same_architecture(r.model, truth.spec()));
}
