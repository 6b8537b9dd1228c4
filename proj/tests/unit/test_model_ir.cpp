#include "doctest.h"

#include <random>

#include "coldcarve/error.hpp"
#include "coldcarve/ir_xml.hpp"
#include "coldcarve/model_ir.hpp"
#include "coldcarve/zoo.hpp"

using namespace coldcarve;

TEST_CASE("total_params counts weights and biases") {
  CHECK(total_params(ModelBuilder("d").input({3}).dense(4).build()) == 16);
  CHECK(total_params(ModelBuilder("c").input({1, 4, 4}).conv2d(3, 8).flatten().dense(10).build()) == 410);
  CHECK(total_params(ModelBuilder("i").input({5}).build()) == 0);
}

TEST_CASE("input layer serializes its port dims") {
  const std::string xml = serialize_xml(ModelBuilder("m").input({3}).build());
  CHECK(xml.find("<port id=\"0\" precision=\"FP32\">") != std::string::npos);
  CHECK(xml.find("<dim>1</dim>") != std::string::npos);
  CHECK(xml.find("<dim>3</dim>") != std::string::npos);
}

TEST_CASE("parse_xml rejects broken documents with distinct codes") {
  const std::string good = serialize_xml(ModelBuilder("m").input({3}).dense(4).build());
  std::string unclosed = good;
  unclosed.erase(unclosed.find("</layers>"), 9);
  try {
    parse_xml(unclosed);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedXml);
  }
  std::string foo = good;
  const auto at = foo.find("type=\"FullyConnected\"") != std::string::npos ? foo.find("type=\"FullyConnected\"")
                                                                            : foo.find("type=\"Dense\"");
  REQUIRE(at != std::string::npos);
  foo.replace(foo.find('"', at) + 1, foo.find('"', foo.find('"', at) + 1) - foo.find('"', at) - 1, "Foo");
  try {
    parse_xml(foo);
    FAIL("accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaViolation);
  }
}

TEST_CASE("xml round trip over random and zoo models") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 200; ++i) {
    const IRModel m = random_model(rng);
    CHECK(parse_xml(serialize_xml(m)) == m);
  }
  for (const auto& name : zoo_names()) {
    const IRModel m = zoo_model(name);
    CHECK(parse_xml(serialize_xml(m)) == m);
  }
}

TEST_CASE("builder rejects an empty name") {
  CHECK_THROWS_AS(ModelBuilder("").input({2}).build(), Error);
}
