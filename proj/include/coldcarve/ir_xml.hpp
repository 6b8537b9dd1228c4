#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "coldcarve/model_ir.hpp"

namespace coldcarve {

inline constexpr int kIrVersion = 7;
inline constexpr std::string_view kPrecisionFP32 = "FP32";

struct XmlWriteOptions {
  bool emit_cli_parameters = true;
};

// Canonical, byte-deterministic rendering of the architecture file.
std::string serialize_xml(const IRModel& model, const XmlWriteOptions& options = {});

// Throws Error(MalformedXml) for unbalanced or unknown tags and
// Error(SchemaViolation) for missing/invalid attributes or inconsistent shapes.
IRModel parse_xml(std::string_view text);

// Attribute layout of a layer's <data/> element. `arity` is the number of
// comma-separated integers; `decimal` marks the single float attribute.
struct DataAttribute {
  std::string_view name;
  int arity = 1;
  bool decimal = false;
};
std::vector<DataAttribute> data_attributes(LayerKind kind);

// Values in the same order as data_attributes(kind), rendered as text.
std::vector<std::string> data_values(const LayerSpec& layer, const Shape& input_shape);

std::string format_float(float value);

}  // namespace coldcarve
