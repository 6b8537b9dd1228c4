#include "coldcarve/weight_blob.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "coldcarve/ir_xml.hpp"

namespace coldcarve {

static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);

Bytes encode_floats(std::span<const float> values) {
  Bytes out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) out[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

std::vector<float> decode_floats(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) throw Error(ErrorCode::LengthMismatch, "float blob length is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

Bytes serialize_weights(const Network<float>& network) { return encode_floats(network.parameters()); }

Network<float> deserialize_weights(const IRModel& model, std::span<const std::uint8_t> bytes) {
  const std::size_t expected = 4 * total_params(model);
  if (bytes.size() != expected)
    throw Error(ErrorCode::LengthMismatch,
                "weight blob has " + std::to_string(bytes.size()) + " bytes, model needs " + std::to_string(expected));
  return Network<float>(model, decode_floats(bytes));
}

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return Bytes(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  return std::string(b.begin(), b.end());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void save_checkpoint(const Network<float>& network, const std::filesystem::path& stem) {
  write_text(std::filesystem::path(stem).concat(".xml"), serialize_xml(network.spec()));
  write_file(std::filesystem::path(stem).concat(".bin"), serialize_weights(network));
}

Network<float> load_checkpoint(const std::filesystem::path& stem) {
  const IRModel model = parse_xml(read_text(std::filesystem::path(stem).concat(".xml")));
  return deserialize_weights(model, read_file(std::filesystem::path(stem).concat(".bin")));
}

}  // namespace coldcarve
