#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "coldcarve/network.hpp"

namespace coldcarve {

using Bytes = std::vector<std::uint8_t>;

// Raw little-endian float32 sequence with no header.
Bytes encode_floats(std::span<const float> values);
std::vector<float> decode_floats(std::span<const std::uint8_t> bytes);

Bytes serialize_weights(const Network<float>& network);
// Throws LengthMismatch unless bytes.size() == 4 * total_params(model).
Network<float> deserialize_weights(const IRModel& model, std::span<const std::uint8_t> bytes);

Bytes read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

// Checkpoints are always the .xml + .bin pair; `stem` has no extension.
void save_checkpoint(const Network<float>& network, const std::filesystem::path& stem);
Network<float> load_checkpoint(const std::filesystem::path& stem);

}  // namespace coldcarve
