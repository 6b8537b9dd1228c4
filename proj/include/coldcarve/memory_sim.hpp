#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coldcarve/weight_blob.hpp"

namespace coldcarve {

struct ManifestEntry {
  std::size_t offset = 0;
  std::size_t length = 0;
  std::string tag;  // "xml" or "bin"
  bool operator==(const ManifestEntry&) const = default;
};

// RAM contents. The manifest is ground truth for evaluation only; carving
// functions take the raw bytes and never see it.
struct MemoryImage {
  Bytes bytes;
  std::vector<ManifestEntry> manifest;

  std::span<const std::uint8_t> view() const { return bytes; }
  const ManifestEntry* find(std::string_view tag) const;
  void validate() const;  // bounds and overlap; throws InvalidArgument
  bool operator==(const MemoryImage&) const = default;
};

enum class FillerProfile { RandomBytes, AsciiText, Mixed };
std::string_view filler_name(FillerProfile p);
FillerProfile filler_from_name(std::string_view name);  // throws Config

// Zero bytes kept on both sides of each artifact (allocator padding).
inline constexpr std::size_t kGuardBytes = 32;
inline constexpr std::size_t kArtifactAlignment = 16;

// Embeds the XML text and the weight blob at seeded, aligned, non-overlapping
// offsets amid filler. Throws TooSmall when they do not fit.
MemoryImage synthesize_dump(std::string_view xml, std::span<const std::uint8_t> blob, FillerProfile filler,
                            std::size_t total_size, std::uint64_t seed);

struct DecayParams {
  double rho0 = 0.0;  // P(1 -> 0)
  double rho1 = 0.0;  // P(0 -> 1)
  std::uint64_t seed = 0;
  void validate() const;  // throws InvalidArgument
};

// Positions that would flip under `params`, sampled independently of the
// image content: bit i flips iff it is 1 and in `down`, or 0 and in `up`.
struct DecayMarks {
  std::vector<std::uint64_t> down;  // sorted bit indices (rho0 process)
  std::vector<std::uint64_t> up;    // sorted bit indices (rho1 process)
};
DecayMarks sample_decay_marks(std::size_t byte_count, const DecayParams& params);
MemoryImage apply_marks(const MemoryImage& image, const DecayMarks& marks);

// Each 1-bit flips with probability rho0, each 0-bit with probability rho1.
MemoryImage apply_decay(const MemoryImage& image, const DecayParams& params);

struct BitErrorRate {
  double rho0_hat = 0.0;
  double rho1_hat = 0.0;
  std::uint64_t ones = 0, zeros = 0;
  std::uint64_t flips_down = 0, flips_up = 0;
  double overall() const;
};
BitErrorRate bit_error_rate(const MemoryImage& original, const MemoryImage& decayed);

enum class CorrelationMode { Independent, FixedPositions };
std::string_view correlation_mode_name(CorrelationMode m);
CorrelationMode correlation_mode_from_name(std::string_view name);

struct TrialSet {
  std::vector<MemoryImage> trials;
  CorrelationMode mode = CorrelationMode::Independent;
};

// Trial k of Independent mode uses seed params.seed + k; FixedPositions
// samples one mark set from params.seed and applies it to every trial.
TrialSet make_trials(const MemoryImage& truth, const DecayParams& params, std::size_t count, CorrelationMode mode,
                     bool parallel = false);

// Bitwise majority across an odd number (>= 3) of equally long trials.
MemoryImage majority_vote(const TrialSet& trials);

struct CorrelationMatrix {
  std::size_t n = 0;
  std::vector<double> values;                // row-major n x n
  std::vector<std::size_t> degenerate_trials;  // trials with zero error variance
  double at(std::size_t i, std::size_t j) const { return values[i * n + j]; }
  double min_off_diagonal() const;
  double mean_off_diagonal() const;
};

// Pearson correlation between per-trial error-position bit vectors. A trial
// whose error vector has zero variance correlates 0 with the others.
CorrelationMatrix error_cross_correlation(const TrialSet& trials, const MemoryImage& ground_truth);

// Sidecar: one "offset length tag" line per entry.
std::string format_manifest(const std::vector<ManifestEntry>& manifest);
std::vector<ManifestEntry> parse_manifest(std::string_view text);
void save_image(const MemoryImage& image, const std::filesystem::path& path);  // writes path and path.manifest
MemoryImage load_image(const std::filesystem::path& path);                      // manifest optional

}  // namespace coldcarve
