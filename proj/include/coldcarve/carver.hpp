#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "coldcarve/model_ir.hpp"
#include "coldcarve/network.hpp"

namespace coldcarve {

struct XmlRepair {
  std::size_t offset = 0;  // image offset of the corrupted token
  std::string original;
  std::string repaired;
};

enum class SanitizeReason { AboveRange, BelowMagnitude, NonFinite };
std::string_view reason_name(SanitizeReason r);

struct SanitizeEdit {
  std::size_t index = 0;
  float original = 0.0f;
  float corrected = 0.0f;
  SanitizeReason reason = SanitizeReason::AboveRange;
};

struct CarveReport {
  bool xml_found = false;
  std::size_t xml_offset = 0;
  std::size_t xml_length = 0;
  std::vector<XmlRepair> xml_repairs;
  std::size_t weights_found = 0;
  std::size_t weights_offset = 0;
  std::vector<SanitizeEdit> weights_sanitized;
  std::size_t scan_restarts = 0;   // runs of T values rejected by the range test
  std::size_t utf8_resets = 0;     // partial runs discarded at a valid window
  std::size_t islands = 0;         // valid windows tolerated inside a run
  long alignment_shift = 0;        // bytes the accepted run was moved by refinement
  std::size_t architecture_fallback = 0;  // 0: best shapes; k: k-th alternative fitted the weights

  // Structured text, one edit per line.
  std::string to_text() const;
};

struct CarveOptions {
  std::size_t max_distance = 2;        // edits per token before a repair is refused
  double range_lo = -5.0;
  double range_hi = 5.0;
  double range_fraction = 0.9;         // accept a run when this share is in range
  double min_magnitude = 1e-5;
  std::size_t island_tolerance = 2;    // consecutive valid windows kept inside a run
  std::size_t max_candidates = 8;      // <net> start candidates tried
};

// Known vocabulary of the IR dialect. Tags, attribute names and layer types
// are matched case-insensitively; attribute values are case-sensitive.
class TokenDictionary {
 public:
  struct Entry {
    std::string key;        // comparison form
    std::string canonical;  // returned form
  };

  TokenDictionary() = default;
  void add(std::string_view canonical, bool case_sensitive);
  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  bool contains(std::string_view canonical) const;

  static TokenDictionary ir_dialect();
  static TokenDictionary layer_types();
  static TokenDictionary precisions();

 private:
  std::vector<Entry> entries_;
  std::vector<bool> case_sensitive_;
  friend std::string repair_token(std::string_view, const TokenDictionary&, std::size_t);
};

std::size_t edit_distance(std::string_view a, std::string_view b);

// Closest entry within max_distance; ties go to the longest, then the
// lexicographically smallest entry. Throws NoMatch.
std::string repair_token(std::string_view corrupt, const TokenDictionary& dict, std::size_t max_distance);

// Complete, well-formed UTF-8 (no overlongs, surrogates or code points above
// U+10FFFF). Windows of 8 bytes are the scan unit; 4 is allowed for the odd tail.
bool is_valid_utf8(std::span<const std::uint8_t> bytes);
bool is_valid_utf8_window(std::span<const std::uint8_t> window);

struct ArchitectureAlternative {
  IRModel model;
  std::vector<XmlRepair> repairs;
};

struct ArchitectureCarve {
  IRModel model;
  CarveReport report;
  // Other shape assignments nearly as close to the carved text, cheapest
  // first; recover_model falls back to them when the weights do not fit.
  std::vector<ArchitectureAlternative> alternatives;
};
// Throws NotFound or Unrepairable.
ArchitectureCarve carve_architecture(std::span<const std::uint8_t> image, const CarveOptions& options = {});

struct WeightCarve {
  std::vector<float> values;
  CarveReport report;
};
// Throws NotFound when the scan exhausts the image.
WeightCarve carve_weights(std::span<const std::uint8_t> image, std::size_t count, const CarveOptions& options = {});

struct SanitizeResult {
  std::vector<float> values;
  CarveReport report;
};
SanitizeResult sanitize_weights(std::span<const float> values, double lo = -5.0, double hi = 5.0, double eps = 1e-5);
std::vector<float> zero_out_of_range(std::span<const float> values, double lo = -5.0, double hi = 5.0,
                                     double eps = 1e-5);

// Brings genuine parameters inside the threat-model range so an uncorrupted
// victim survives sanitization unchanged: 0 < |v| < eps snaps to 0 and
// |v| > hi clamps to +-hi. Returns the number of values changed.
std::size_t conform_to_threat_model(std::span<float> values, double hi = 5.0, double eps = 1e-5);

struct RecoveredModel {
  IRModel model;
  Network<float> network;     // sanitized parameters
  std::vector<float> carved;  // parameters as carved, before sanitization
  CarveReport report;
};
RecoveredModel recover_model(std::span<const std::uint8_t> image, const CarveOptions& options = {});

}  // namespace coldcarve
