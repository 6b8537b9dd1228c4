#include "coldcarve/carver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>

#include "coldcarve/error.hpp"

namespace coldcarve {

namespace {

char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = lower(c);
  return out;
}

// Splits text into symbols: a valid UTF-8 sequence is one symbol, any other
// byte stands alone. Lets a multi-byte corruption count as one edit.
std::vector<std::string_view> symbols(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b = static_cast<unsigned char>(s[i]);
    std::size_t len = b < 0x80 ? 1 : (b >> 5) == 0x6 ? 2 : (b >> 4) == 0xE ? 3 : (b >> 3) == 0x1E ? 4 : 1;
    if (len > 1 &&
        (i + len > s.size() ||
         !is_valid_utf8(std::span(reinterpret_cast<const std::uint8_t*>(s.data() + i), len))))
      len = 1;
    out.push_back(s.substr(i, len));
    i += len;
  }
  return out;
}

std::string printable(std::string_view s) {
  std::string out;
  for (char c : s) {
    const auto u = static_cast<unsigned char>(c);
    if (u > 0x20 && u < 0x7F && c != '\\') {
      out += c;
    } else {
      char buf[5];
      std::snprintf(buf, sizeof buf, "\\x%02X", u);
      out += buf;
    }
  }
  return out.empty() ? std::string("\"\"") : out;
}

}  // namespace

std::string_view reason_name(SanitizeReason r) {
  switch (r) {
    case SanitizeReason::AboveRange: return "AboveRange";
    case SanitizeReason::BelowMagnitude: return "BelowMagnitude";
    case SanitizeReason::NonFinite: return "NonFinite";
  }
  return "?";
}

std::string CarveReport::to_text() const {
  std::ostringstream out;
  out << "xml_found " << (xml_found ? 1 : 0) << '\n';
  out << "xml_offset " << xml_offset << '\n';
  out << "xml_length " << xml_length << '\n';
  out << "xml_repairs " << xml_repairs.size() << '\n';
  out << "weights_found " << weights_found << '\n';
  out << "weights_offset " << weights_offset << '\n';
  out << "weights_sanitized " << weights_sanitized.size() << '\n';
  out << "scan_restarts " << scan_restarts << '\n';
  out << "utf8_resets " << utf8_resets << '\n';
  out << "islands " << islands << '\n';
  out << "alignment_shift " << alignment_shift << '\n';
  out << "architecture_fallback " << architecture_fallback << '\n';
  for (const auto& r : xml_repairs)
    out << "repair " << r.offset << ' ' << printable(r.original) << ' ' << printable(r.repaired) << '\n';
  out.precision(9);
  for (const auto& s : weights_sanitized)
    out << "sanitize " << s.index << ' ' << s.original << ' ' << s.corrected << ' ' << reason_name(s.reason) << '\n';
  return out.str();
}

void TokenDictionary::add(std::string_view canonical, bool case_sensitive) {
  if (contains(canonical)) return;
  entries_.push_back({case_sensitive ? std::string(canonical) : lowercase(canonical), std::string(canonical)});
  case_sensitive_.push_back(case_sensitive);
}

bool TokenDictionary::contains(std::string_view canonical) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.canonical == canonical; });
}

TokenDictionary TokenDictionary::ir_dialect() {
  TokenDictionary d;
  for (auto tag : {"net", "layers", "layer", "data", "input", "output", "port", "dim", "edges", "edge", "cli_parameters"})
    d.add(tag, false);
  for (auto attr : {"name", "version", "id", "type", "precision", "out-size", "kernel", "strides", "pads", "channels",
                    "rate", "from-layer", "from-port", "to-layer", "to-port", "value"})
    d.add(attr, false);
  for (LayerKind k : kAllLayerKinds) d.add(kind_name(k), false);
  d.add("FP32", true);
  return d;
}

TokenDictionary TokenDictionary::layer_types() {
  TokenDictionary d;
  for (LayerKind k : kAllLayerKinds) d.add(kind_name(k), false);
  return d;
}

TokenDictionary TokenDictionary::precisions() {
  TokenDictionary d;
  d.add("FP32", true);
  return d;
}

std::size_t edit_distance(std::string_view a, std::string_view b) {
  const auto sa = symbols(a), sb = symbols(b);
  std::vector<std::size_t> prev(sb.size() + 1), cur(sb.size() + 1);
  for (std::size_t j = 0; j <= sb.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= sa.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= sb.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (sa[i - 1] == sb[j - 1] ? 0 : 1)});
    std::swap(prev, cur);
  }
  return prev[sb.size()];
}

std::string repair_token(std::string_view corrupt, const TokenDictionary& dict, std::size_t max_distance) {
  if (max_distance < 1) throw Error(ErrorCode::InvalidArgument, "max_distance must be at least 1");
  if (dict.empty()) throw Error(ErrorCode::InvalidArgument, "empty token dictionary");
  const std::string folded = lowercase(corrupt);
  const TokenDictionary::Entry* best = nullptr;
  std::size_t best_distance = 0;
  for (std::size_t i = 0; i < dict.entries_.size(); ++i) {
    const auto& e = dict.entries_[i];
    const std::size_t d = edit_distance(dict.case_sensitive_[i] ? std::string(corrupt) : folded, e.key);
    if (d > max_distance) continue;
    const bool better = !best || d < best_distance ||
                        (d == best_distance && (e.canonical.size() > best->canonical.size() ||
                                                (e.canonical.size() == best->canonical.size() && e.canonical < best->canonical)));
    if (better) {
      best = &e;
      best_distance = d;
    }
  }
  if (!best)
    throw Error(ErrorCode::NoMatch, "no dictionary entry within distance " + std::to_string(max_distance) + " of '" +
                                        printable(corrupt) + "'");
  return best->canonical;
}

bool is_valid_utf8(std::span<const std::uint8_t> s) {
  std::size_t i = 0;
  while (i < s.size()) {
    const std::uint8_t b = s[i];
    std::size_t len;
    std::uint32_t cp;
    if (b < 0x80) {
      ++i;
      continue;
    } else if (b >= 0xC2 && b <= 0xDF) {
      len = 2;
      cp = b & 0x1F;
    } else if (b >= 0xE0 && b <= 0xEF) {
      len = 3;
      cp = b & 0x0F;
    } else if (b >= 0xF0 && b <= 0xF4) {
      len = 4;
      cp = b & 0x07;
    } else {
      return false;  // continuation byte, overlong lead C0/C1, or F5..FF
    }
    if (i + len > s.size()) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((s[i + k] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (s[i + k] & 0x3F);
    }
    if ((len == 3 && cp < 0x800) || (len == 4 && (cp < 0x10000 || cp > 0x10FFFF)) || (cp >= 0xD800 && cp <= 0xDFFF))
      return false;
    i += len;
  }
  return true;
}

bool is_valid_utf8_window(std::span<const std::uint8_t> window) {
  if (window.size() != 8 && window.size() != 4)
    throw Error(ErrorCode::InvalidArgument, "UTF-8 scan windows are 8 bytes (4 for an odd tail)");
  return is_valid_utf8(window);
}

SanitizeResult sanitize_weights(std::span<const float> values, double lo, double hi, double eps) {
  SanitizeResult r;
  r.values.assign(values.begin(), values.end());
  for (std::size_t i = 0; i < r.values.size(); ++i) {
    float& v = r.values[i];
    const float original = v;
    SanitizeReason reason;
    if (!std::isfinite(v)) {
      v = 0.0f;
      reason = SanitizeReason::NonFinite;
    } else if (v > hi || v < lo) {
      while (v > hi || v < lo) v *= 0.5f;
      reason = SanitizeReason::AboveRange;
    } else if (v != 0.0f && std::abs(v) < eps) {
      while (std::abs(v) < eps) v *= 2.0f;
      reason = SanitizeReason::BelowMagnitude;
    } else {
      continue;
    }
    r.report.weights_sanitized.push_back({i, original, v, reason});
  }
  return r;
}

std::vector<float> zero_out_of_range(std::span<const float> values, double lo, double hi, double eps) {
  std::vector<float> out(values.begin(), values.end());
  for (float& v : out)
    if (!std::isfinite(v) || v > hi || v < lo || (v != 0.0f && std::abs(v) < eps)) v = 0.0f;
  return out;
}

RecoveredModel recover_model(std::span<const std::uint8_t> image, const CarveOptions& options) {
  auto arch = carve_architecture(image, options);
  std::optional<WeightCarve> found;
  try {
    found = carve_weights(image, total_params(arch.model), options);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotFound) throw;
    // No blob of the implied size: try the near-tie shape assignments.
    for (std::size_t k = 0; k < arch.alternatives.size() && !found; ++k) {
      try {
        found = carve_weights(image, total_params(arch.alternatives[k].model), options);
      } catch (const Error& inner) {
        if (inner.code() != ErrorCode::NotFound) throw;
        continue;
      }
      arch.model = std::move(arch.alternatives[k].model);
      arch.report.xml_repairs = std::move(arch.alternatives[k].repairs);
      arch.report.architecture_fallback = k + 1;
    }
    if (!found) throw;
  }
  auto& weights = *found;
  auto clean = sanitize_weights(weights.values, options.range_lo, options.range_hi, options.min_magnitude);

  RecoveredModel out;
  out.report = arch.report;
  out.report.weights_found = weights.report.weights_found;
  out.report.weights_offset = weights.report.weights_offset;
  out.report.scan_restarts = weights.report.scan_restarts;
  out.report.utf8_resets = weights.report.utf8_resets;
  out.report.islands = weights.report.islands;
  out.report.alignment_shift = weights.report.alignment_shift;
  out.report.weights_sanitized = std::move(clean.report.weights_sanitized);
  out.model = arch.model;
  out.carved = std::move(weights.values);
  out.network = Network<float>(arch.model, std::move(clean.values));
  return out;
}

std::size_t conform_to_threat_model(std::span<float> values, double hi, double eps) {
  std::size_t changed = 0;
  for (float& v : values) {
    const double a = std::abs(static_cast<double>(v));
    if (!std::isfinite(v)) {
      v = 0.0f;
    } else if (a > hi) {
      v = static_cast<float>(std::copysign(hi, static_cast<double>(v)));
    } else if (a > 0.0 && a < eps) {
      v = 0.0f;
    } else {
      continue;
    }
    ++changed;
  }
  return changed;
}

}  // namespace coldcarve
