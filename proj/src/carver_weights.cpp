#include <cmath>

#include "coldcarve/carver.hpp"
#include "coldcarve/error.hpp"
#include "coldcarve/weight_blob.hpp"

namespace coldcarve {

namespace {

bool in_range(float v, const CarveOptions& o) { return v >= o.range_lo && v <= o.range_hi; }

bool plausible(float v, const CarveOptions& o) { return in_range(v, o) && std::abs(v) >= o.min_magnitude; }

// Moves an accepted run by up to two windows (in float-sized steps) to the
// placement holding the most plausible weights; ties keep the original.
long refine_start(std::span<const std::uint8_t> image, std::size_t start, std::size_t run_bytes,
                  const CarveOptions& o) {
  long best_shift = 0;
  std::size_t best_score = 0;
  bool have = false;
  for (long shift = -16; shift <= 16; shift += 4) {
    if (shift < 0 && static_cast<std::size_t>(-shift) > start) continue;
    const std::size_t s = static_cast<std::size_t>(static_cast<long>(start) + shift);
    if (s + run_bytes > image.size()) continue;
    std::size_t score = 0;
    for (float v : decode_floats(image.subspan(s, run_bytes))) score += plausible(v, o);
    const bool better = !have || score > best_score ||
                        (score == best_score && (std::labs(shift) < std::labs(best_shift) ||
                                                 (std::labs(shift) == std::labs(best_shift) && shift < best_shift)));
    if (better) {
      have = true;
      best_score = score;
      best_shift = shift;
    }
  }
  return best_shift;
}

}  // namespace

WeightCarve carve_weights(std::span<const std::uint8_t> image, std::size_t count, const CarveOptions& o) {
  WeightCarve out;
  if (count == 0) return out;
  const std::size_t run_bytes = 4 * count;

  for (std::size_t phase = 0; phase < 8; ++phase) {
    std::size_t pos = phase, have = 0, start = 0, consecutive_valid = 0, run_islands = 0;
    for (;;) {
      // Two values per step; an odd final value is read through a 4-byte window.
      const std::size_t width = have + 2 <= count ? 8 : 4;
      if (pos + width > image.size()) break;
      const bool valid = is_valid_utf8_window(image.subspan(pos, width));
      if (!valid) {
        if (have == 0) start = pos;
        have += width / 4;
        consecutive_valid = 0;
      } else if (have > 0 && consecutive_valid < o.island_tolerance) {
        have += width / 4;
        ++consecutive_valid;
        ++run_islands;
      } else {
        if (have > 0) ++out.report.utf8_resets;
        have = consecutive_valid = run_islands = 0;
      }
      pos += width;
      if (have < count) continue;

      const auto values = decode_floats(image.subspan(start, run_bytes));
      std::size_t inside = 0;
      for (float v : values) inside += in_range(v, o);
      if (static_cast<double>(inside) / static_cast<double>(count) >= o.range_fraction) {
        const long shift = refine_start(image, start, run_bytes, o);
        const std::size_t final_start = static_cast<std::size_t>(static_cast<long>(start) + shift);
        out.values = decode_floats(image.subspan(final_start, run_bytes));
        out.report.weights_found = count;
        out.report.weights_offset = final_start;
        out.report.alignment_shift = shift;
        out.report.islands = run_islands;
        return out;
      }
      ++out.report.scan_restarts;
      have = consecutive_valid = run_islands = 0;
    }
  }
  throw Error(ErrorCode::NotFound, "no run of " + std::to_string(count) +
                                       " plausible float32 values found (restarts: " +
                                       std::to_string(out.report.scan_restarts) + ")");
}

}  // namespace coldcarve
