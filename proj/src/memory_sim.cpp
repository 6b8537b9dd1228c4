#include "coldcarve/memory_sim.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <future>
#include <random>
#include <sstream>

#include "coldcarve/error.hpp"

namespace coldcarve {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(tag >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::array<std::string_view, 24> kWords = {
    "the",    "memory",  "page",   "cache", "kernel", "buffer", "system", "process",
    "thread", "network", "driver", "file",  "record", "value",  "device", "stream",
    "queue",  "socket",  "table",  "entry", "index",  "block",  "sector", "frame"};

void fill_random(std::span<std::uint8_t> out, std::mt19937_64& rng) {
  for (auto& b : out) b = static_cast<std::uint8_t>(rng());
}

void fill_ascii(std::span<std::uint8_t> out, std::mt19937_64& rng) {
  std::size_t i = 0, column = 0;
  while (i < out.size()) {
    const auto word = kWords[rng() % kWords.size()];
    for (char c : word) {
      if (i == out.size()) return;
      out[i++] = static_cast<std::uint8_t>(c);
    }
    if (i == out.size()) return;
    column += word.size() + 1;
    const bool newline = column > 72;
    if (newline) column = 0;
    out[i++] = newline ? '\n' : (rng() % 11 == 0 ? '.' : ' ');
  }
}

void fill(std::span<std::uint8_t> out, FillerProfile profile, std::mt19937_64& rng) {
  switch (profile) {
    case FillerProfile::RandomBytes: fill_random(out, rng); return;
    case FillerProfile::AsciiText: fill_ascii(out, rng); return;
    case FillerProfile::Mixed: {
      constexpr std::size_t kPage = 4096;
      for (std::size_t at = 0; at < out.size(); at += kPage) {
        auto page = out.subspan(at, std::min(kPage, out.size() - at));
        switch (rng() % 3) {
          case 0: std::fill(page.begin(), page.end(), std::uint8_t{0}); break;
          case 1: fill_ascii(page, rng); break;
          default: fill_random(page, rng); break;
        }
      }
      return;
    }
  }
}

std::size_t align_up(std::size_t v, std::size_t a) { return (v + a - 1) / a * a; }

void mark_process(double rho, std::uint64_t total_bits, std::mt19937_64& rng, std::vector<std::uint64_t>& out,
                  bool& all) {
  if (rho <= 0.0 || total_bits == 0) return;
  if (rho >= 1.0) {
    all = true;
    return;
  }
  std::geometric_distribution<std::uint64_t> skip(rho);
  std::uint64_t pos = 0;
  for (;;) {
    const std::uint64_t gap = skip(rng);
    if (gap >= total_bits - pos) break;
    pos += gap;
    out.push_back(pos);
    if (++pos >= total_bits) break;
  }
}

std::uint64_t load_word(const std::uint8_t* p, std::size_t remaining) {
  std::uint64_t w = 0;
  std::memcpy(&w, p, std::min<std::size_t>(8, remaining));
  return w;
}

}  // namespace

const ManifestEntry* MemoryImage::find(std::string_view tag) const {
  for (const auto& e : manifest)
    if (e.tag == tag) return &e;
  return nullptr;
}

void MemoryImage::validate() const {
  std::vector<ManifestEntry> sorted = manifest;
  std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.offset < b.offset; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i].offset > bytes.size() || sorted[i].length > bytes.size() - sorted[i].offset)
      throw Error(ErrorCode::InvalidArgument, "manifest entry '" + sorted[i].tag + "' lies outside the image");
    if (i > 0 && sorted[i - 1].offset + sorted[i - 1].length > sorted[i].offset)
      throw Error(ErrorCode::InvalidArgument, "manifest entries overlap");
  }
}

std::string_view filler_name(FillerProfile p) {
  switch (p) {
    case FillerProfile::RandomBytes: return "random_bytes";
    case FillerProfile::AsciiText: return "ascii_text";
    case FillerProfile::Mixed: return "mixed";
  }
  return "?";
}

FillerProfile filler_from_name(std::string_view name) {
  for (auto p : {FillerProfile::RandomBytes, FillerProfile::AsciiText, FillerProfile::Mixed})
    if (filler_name(p) == name) return p;
  throw Error(ErrorCode::Config, "unknown filler profile '" + std::string(name) + "'");
}

MemoryImage synthesize_dump(std::string_view xml, std::span<const std::uint8_t> blob, FillerProfile filler,
                            std::size_t total_size, std::uint64_t seed) {
  struct Artifact {
    std::span<const std::uint8_t> bytes;
    std::string tag;
  };
  std::vector<Artifact> parts = {
      {std::span(reinterpret_cast<const std::uint8_t*>(xml.data()), xml.size()), "xml"}, {blob, "bin"}};
  const std::size_t per_part = 2 * kGuardBytes + (kArtifactAlignment - 1);
  const std::size_t needed = xml.size() + blob.size() + parts.size() * per_part;
  if (total_size < needed)
    throw Error(ErrorCode::TooSmall, "image of " + std::to_string(total_size) + " bytes cannot hold " +
                                         std::to_string(needed) + " bytes of artifacts and padding");

  auto rng = seeded(seed, 0x46494C4CULL);
  MemoryImage image;
  image.bytes.resize(total_size);
  fill(image.bytes, filler, rng);

  if (rng() & 1) std::swap(parts[0], parts[1]);
  const std::size_t slack = total_size - needed;
  std::array<std::size_t, 2> cuts = {static_cast<std::size_t>(rng() % (slack + 1)),
                                     static_cast<std::size_t>(rng() % (slack + 1))};
  std::sort(cuts.begin(), cuts.end());
  const std::array<std::size_t, 2> gaps = {cuts[0], cuts[1] - cuts[0]};

  std::size_t cursor = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    cursor += gaps[k];
    const std::size_t offset = align_up(cursor + kGuardBytes, kArtifactAlignment);
    const std::size_t end = offset + parts[k].bytes.size();
    std::fill(image.bytes.begin() + static_cast<std::ptrdiff_t>(cursor),
              image.bytes.begin() + static_cast<std::ptrdiff_t>(end + kGuardBytes), std::uint8_t{0});
    std::copy(parts[k].bytes.begin(), parts[k].bytes.end(), image.bytes.begin() + static_cast<std::ptrdiff_t>(offset));
    image.manifest.push_back({offset, parts[k].bytes.size(), parts[k].tag});
    cursor = end + kGuardBytes;
  }
  std::sort(image.manifest.begin(), image.manifest.end(),
            [](const auto& a, const auto& b) { return a.tag > b.tag; });  // xml first
  image.validate();
  return image;
}

void DecayParams::validate() const {
  if (!(rho0 >= 0.0 && rho0 <= 1.0) || !(rho1 >= 0.0 && rho1 <= 1.0))
    throw Error(ErrorCode::InvalidArgument, "decay probabilities must lie in [0, 1]");
}

DecayMarks sample_decay_marks(std::size_t byte_count, const DecayParams& params) {
  params.validate();
  DecayMarks marks;
  const std::uint64_t bits = static_cast<std::uint64_t>(byte_count) * 8;
  auto down_rng = seeded(params.seed, 0x31303030ULL);
  auto up_rng = seeded(params.seed, 0x30313131ULL);
  bool all_down = false, all_up = false;
  mark_process(params.rho0, bits, down_rng, marks.down, all_down);
  mark_process(params.rho1, bits, up_rng, marks.up, all_up);
  // Saturated processes are expanded lazily by apply_marks.
  if (all_down) marks.down = {~std::uint64_t{0}};
  if (all_up) marks.up = {~std::uint64_t{0}};
  return marks;
}

MemoryImage apply_marks(const MemoryImage& image, const DecayMarks& marks) {
  const std::size_t n = image.bytes.size();
  const auto expand = [n](const std::vector<std::uint64_t>& bits) {
    std::vector<std::uint8_t> mask(n, 0);
    if (bits.size() == 1 && bits[0] == ~std::uint64_t{0}) {
      std::fill(mask.begin(), mask.end(), std::uint8_t{0xFF});
      return mask;
    }
    for (auto bit : bits) mask[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    return mask;
  };
  const auto down = expand(marks.down);
  const auto up = expand(marks.up);
  MemoryImage out = image;
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint8_t o = image.bytes[i];
    out.bytes[i] = static_cast<std::uint8_t>((o & ~down[i]) | (~o & up[i]));
  }
  return out;
}

MemoryImage apply_decay(const MemoryImage& image, const DecayParams& params) {
  return apply_marks(image, sample_decay_marks(image.bytes.size(), params));
}

double BitErrorRate::overall() const {
  const auto total = ones + zeros;
  return total ? static_cast<double>(flips_down + flips_up) / static_cast<double>(total) : 0.0;
}

BitErrorRate bit_error_rate(const MemoryImage& original, const MemoryImage& decayed) {
  if (original.bytes.size() != decayed.bytes.size())
    throw Error(ErrorCode::LengthMismatch, "images differ in length");
  BitErrorRate r;
  const std::size_t n = original.bytes.size();
  for (std::size_t i = 0; i < n; i += 8) {
    const std::uint64_t a = load_word(&original.bytes[i], n - i);
    const std::uint64_t d = load_word(&decayed.bytes[i], n - i);
    const std::size_t valid_bits = std::min<std::size_t>(8, n - i) * 8;
    const std::uint64_t lane = valid_bits == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << valid_bits) - 1);
    r.ones += static_cast<std::uint64_t>(std::popcount(a & lane));
    r.zeros += static_cast<std::uint64_t>(std::popcount(~a & lane));
    r.flips_down += static_cast<std::uint64_t>(std::popcount(a & ~d & lane));
    r.flips_up += static_cast<std::uint64_t>(std::popcount(~a & d & lane));
  }
  r.rho0_hat = r.ones ? static_cast<double>(r.flips_down) / static_cast<double>(r.ones) : 0.0;
  r.rho1_hat = r.zeros ? static_cast<double>(r.flips_up) / static_cast<double>(r.zeros) : 0.0;
  return r;
}

std::string_view correlation_mode_name(CorrelationMode m) {
  return m == CorrelationMode::Independent ? "independent" : "fixed_positions";
}

CorrelationMode correlation_mode_from_name(std::string_view name) {
  if (name == "independent") return CorrelationMode::Independent;
  if (name == "fixed_positions") return CorrelationMode::FixedPositions;
  throw Error(ErrorCode::Config, "unknown correlation mode '" + std::string(name) + "'");
}

TrialSet make_trials(const MemoryImage& truth, const DecayParams& params, std::size_t count, CorrelationMode mode,
                     bool parallel) {
  TrialSet set;
  set.mode = mode;
  set.trials.resize(count);
  if (mode == CorrelationMode::FixedPositions) {
    const DecayMarks marks = sample_decay_marks(truth.bytes.size(), params);
    for (auto& t : set.trials) t = apply_marks(truth, marks);
    return set;
  }
  auto run = [&](std::size_t k) {
    DecayParams p = params;
    p.seed = params.seed + k;
    return apply_decay(truth, p);
  };
  if (!parallel) {
    for (std::size_t k = 0; k < count; ++k) set.trials[k] = run(k);
    return set;
  }
  std::vector<std::future<MemoryImage>> jobs;
  for (std::size_t k = 0; k < count; ++k) jobs.push_back(std::async(std::launch::async, run, k));
  for (std::size_t k = 0; k < count; ++k) set.trials[k] = jobs[k].get();
  return set;
}

MemoryImage majority_vote(const TrialSet& set) {
  const auto& trials = set.trials;
  if (trials.size() < 3 || trials.size() % 2 == 0)
    throw Error(ErrorCode::EvenTrialCount, "majority vote needs an odd number of trials >= 3, got " +
                                               std::to_string(trials.size()));
  const std::size_t n = trials.front().bytes.size();
  for (const auto& t : trials)
    if (t.bytes.size() != n) throw Error(ErrorCode::LengthMismatch, "trials differ in length");
  MemoryImage out;
  out.manifest = trials.front().manifest;
  out.bytes.resize(n);
  const std::size_t half = trials.size() / 2;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint8_t voted = 0;
    for (int bit = 0; bit < 8; ++bit) {
      std::size_t ones = 0;
      for (const auto& t : trials) ones += (t.bytes[i] >> bit) & 1u;
      if (ones > half) voted |= static_cast<std::uint8_t>(1u << bit);
    }
    out.bytes[i] = voted;
  }
  return out;
}

double CorrelationMatrix::min_off_diagonal() const {
  double m = 1.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) m = std::min(m, at(i, j));
  return m;
}

double CorrelationMatrix::mean_off_diagonal() const {
  if (n < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) s += at(i, j);
  return s / static_cast<double>(n * (n - 1));
}

CorrelationMatrix error_cross_correlation(const TrialSet& set, const MemoryImage& truth) {
  const auto& trials = set.trials;
  if (trials.size() < 2) throw Error(ErrorCode::InvalidArgument, "cross-correlation needs at least 2 trials");
  const std::size_t bytes = truth.bytes.size();
  for (const auto& t : trials)
    if (t.bytes.size() != bytes) throw Error(ErrorCode::LengthMismatch, "trial and ground truth differ in length");
  const std::size_t k = trials.size();
  std::vector<std::uint64_t> single(k, 0), joint(k * k, 0);
  std::vector<std::uint64_t> err(k);
  for (std::size_t i = 0; i < bytes; i += 8) {
    const std::uint64_t g = load_word(&truth.bytes[i], bytes - i);
    for (std::size_t a = 0; a < k; ++a) err[a] = load_word(&trials[a].bytes[i], bytes - i) ^ g;
    for (std::size_t a = 0; a < k; ++a) {
      if (!err[a]) continue;
      single[a] += static_cast<std::uint64_t>(std::popcount(err[a]));
      for (std::size_t b = a + 1; b < k; ++b) joint[a * k + b] += static_cast<std::uint64_t>(std::popcount(err[a] & err[b]));
    }
  }
  const double n = static_cast<double>(bytes) * 8.0;
  CorrelationMatrix m;
  m.n = k;
  m.values.assign(k * k, 0.0);
  for (std::size_t a = 0; a < k; ++a)
    if (single[a] == 0 || static_cast<double>(single[a]) == n) m.degenerate_trials.push_back(a);
  const auto degenerate = [&](std::size_t a) {
    return std::find(m.degenerate_trials.begin(), m.degenerate_trials.end(), a) != m.degenerate_trials.end();
  };
  for (std::size_t a = 0; a < k; ++a) {
    m.values[a * k + a] = 1.0;
    for (std::size_t b = a + 1; b < k; ++b) {
      double r = 0.0;
      if (!degenerate(a) && !degenerate(b)) {
        const double si = static_cast<double>(single[a]), sj = static_cast<double>(single[b]);
        const double sij = static_cast<double>(joint[a * k + b]);
        r = (n * sij - si * sj) / std::sqrt(si * (n - si) * sj * (n - sj));
      }
      m.values[a * k + b] = m.values[b * k + a] = r;
    }
  }
  return m;
}

std::string format_manifest(const std::vector<ManifestEntry>& manifest) {
  std::ostringstream out;
  for (const auto& e : manifest) out << e.offset << ' ' << e.length << ' ' << e.tag << '\n';
  return out.str();
}

std::vector<ManifestEntry> parse_manifest(std::string_view text) {
  std::vector<ManifestEntry> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    ManifestEntry e;
    if (!(fields >> e.offset >> e.length >> e.tag)) throw Error(ErrorCode::Io, "bad manifest line '" + line + "'");
    out.push_back(e);
  }
  return out;
}

void save_image(const MemoryImage& image, const std::filesystem::path& path) {
  write_file(path, image.bytes);
  write_text(std::filesystem::path(path).concat(".manifest"), format_manifest(image.manifest));
}

MemoryImage load_image(const std::filesystem::path& path) {
  MemoryImage image;
  image.bytes = read_file(path);
  const auto sidecar = std::filesystem::path(path).concat(".manifest");
  if (std::filesystem::exists(sidecar)) image.manifest = parse_manifest(read_text(sidecar));
  return image;
}

}  // namespace coldcarve
