#include "coldcarve/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "coldcarve/error.hpp"
#include "coldcarve/weight_blob.hpp"

namespace coldcarve {

const std::vector<int>& Dataset::require_labels() const {
  if (!labels) throw Error(ErrorCode::UnlabeledData, "dataset has no labels");
  return *labels;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.split = split;
  std::vector<std::size_t> shape = inputs.shape();
  shape[0] = indices.size();
  const std::size_t row = inputs.row_size();
  std::vector<float> data;
  data.reserve(indices.size() * row);
  std::vector<int> lab;
  for (auto i : indices) {
    const auto r = inputs.row(i);
    data.insert(data.end(), r.begin(), r.end());
    if (labels) lab.push_back((*labels)[i]);
  }
  out.inputs = Tensor<float>(shape, std::move(data));
  if (labels) out.labels = std::move(lab);
  return out;
}

Dataset Dataset::fraction(double f, std::uint64_t seed) const {
  if (!(f > 0.0 && f <= 1.0)) throw Error(ErrorCode::InvalidArgument, "fraction must be in (0, 1]");
  std::vector<std::size_t> idx(size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::ceil(f * static_cast<double>(size()))));
  return subset(idx);
}

Dataset Dataset::without_labels() const {
  Dataset out = *this;
  out.labels.reset();
  return out;
}

Dataset make_xor(std::size_t copies) {
  Dataset d;
  d.num_classes = 2;
  std::vector<float> x;
  std::vector<int> y;
  for (std::size_t c = 0; c < copies; ++c)
    for (int a = 0; a < 2; ++a)
      for (int b = 0; b < 2; ++b) {
        x.push_back(static_cast<float>(a));
        x.push_back(static_cast<float>(b));
        y.push_back(a ^ b);
      }
  d.inputs = Tensor<float>({y.size(), 2}, std::move(x));
  d.labels = std::move(y);
  return d;
}

Dataset make_blobs(std::size_t n, std::size_t classes, std::size_t dims, double spread, std::uint64_t seed) {
  if (classes == 0 || dims == 0) throw Error(ErrorCode::InvalidArgument, "blobs need classes and dims");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> centre(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<std::vector<double>> centres(classes, std::vector<double>(dims));
  for (auto& c : centres)
    for (auto& v : c) v = 3.0 * centre(rng);
  Dataset d;
  d.num_classes = classes;
  std::vector<float> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = i % classes;
    for (std::size_t j = 0; j < dims; ++j) x.push_back(static_cast<float>(centres[k][j] + noise(rng)));
    y.push_back(static_cast<int>(k));
  }
  d.inputs = Tensor<float>({n, dims}, std::move(x));
  d.labels = std::move(y);
  return d;
}

Dataset make_two_moons(std::size_t n, double noise_sd, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, noise_sd);
  Dataset d;
  d.num_classes = 2;
  std::vector<float> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % 2);
    const double t = angle(rng);
    const double px = k == 0 ? std::cos(t) : 1.0 - std::cos(t);
    const double py = k == 0 ? std::sin(t) : 0.5 - std::sin(t);
    x.push_back(static_cast<float>(px + noise(rng)));
    x.push_back(static_cast<float>(py + noise(rng)));
    y.push_back(k);
  }
  d.inputs = Tensor<float>({n, 2}, std::move(x));
  d.labels = std::move(y);
  return d;
}

namespace {

// Draws one anti-aliased line segment of the given thickness onto img.
void stroke(std::vector<double>& img, std::size_t side, double x0, double y0, double x1, double y1, double width,
            double value) {
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) {
      const double px = static_cast<double>(c) + 0.5, py = static_cast<double>(r) + 0.5;
      double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = x0 + t * dx - px, ey = y0 + t * dy - py;
      const double d = std::sqrt(ex * ex + ey * ey);
      const double a = std::clamp(width - d + 0.5, 0.0, 1.0);
      img[r * side + c] = std::max(img[r * side + c], a * value);
    }
}

}  // namespace

Dataset make_desk_images(std::size_t n, std::uint64_t seed, const DeskImageOptions& o) {
  const std::size_t side = o.side;
  const double s = static_cast<double>(side);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  Dataset d;
  d.num_classes = 3;
  std::vector<float> x;
  x.reserve(n * side * side);
  std::vector<int> y;
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng() % 3);
    std::vector<double> img(side * side, 0.0);
    const double contrast = (0.55 + 0.45 * u(rng)) * (1.0 - 0.35 * o.shift);
    const double width = 0.6 + 0.9 * u(rng) + 0.5 * o.shift * u(rng);
    const double cx = s / 2 + (u(rng) - 0.5) * s * 0.45, cy = s / 2 + (u(rng) - 0.5) * s * 0.45;
    const double half = s * (0.22 + 0.2 * u(rng));
    // Orientation jitter blurs the class boundary so the task needs data.
    const double jitter = (u(rng) - 0.5) * (0.9 + 0.5 * o.shift);
    // Class 0: near-horizontal, class 1: near-vertical, class 2: a cross.
    const double base = k == 0 ? 0.0 : std::numbers::pi / 2;
    auto draw = [&](double theta) {
      stroke(img, side, cx - half * std::cos(theta), cy - half * std::sin(theta), cx + half * std::cos(theta),
             cy + half * std::sin(theta), width, contrast);
    };
    if (k == 2) {
      draw(std::numbers::pi / 4 + jitter);
      draw(-std::numbers::pi / 4 + jitter);
    } else {
      draw(base + jitter);
    }
    // Distractor strokes shared by all classes.
    const int distractors = static_cast<int>(u(rng) * (2.0 + 2.0 * o.shift));
    for (int q = 0; q < distractors; ++q) {
      const double ax = u(rng) * s, ay = u(rng) * s;
      const double th = u(rng) * std::numbers::pi, l = s * (0.08 + 0.12 * u(rng));
      stroke(img, side, ax, ay, ax + l * std::cos(th), ay + l * std::sin(th), 0.6, contrast * (0.5 + 0.5 * u(rng)));
    }
    const double bg = 0.1 * u(rng) + 0.15 * o.shift;
    const double sd = o.noise * (1.0 + 0.5 * o.shift);
    for (double v : img) x.push_back(static_cast<float>(std::clamp(bg + v + sd * g(rng), 0.0, 1.0)));
    y.push_back(k);
  }
  d.inputs = Tensor<float>({n, 1, side, side}, std::move(x));
  d.labels = std::move(y);
  return d;
}

namespace {

std::uint32_t be32(const Bytes& b, std::size_t at) {
  if (at + 4 > b.size()) throw Error(ErrorCode::Io, "truncated IDX header");
  return (std::uint32_t(b[at]) << 24) | (std::uint32_t(b[at + 1]) << 16) | (std::uint32_t(b[at + 2]) << 8) | b[at + 3];
}

struct Idx {
  std::vector<std::size_t> dims;
  std::vector<double> values;
  bool ubyte = false;
};

Idx read_idx(const std::filesystem::path& path) {
  const Bytes b = read_file(path);
  if (b.size() < 4 || b[0] != 0 || b[1] != 0) throw Error(ErrorCode::Io, "bad IDX magic in " + path.string());
  const int type = b[2], rank = b[3];
  Idx idx;
  std::size_t count = 1;
  for (int i = 0; i < rank; ++i) {
    idx.dims.push_back(be32(b, 4 + 4 * static_cast<std::size_t>(i)));
    count *= idx.dims.back();
  }
  std::size_t at = 4 + 4 * static_cast<std::size_t>(rank);
  std::size_t width = 0;
  switch (type) {
    case 0x08: case 0x09: width = 1; break;
    case 0x0B: width = 2; break;
    case 0x0C: case 0x0D: width = 4; break;
    default: throw Error(ErrorCode::Io, "unsupported IDX element type in " + path.string());
  }
  if (b.size() != at + count * width) throw Error(ErrorCode::Io, "IDX payload size mismatch in " + path.string());
  idx.ubyte = type == 0x08;
  idx.values.resize(count);
  for (std::size_t i = 0; i < count; ++i, at += width) {
    switch (type) {
      case 0x08: idx.values[i] = b[at]; break;
      case 0x09: idx.values[i] = static_cast<std::int8_t>(b[at]); break;
      case 0x0B: idx.values[i] = static_cast<std::int16_t>((b[at] << 8) | b[at + 1]); break;
      case 0x0C: idx.values[i] = static_cast<std::int32_t>(be32(b, at)); break;
      case 0x0D: idx.values[i] = std::bit_cast<float>(be32(b, at)); break;
    }
  }
  return idx;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
  Idx im = read_idx(images);
  if (im.dims.empty()) throw Error(ErrorCode::Io, "IDX image file has rank 0");
  std::vector<std::size_t> shape = im.dims;
  if (shape.size() == 3) shape.insert(shape.begin() + 1, 1);  // N,H,W -> N,1,H,W
  std::vector<float> data(im.values.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    data[i] = static_cast<float>(im.ubyte ? im.values[i] / 255.0 : im.values[i]);
  Dataset d;
  d.inputs = Tensor<float>(shape, std::move(data));
  if (labels) {
    Idx lab = read_idx(*labels);
    if (lab.values.size() != d.size()) throw Error(ErrorCode::LengthMismatch, "IDX label count differs from image count");
    std::vector<int> y;
    for (double v : lab.values) y.push_back(static_cast<int>(v));
    d.num_classes = static_cast<std::size_t>(*std::max_element(y.begin(), y.end()) + 1);
    d.labels = std::move(y);
  }
  return d;
}

Dataset load_csv(const std::filesystem::path& path, std::vector<std::size_t> sample_shape) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  std::vector<float> data;
  std::vector<int> y;
  std::size_t width = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorCode::Io, "non-numeric CSV cell '" + cell + "' in " + path.string());
      }
    }
    if (row.size() < 2) throw Error(ErrorCode::Io, "CSV row needs features and a label");
    if (width == 0) width = row.size() - 1;
    if (row.size() - 1 != width) throw Error(ErrorCode::Io, "ragged CSV rows in " + path.string());
    for (std::size_t i = 0; i < width; ++i) data.push_back(static_cast<float>(row[i]));
    y.push_back(static_cast<int>(row.back()));
  }
  if (y.empty()) throw Error(ErrorCode::Io, "CSV file has no rows: " + path.string());
  if (sample_shape.empty()) sample_shape = {width};
  if (Tensor<float>::element_count(sample_shape) != width)
    throw Error(ErrorCode::ShapeMismatch, "sample shape does not match CSV width");
  sample_shape.insert(sample_shape.begin(), y.size());
  Dataset d;
  d.inputs = Tensor<float>(sample_shape, std::move(data));
  d.num_classes = static_cast<std::size_t>(*std::max_element(y.begin(), y.end()) + 1);
  d.labels = std::move(y);
  return d;
}

}  // namespace coldcarve
