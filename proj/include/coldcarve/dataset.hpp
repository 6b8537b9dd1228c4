#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coldcarve/tensor.hpp"

namespace coldcarve {

enum class Split { Train, Test, Recovery };

struct Dataset {
  Tensor<float> inputs;              // [N, sample dims...]
  std::optional<std::vector<int>> labels;
  std::size_t num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const { return inputs.rank() == 0 ? 0 : inputs.dim(0); }
  bool labeled() const { return labels.has_value(); }
  const std::vector<int>& require_labels() const;

  Dataset subset(const std::vector<std::size_t>& indices) const;
  // First ceil(fraction * N) samples after a seeded shuffle.
  Dataset fraction(double fraction, std::uint64_t seed) const;
  Dataset without_labels() const;
};

Dataset make_xor(std::size_t copies = 1);
Dataset make_blobs(std::size_t n, std::size_t classes, std::size_t dims, double spread, std::uint64_t seed);
Dataset make_two_moons(std::size_t n, double noise, std::uint64_t seed);

// Desk image task: 1x12x12 images in [0,1], three classes of oriented
// stroke patterns with random placement, thickness, contrast and noise.
// `shift` > 0 moves the generator away from the training distribution
// (different contrast, blur, noise and stroke statistics), standing in for a
// similar-but-different unlabeled recovery corpus.
struct DeskImageOptions {
  std::size_t side = 12;
  double shift = 0.0;
  double noise = 0.18;
};
Dataset make_desk_images(std::size_t n, std::uint64_t seed, const DeskImageOptions& options = {});

// IDX (big-endian magic, dims, raw bytes); ubyte images are scaled to [0,1].
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels);
// One sample per row, label in the last column. `sample_shape` reshapes rows
// (empty: keep flat features).
Dataset load_csv(const std::filesystem::path& path, std::vector<std::size_t> sample_shape = {});

}  // namespace coldcarve
