#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nnstego/mlp.hpp"

namespace nnstego {

struct Dataset {
  Matrix<float> features;  // [N, d]
  std::vector<int> labels;
  int classes = 0;

  std::size_t size() const { return labels.size(); }
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Isotropic Gaussian clusters, one per class, centers drawn once per seed.
struct BlobConfig {
  int classes = 10;
  int dim = 64;
  std::size_t train_size = 10000;
  std::size_t test_size = 2000;
  float center_scale = 0.7f;
  float noise = 1.0f;
  std::uint64_t seed = 1;
};

DatasetSplit make_blobs(const BlobConfig& config);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Pixels are scaled to [0, 1] and flattened row-major.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

}  // namespace nnstego
