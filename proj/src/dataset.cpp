#include "nnstego/dataset.hpp"

#include <algorithm>
#include <random>

#include "nnstego/container.hpp"

namespace nnstego {

namespace {

Dataset sample_blobs(const Matrix<float>& centers, std::size_t count, float noise,
                     std::mt19937_64& rng) {
  const int classes = static_cast<int>(centers.rows());
  std::normal_distribution<float> gauss(0.0f, noise);
  Dataset d;
  d.classes = classes;
  d.features.resize(static_cast<Eigen::Index>(count), centers.cols());
  d.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
    d.labels[i] = label;
    for (Eigen::Index j = 0; j < centers.cols(); ++j) {
      d.features(static_cast<Eigen::Index>(i), j) = centers(label, j) + gauss(rng);
    }
  }
  return d;
}

std::uint32_t read_be32(const Bytes& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

}  // namespace

DatasetSplit make_blobs(const BlobConfig& config) {
  if (config.classes < 2 || config.dim < 1) {
    throw Error(Errc::kInvalidArgument, "blobs need at least 2 classes and 1 dimension");
  }
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  Matrix<float> centers(config.classes, config.dim);
  for (Eigen::Index i = 0; i < centers.size(); ++i) {
    centers.data()[i] = config.center_scale * gauss(rng);
  }
  DatasetSplit split;
  split.train = sample_blobs(centers, config.train_size, config.noise, rng);
  split.test = sample_blobs(centers, config.test_size, config.noise, rng);
  return split;
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const Bytes img = read_file(images);
  const Bytes lab = read_file(labels);
  if (img.size() < 16 || read_be32(img, 0) != 0x00000803) {
    throw Error(Errc::kMalformedHeader, "not an IDX image file: " + images.string());
  }
  if (lab.size() < 8 || read_be32(lab, 0) != 0x00000801) {
    throw Error(Errc::kMalformedHeader, "not an IDX label file: " + labels.string());
  }
  const std::size_t count = read_be32(img, 4);
  const std::size_t rows = read_be32(img, 8);
  const std::size_t cols = read_be32(img, 12);
  if (read_be32(lab, 4) != count) {
    throw Error(Errc::kShapeMismatch, "IDX image and label counts differ");
  }
  const std::size_t pixels = rows * cols;
  if (img.size() - 16 < count * pixels || lab.size() - 8 < count) {
    throw Error(Errc::kTruncatedData, "IDX file shorter than its declared size");
  }
  Dataset d;
  d.features.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(pixels));
  d.labels.resize(count);
  int max_label = 0;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t p = 0; p < pixels; ++p) {
      d.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          static_cast<float>(img[16 + i * pixels + p]) / 255.0f;
    }
    d.labels[i] = lab[8 + i];
    max_label = std::max(max_label, d.labels[i]);
  }
  d.classes = max_label + 1;
  return d;
}

}  // namespace nnstego
