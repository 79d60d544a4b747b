#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nnstego {

using Bytes = std::vector<std::uint8_t>;

enum class DType { kF32 };

/// One entry of the container's tensor table.
struct TensorSpec {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<std::size_t> shape;
  std::pair<std::uint64_t, std::uint64_t> data_offsets{0, 0};
};

/// Shape plus raw 32-bit words in host order. Storage is shared between
/// copies and cloned on the first mutable access.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, std::vector<std::uint32_t> words);

  static Tensor from_floats(std::vector<std::size_t> shape,
                            std::span<const float> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return words_ ? words_->size() : 0; }

  std::span<const std::uint32_t> words() const;
  std::span<std::uint32_t> mutable_words();

  float value(std::size_t i) const;
  std::vector<float> to_floats() const;

  bool shares_storage_with(const Tensor& other) const {
    return words_ == other.words_;
  }

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<std::uint32_t>> words_;
};

/// Named tensors plus string metadata. A model parsed from bytes remembers
/// its original header so that re-serializing an unchanged table (data edits
/// are fine) reproduces the input file byte for byte; any table change falls
/// back to the canonical layout.
class TensorModel {
 public:
  void insert(std::string name, Tensor tensor);
  /// Swaps tensor data in place; shape must match the existing entry.
  void replace_data(const std::string& name, Tensor tensor);
  void erase(const std::string& name);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  const std::map<std::string, Tensor, std::less<>>& tensors() const {
    return tensors_;
  }

  const std::map<std::string, std::string>& metadata() const {
    return metadata_;
  }
  void set_metadata(std::string key, std::string value);

  /// Tensor table in data-region order, as serialize() would write it.
  std::vector<TensorSpec> specs() const;

  bool has_preserved_layout() const { return layout_.has_value(); }

  friend bool operator==(const TensorModel& a, const TensorModel& b);

 private:
  struct PreservedLayout {
    std::string header;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>, std::less<>>
        offsets;
    std::uint64_t data_size = 0;
  };

  friend TensorModel parse(std::span<const std::uint8_t> bytes);
  friend Bytes serialize(const TensorModel& model);

  std::map<std::string, Tensor, std::less<>> tensors_;
  std::map<std::string, std::string> metadata_;
  std::optional<PreservedLayout> layout_;
};

/// Layout: 8-byte little-endian header length, JSON header text, data region
/// of little-endian 32-bit words.
TensorModel parse(std::span<const std::uint8_t> bytes);
Bytes serialize(const TensorModel& model);

Bytes read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes);

TensorModel load_model(const std::filesystem::path& path);
void save_model(const TensorModel& model, const std::filesystem::path& path);

/// A fully connected layer seen as m neurons: weight row i plus bias[i].
/// Holds its own copy-on-write handles; commit() writes the edits back.
class LayerView {
 public:
  const std::string& name() const { return name_; }
  std::size_t neurons() const { return neurons_; }
  std::size_t fan_in() const { return fan_in_; }

  std::span<const std::uint32_t> weights(std::size_t neuron) const;
  std::span<std::uint32_t> weights(std::size_t neuron);
  std::uint32_t bias(std::size_t neuron) const;
  void set_bias(std::size_t neuron, std::uint32_t word);

  /// Parameter p in neuron-major order: weights of a neuron, then its bias.
  std::uint32_t parameter(std::size_t p) const;
  void set_parameter(std::size_t p, std::uint32_t word);
  std::size_t parameter_count() const { return neurons_ * (fan_in_ + 1); }

  void commit(TensorModel& model) const;

 private:
  friend LayerView layer_view(const TensorModel& model,
                              std::string_view layer_name);

  std::string name_;
  std::size_t neurons_ = 0;
  std::size_t fan_in_ = 0;
  Tensor weight_;
  Tensor bias_;
};

/// Resolves "<layer>.weight" (rank 2, [m, n]) and "<layer>.bias" (rank 1,
/// [m]). Throws kMissingTensor or kShapeMismatch.
LayerView layer_view(const TensorModel& model, std::string_view layer_name);

}  // namespace nnstego
