#include "nnstego/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <system_error>

#include <json.hpp>

#include "nnstego/error.hpp"

namespace nnstego {

namespace {

using json = nlohmann::json;

constexpr std::string_view kMetadataKey = "__metadata__";

std::uint64_t read_le64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void append_le64(Bytes& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t read_le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) |
         (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

void write_le32(std::uint8_t* p, std::uint32_t v) {
  p[0] = static_cast<std::uint8_t>(v);
  p[1] = static_cast<std::uint8_t>(v >> 8);
  p[2] = static_cast<std::uint8_t>(v >> 16);
  p[3] = static_cast<std::uint8_t>(v >> 24);
}

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

[[noreturn]] void malformed(const std::string& what) {
  throw Error(Errc::kMalformedHeader, "malformed header: " + what);
}

std::uint64_t as_u64(const json& v, const std::string& what) {
  // Non-negative integer literals parse as unsigned.
  if (!v.is_number_unsigned()) malformed(what + " must be a non-negative integer");
  return v.get<std::uint64_t>();
}

}  // namespace

// --- Tensor ---------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<std::uint32_t> words)
    : shape_(std::move(shape)),
      words_(std::make_shared<std::vector<std::uint32_t>>(std::move(words))) {
  if (product(shape_) != words_->size()) {
    throw Error(Errc::kShapeMismatch, "tensor shape does not match element count");
  }
}

Tensor Tensor::from_floats(std::vector<std::size_t> shape,
                           std::span<const float> values) {
  std::vector<std::uint32_t> words(values.size());
  std::transform(values.begin(), values.end(), words.begin(),
                 [](float v) { return std::bit_cast<std::uint32_t>(v); });
  return Tensor(std::move(shape), std::move(words));
}

std::span<const std::uint32_t> Tensor::words() const {
  if (!words_) return {};
  return *words_;
}

std::span<std::uint32_t> Tensor::mutable_words() {
  if (!words_) return {};
  if (words_.use_count() > 1) {
    words_ = std::make_shared<std::vector<std::uint32_t>>(*words_);
  }
  return *words_;
}

float Tensor::value(std::size_t i) const {
  return std::bit_cast<float>(words()[i]);
}

std::vector<float> Tensor::to_floats() const {
  auto w = words();
  std::vector<float> out(w.size());
  std::transform(w.begin(), w.end(), out.begin(),
                 [](std::uint32_t x) { return std::bit_cast<float>(x); });
  return out;
}

bool operator==(const Tensor& a, const Tensor& b) {
  if (a.shape_ != b.shape_) return false;
  auto wa = a.words();
  auto wb = b.words();
  return std::equal(wa.begin(), wa.end(), wb.begin(), wb.end());
}

// --- TensorModel ----------------------------------------------------------

void TensorModel::insert(std::string name, Tensor tensor) {
  if (name.empty() || name == kMetadataKey) {
    throw Error(Errc::kInvalidArgument, "invalid tensor name '" + name + "'");
  }
  tensors_.insert_or_assign(std::move(name), std::move(tensor));
  layout_.reset();
}

void TensorModel::replace_data(const std::string& name, Tensor tensor) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw Error(Errc::kMissingTensor, "missing tensor '" + name + "'");
  }
  if (it->second.shape() != tensor.shape()) {
    throw Error(Errc::kShapeMismatch, "replacement for '" + name + "' changes its shape");
  }
  it->second = std::move(tensor);
}

void TensorModel::erase(const std::string& name) {
  if (tensors_.erase(name) > 0) layout_.reset();
}

bool TensorModel::contains(std::string_view name) const {
  return tensors_.find(name) != tensors_.end();
}

const Tensor& TensorModel::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw Error(Errc::kMissingTensor, "missing tensor '" + std::string(name) + "'");
  }
  return it->second;
}

void TensorModel::set_metadata(std::string key, std::string value) {
  auto it = metadata_.find(key);
  if (it != metadata_.end() && it->second == value) return;
  metadata_.insert_or_assign(std::move(key), std::move(value));
  layout_.reset();
}

std::vector<TensorSpec> TensorModel::specs() const {
  std::vector<TensorSpec> out;
  out.reserve(tensors_.size());
  std::uint64_t cursor = 0;
  for (const auto& [name, tensor] : tensors_) {
    TensorSpec spec{name, DType::kF32, tensor.shape(), {}};
    if (layout_) {
      spec.data_offsets = layout_->offsets.at(name);
    } else {
      spec.data_offsets = {cursor, cursor + 4 * tensor.numel()};
      cursor = spec.data_offsets.second;
    }
    out.push_back(std::move(spec));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.data_offsets.first < b.data_offsets.first;
  });
  return out;
}

bool operator==(const TensorModel& a, const TensorModel& b) {
  return a.tensors_ == b.tensors_ && a.metadata_ == b.metadata_;
}

// --- parse / serialize ----------------------------------------------------

TensorModel parse(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) malformed("file shorter than the length prefix");
  const std::uint64_t header_len = read_le64(bytes.data());
  if (header_len > bytes.size() - 8) malformed("header length exceeds file size");

  const std::string header(reinterpret_cast<const char*>(bytes.data() + 8),
                           static_cast<std::size_t>(header_len));
  json root;
  try {
    root = json::parse(header);
  } catch (const json::exception& e) {
    malformed(std::string("header is not valid JSON text (") + e.what() + ")");
  }
  if (!root.is_object()) malformed("header must be an object");

  const auto data = bytes.subspan(8 + static_cast<std::size_t>(header_len));

  TensorModel model;
  TensorModel::PreservedLayout layout;
  layout.header = header;
  layout.data_size = data.size();

  struct Entry {
    std::string name;
    std::vector<std::size_t> shape;
    std::uint64_t start, end;
  };
  std::vector<Entry> entries;

  for (const auto& [key, value] : root.items()) {
    if (key == kMetadataKey) {
      if (!value.is_object()) malformed("__metadata__ must be an object");
      for (const auto& [mk, mv] : value.items()) {
        if (!mv.is_string()) malformed("metadata values must be strings");
        model.metadata_.emplace(mk, mv.get<std::string>());
      }
      continue;
    }
    if (key.empty()) malformed("empty tensor name");
    if (!value.is_object() || value.size() != 3 || !value.contains("dtype") ||
        !value.contains("shape") || !value.contains("data_offsets")) {
      malformed("tensor '" + key + "' needs exactly dtype, shape, data_offsets");
    }
    const auto& dtype = value["dtype"];
    if (!dtype.is_string()) malformed("dtype of '" + key + "' must be a string");
    if (dtype.get<std::string>() != "F32") {
      malformed("tensor '" + key + "' has unsupported dtype " + dtype.get<std::string>());
    }
    const auto& shape_json = value["shape"];
    if (!shape_json.is_array()) malformed("shape of '" + key + "' must be an array");
    Entry entry{key, {}, 0, 0};
    for (const auto& dim : shape_json) {
      entry.shape.push_back(static_cast<std::size_t>(as_u64(dim, "shape of '" + key + "'")));
    }
    const auto& offsets = value["data_offsets"];
    if (!offsets.is_array() || offsets.size() != 2) {
      malformed("data_offsets of '" + key + "' must be two integers");
    }
    entry.start = as_u64(offsets[0], "data_offsets of '" + key + "'");
    entry.end = as_u64(offsets[1], "data_offsets of '" + key + "'");
    if (entry.end < entry.start) malformed("data_offsets of '" + key + "' are reversed");
    if (entry.end - entry.start != 4 * product(entry.shape)) {
      malformed("data_offsets of '" + key + "' disagree with its shape");
    }
    entries.push_back(std::move(entry));
  }

  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) {
              return a.start != b.start ? a.start < b.start : a.end < b.end;
            });
  std::uint64_t cursor = 0;
  for (const auto& e : entries) {
    if (e.start < cursor) {
      throw Error(Errc::kOffsetOverlap, "tensor '" + e.name + "' overlaps its predecessor");
    }
    if (e.start > cursor) malformed("gap in data region before '" + e.name + "'");
    cursor = e.end;
  }
  if (cursor > data.size()) {
    throw Error(Errc::kTruncatedData, "declared offsets exceed the data region (" +
                                          std::to_string(cursor) + " > " +
                                          std::to_string(data.size()) + " bytes)");
  }
  if (cursor < data.size()) malformed("trailing bytes after the last tensor");

  for (auto& e : entries) {
    const std::size_t count = static_cast<std::size_t>((e.end - e.start) / 4);
    std::vector<std::uint32_t> words(count);
    const std::uint8_t* src = data.data() + e.start;
    for (std::size_t i = 0; i < count; ++i) words[i] = read_le32(src + 4 * i);
    layout.offsets.emplace(e.name, std::make_pair(e.start, e.end));
    model.tensors_.emplace(std::move(e.name), Tensor(std::move(e.shape), std::move(words)));
  }
  model.layout_ = std::move(layout);
  return model;
}

Bytes serialize(const TensorModel& model) {
  std::string header;
  std::uint64_t data_size = 0;
  if (model.layout_) {
    header = model.layout_->header;
    data_size = model.layout_->data_size;
  } else {
    json root = json::object();
    for (const auto& spec : model.specs()) {
      root[spec.name] = {{"dtype", "F32"},
                         {"shape", spec.shape},
                         {"data_offsets", {spec.data_offsets.first, spec.data_offsets.second}}};
      data_size = std::max(data_size, spec.data_offsets.second);
    }
    if (!model.metadata_.empty()) root[std::string(kMetadataKey)] = model.metadata_;
    header = root.dump();
  }

  Bytes out;
  out.reserve(8 + header.size() + static_cast<std::size_t>(data_size));
  append_le64(out, header.size());
  out.insert(out.end(), header.begin(), header.end());
  const std::size_t data_start = out.size();
  out.resize(data_start + static_cast<std::size_t>(data_size));
  for (const auto& spec : model.specs()) {
    auto words = model.at(spec.name).words();
    std::uint8_t* dst = out.data() + data_start + spec.data_offsets.first;
    for (std::size_t i = 0; i < words.size(); ++i) write_le32(dst + 4 * i, words[i]);
  }
  return out;
}

// --- files ----------------------------------------------------------------

Bytes read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::kIo, "cannot open " + path.string());
  Bytes bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw Error(Errc::kIo, "failed reading " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::kIo, "cannot create " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw Error(Errc::kIo, "failed writing " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(Errc::kIo, "cannot move output into place at " + path.string());
  }
}

TensorModel load_model(const std::filesystem::path& path) {
  return parse(read_file(path));
}

void save_model(const TensorModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, serialize(model));
}

// --- LayerView ------------------------------------------------------------

LayerView layer_view(const TensorModel& model, std::string_view layer_name) {
  const std::string name(layer_name);
  const Tensor& weight = model.at(name + ".weight");
  const Tensor& bias = model.at(name + ".bias");
  if (weight.rank() != 2) {
    throw Error(Errc::kShapeMismatch, name + ".weight must be rank 2, got rank " +
                                          std::to_string(weight.rank()));
  }
  if (bias.rank() != 1 || bias.shape()[0] != weight.shape()[0]) {
    throw Error(Errc::kShapeMismatch,
                name + ".bias length does not match the weight row count");
  }
  LayerView view;
  view.name_ = name;
  view.neurons_ = weight.shape()[0];
  view.fan_in_ = weight.shape()[1];
  view.weight_ = weight;
  view.bias_ = bias;
  return view;
}

std::span<const std::uint32_t> LayerView::weights(std::size_t neuron) const {
  return weight_.words().subspan(neuron * fan_in_, fan_in_);
}

std::span<std::uint32_t> LayerView::weights(std::size_t neuron) {
  return weight_.mutable_words().subspan(neuron * fan_in_, fan_in_);
}

std::uint32_t LayerView::bias(std::size_t neuron) const { return bias_.words()[neuron]; }

void LayerView::set_bias(std::size_t neuron, std::uint32_t word) {
  bias_.mutable_words()[neuron] = word;
}

std::uint32_t LayerView::parameter(std::size_t p) const {
  const std::size_t neuron = p / (fan_in_ + 1);
  const std::size_t slot = p % (fan_in_ + 1);
  return slot < fan_in_ ? weight_.words()[neuron * fan_in_ + slot] : bias(neuron);
}

void LayerView::set_parameter(std::size_t p, std::uint32_t word) {
  const std::size_t neuron = p / (fan_in_ + 1);
  const std::size_t slot = p % (fan_in_ + 1);
  if (slot < fan_in_) {
    weight_.mutable_words()[neuron * fan_in_ + slot] = word;
  } else {
    set_bias(neuron, word);
  }
}

void LayerView::commit(TensorModel& model) const {
  model.replace_data(name_ + ".weight", weight_);
  model.replace_data(name_ + ".bias", bias_);
}

}  // namespace nnstego
