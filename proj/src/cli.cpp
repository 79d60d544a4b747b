#include "nnstego/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "nnstego/analysis.hpp"
#include "nnstego/container.hpp"
#include "nnstego/error.hpp"
#include "nnstego/harness.hpp"
#include "nnstego/stego.hpp"

namespace nnstego {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kDataSeedKey = "nnstego.data_seed";

enum class Format { kText, kRecords };

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument:
      return kExitUsage;
    case Errc::kMalformedHeader:
    case Errc::kOffsetOverlap:
    case Errc::kTruncatedData:
    case Errc::kMissingTensor:
    case Errc::kShapeMismatch:
    case Errc::kNotPinned:
      return kExitFormat;
    case Errc::kPayloadTooLarge:
    case Errc::kLayerTooSmall:
    case Errc::kEmptyPayload:
      return kExitCapacity;
    case Errc::kNoStegoHeader:
    case Errc::kUnsupportedVersion:
    case Errc::kDigestMismatch:
      return kExitIntegrity;
    case Errc::kNonFiniteLoss:
    case Errc::kIo:
      return kExitFailure;
  }
  return kExitFailure;
}

void require_distinct(const fs::path& input, const fs::path& output) {
  std::error_code ec;
  if (fs::exists(output, ec) && fs::equivalent(input, output, ec)) {
    throw Error(Errc::kInvalidArgument, "refusing to overwrite the input file " + input.string());
  }
}

std::string shape_text(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(Errc::kInvalidArgument, "bad fraction '" + item + "'");
    }
  }
  if (out.empty()) throw Error(Errc::kInvalidArgument, "no fractions given");
  return out;
}

std::vector<int> parse_dims(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw Error(Errc::kInvalidArgument, "bad layer size '" + item + "'");
    }
  }
  return out;
}

EncodingParams encoding_from(const std::string& band, const std::string& sign) {
  EncodingParams p;
  p.band = band == "small" ? Band::kSmall : Band::kLarge;
  p.sign_rule = sign == "positive" ? SignRule::kAlwaysPositive : SignRule::kPreserveOriginal;
  return p;
}

// Options shared by commands that need the evaluation data.
struct DataOptions {
  std::uint64_t data_seed = 0;
  bool data_seed_set = false;
  std::string idx_images;
  std::string idx_labels;
  std::string idx_test_images;
  std::string idx_test_labels;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--data-seed", data_seed, "Seed of the synthetic blob dataset")
        ->each([this](const std::string&) { data_seed_set = true; });
    cmd->add_option("--idx-images", idx_images, "IDX training images instead of blobs");
    cmd->add_option("--idx-labels", idx_labels, "IDX training labels");
    cmd->add_option("--idx-test-images", idx_test_images, "IDX test images");
    cmd->add_option("--idx-test-labels", idx_test_labels, "IDX test labels");
  }

  DatasetSplit load(int dim, int classes, std::uint64_t fallback_seed) const {
    if (!idx_images.empty() || !idx_test_images.empty()) {
      DatasetSplit split;
      if (!idx_images.empty()) split.train = load_idx(idx_images, idx_labels);
      if (!idx_test_images.empty()) {
        split.test = load_idx(idx_test_images, idx_test_labels);
      } else {
        split.test = split.train;
      }
      if (idx_images.empty()) split.train = split.test;
      return split;
    }
    BlobConfig cfg;
    cfg.dim = dim;
    cfg.classes = classes;
    cfg.seed = data_seed_set ? data_seed : fallback_seed;
    return make_blobs(cfg);
  }
};

std::uint64_t stored_data_seed(const TensorModel& model) {
  auto it = model.metadata().find(kDataSeedKey);
  if (it == model.metadata().end()) return 1;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    return 1;
  }
}

void print_stats(const std::string& name, const ParamStats& s, Format format) {
  if (format == Format::kRecords) {
    json hist = json::object();
    for (std::size_t b = 0; b < s.leading_byte_histogram.size(); ++b) {
      if (s.leading_byte_histogram[b]) {
        char key[8];
        std::snprintf(key, sizeof key, "0x%02X", static_cast<unsigned>(b));
        hist[key] = s.leading_byte_histogram[b];
      }
    }
    json rec = {{"tensor", name},
                {"count", s.count},
                {"negatives", s.negatives},
                {"positives", s.positives},
                {"zeros", s.zeros},
                {"min", s.min},
                {"max", s.max},
                {"fraction_below_1e-4", s.fraction_below_1e4},
                {"fraction_below_1e-3", s.fraction_below_1e3},
                {"leading_byte_histogram", hist}};
    std::cout << rec.dump() << "\n";
    return;
  }
  std::cout << name << "\n"
            << "  count      " << s.count << "\n"
            << "  negatives  " << s.negatives << "\n"
            << "  positives  " << s.positives << "\n"
            << "  zeros      " << s.zeros << "\n"
            << "  min        " << s.min << "\n"
            << "  max        " << s.max << "\n"
            << "  |v|<1e-4   " << s.fraction_below_1e4 * 100.0 << "%\n"
            << "  |v|<1e-3   " << s.fraction_below_1e3 * 100.0 << "%\n";
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Hide, recover, and detect byte payloads in neural-network weight files"};
  app.require_subcommand(1);

  std::string model_path, out_path, layer, payload_path, tensor, format_name = "text";
  std::string band = "large", sign = "preserve";
  int bits = 8;
  std::uint64_t seed = 1;
  double threshold = kDefaultDetectThreshold;
  std::size_t window = kDefaultDetectWindow;

  auto format_option = [&](CLI::App* cmd) {
    cmd->add_option("--format", format_name, "Report format")
        ->check(CLI::IsMember({"text", "records"}));
  };
  auto model_option = [&](CLI::App* cmd) {
    cmd->add_option("--model", model_path, "Input container file")->required();
  };
  auto layer_option = [&](CLI::App* cmd) {
    cmd->add_option("--layer", layer, "Layer name (<layer>.weight / <layer>.bias)")->required();
  };
  auto out_option = [&](CLI::App* cmd, const char* help) {
    cmd->add_option("--out", out_path, help)->required();
  };
  auto encoding_options = [&](CLI::App* cmd) {
    cmd->add_option("--band", band, "Magnitude band of written weights")
        ->check(CLI::IsMember({"large", "small"}));
    cmd->add_option("--sign", sign, "Sign rule for written weights")
        ->check(CLI::IsMember({"preserve", "positive"}));
  };

  auto* info = app.add_subcommand("info", "List tensors and metadata");
  model_option(info);
  format_option(info);

  auto* stats_cmd = app.add_subcommand("stats", "Parameter statistics of one tensor");
  model_option(stats_cmd);
  stats_cmd->add_option("--tensor", tensor, "Tensor name")->required();
  format_option(stats_cmd);

  auto* cap = app.add_subcommand("capacity", "Payload capacity of a layer");
  model_option(cap);
  layer_option(cap);
  cap->add_option("--payload", payload_path, "Report neurons needed for this payload");
  format_option(cap);

  auto* embed = app.add_subcommand("embed", "Embed a payload by fast substitution");
  model_option(embed);
  layer_option(embed);
  embed->add_option("--payload", payload_path, "Payload file")->required();
  out_option(embed, "Output container file");
  encoding_options(embed);

  auto* extract = app.add_subcommand("extract", "Extract and verify a fast-substitution payload");
  model_option(extract);
  layer_option(extract);
  out_option(extract, "Output payload file");

  auto* lsb_embed = app.add_subcommand("lsb-embed", "Embed a payload in low mantissa bits");
  model_option(lsb_embed);
  layer_option(lsb_embed);
  lsb_embed->add_option("--payload", payload_path, "Payload file")->required();
  lsb_embed->add_option("--bits", bits, "Bits per parameter")->check(CLI::Range(1, 23));
  out_option(lsb_embed, "Output container file");

  auto* lsb_extract = app.add_subcommand("lsb-extract", "Extract and verify an LSB payload");
  model_option(lsb_extract);
  layer_option(lsb_extract);
  lsb_extract->add_option("--bits", bits, "Bits per parameter")->check(CLI::Range(1, 23));
  out_option(lsb_extract, "Output payload file");

  auto* detect_cmd = app.add_subcommand("detect", "Scan tensors for pinned-exponent payloads");
  model_option(detect_cmd);
  detect_cmd->add_option("--threshold", threshold, "Pinned fraction that flags a tensor")
      ->check(CLI::Range(0.0, 1.0));
  detect_cmd->add_option("--window", window, "Minimum values for a tensor to be scored");
  format_option(detect_cmd);

  auto* sanitize_cmd = app.add_subcommand("sanitize", "Randomize low mantissa bits");
  model_option(sanitize_cmd);
  sanitize_cmd->add_option("--bits", bits, "Low mantissa bits to randomize")
      ->check(CLI::Range(1, 23));
  sanitize_cmd->add_option("--seed", seed, "Random seed");
  out_option(sanitize_cmd, "Output container file");

  std::string dims_text = "64,128,64,10";
  bool batch_norm = false;
  TrainConfig train_config;
  DataOptions data;
  std::string metrics_path;

  auto* train_cmd = app.add_subcommand("train", "Train the desk-scale MLP");
  out_option(train_cmd, "Output container file");
  train_cmd->add_option("--dims", dims_text, "Layer sizes, input first");
  train_cmd->add_flag("--batch-norm", batch_norm, "Batch normalization on hidden layers");
  train_cmd->add_option("--epochs", train_config.epochs, "Epochs");
  train_cmd->add_option("--lr", train_config.learning_rate, "Learning rate");
  train_cmd->add_option("--batch-size", train_config.batch_size, "Mini-batch size");
  train_cmd->add_option("--seed", seed, "Seed for initialization and shuffling");
  train_cmd->add_option("--metrics", metrics_path, "Write per-epoch metrics as CSV");
  data.add_to(train_cmd);

  auto* eval_cmd = app.add_subcommand("eval", "Test accuracy of a trained MLP");
  model_option(eval_cmd);
  data.add_to(eval_cmd);

  std::string fractions_text = "0,0.25,0.5,0.75,1";
  bool retrain = false;
  auto* sweep_cmd = app.add_subcommand("sweep", "Accuracy versus neurons replaced");
  model_option(sweep_cmd);
  layer_option(sweep_cmd);
  sweep_cmd->add_option("--fractions", fractions_text, "Comma-separated neuron fractions");
  sweep_cmd->add_flag("--retrain", retrain, "Freeze embedded neurons and retrain");
  sweep_cmd->add_option("--payload", payload_path, "Payload sample, repeated to fill");
  sweep_cmd->add_option("--seed", seed, "Seed for payload bytes and retraining");
  sweep_cmd->add_option("--epochs", train_config.epochs, "Retraining epochs")
      ->default_str("1");
  sweep_cmd->add_option("--lr", train_config.learning_rate, "Retraining learning rate");
  sweep_cmd->add_option("--batch-size", train_config.batch_size, "Retraining batch size");
  sweep_cmd->add_option("--out", out_path, "Write CSV here instead of stdout");
  encoding_options(sweep_cmd);
  sweep_cmd->get_option("--sign")->description("Sign rule for written weights (default positive)");
  data.add_to(sweep_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const Format format = format_name == "records" ? Format::kRecords : Format::kText;

  try {
    if (!out_path.empty() && !model_path.empty()) require_distinct(model_path, out_path);

    if (*info) {
      const TensorModel model = load_model(model_path);
      for (const auto& spec : model.specs()) {
        if (format == Format::kRecords) {
          json rec = {{"tensor", spec.name},
                      {"dtype", "F32"},
                      {"shape", spec.shape},
                      {"data_offsets", {spec.data_offsets.first, spec.data_offsets.second}}};
          std::cout << rec.dump() << "\n";
        } else {
          std::cout << std::left << std::setw(32) << spec.name << " F32 "
                    << std::setw(16) << shape_text(spec.shape) << " [" << spec.data_offsets.first
                    << ", " << spec.data_offsets.second << ")\n";
        }
      }
      if (format == Format::kText) {
        for (const auto& [k, v] : model.metadata()) std::cout << "meta " << k << " = " << v << "\n";
      }
    } else if (*stats_cmd) {
      const TensorModel model = load_model(model_path);
      print_stats(tensor, stats(model, tensor), format);
    } else if (*cap) {
      const TensorModel model = load_model(model_path);
      const CapacityReport r = capacity(model, layer);
      std::optional<std::size_t> required;
      std::optional<std::size_t> payload_size;
      if (!payload_path.empty()) {
        payload_size = read_file(payload_path).size();
        required = r.neurons_required(*payload_size);
      }
      if (format == Format::kRecords) {
        json rec = {{"layer", r.layer},
                    {"neurons", r.neurons},
                    {"fan_in", r.fan_in},
                    {"per_neuron_bytes", r.per_neuron_bytes},
                    {"payload_capacity_bytes", r.payload_capacity_bytes},
                    {"header_neurons", r.header_neurons},
                    {"param_bytes", param_size(r.neurons, r.fan_in)}};
        if (required) rec["neurons_required"] = *required;
        std::cout << rec.dump() << "\n";
      } else {
        std::cout << "layer             " << r.layer << "\n"
                  << "neurons           " << r.neurons << "\n"
                  << "fan-in            " << r.fan_in << "\n"
                  << "parameter bytes   " << param_size(r.neurons, r.fan_in) << "\n"
                  << "bytes/neuron      " << r.per_neuron_bytes << " ("
                  << std::setprecision(6) << static_cast<double>(r.per_neuron_bytes) / 1024.0
                  << " KiB)\n"
                  << "capacity bytes    " << r.payload_capacity_bytes << " ("
                  << static_cast<double>(r.payload_capacity_bytes) / (1024.0 * 1024.0)
                  << " MiB)\n"
                  << "header neurons    " << r.header_neurons << "\n";
        if (required) {
          std::cout << "payload bytes     " << *payload_size << "\n"
                    << "neurons required  " << *required
                    << (*required > r.neurons ? " (exceeds layer)" : "") << "\n";
        }
      }
    } else if (*embed) {
      const TensorModel model = load_model(model_path);
      const Bytes payload = read_file(payload_path);
      const TensorModel out =
          embed_fast_substitution(model, layer, payload, encoding_from(band, sign));
      save_model(out, out_path);
      const CapacityReport r = capacity(model, layer);
      std::cout << "embedded " << payload.size() << " bytes into " << r.neurons_required(payload.size())
                << " neuron(s) of " << layer << ", sha256 " << to_hex(sha256(payload)) << "\n";
    } else if (*extract) {
      const TensorModel model = load_model(model_path);
      const Bytes payload = extract_fast_substitution(model, layer);
      write_file_atomic(out_path, payload);
      std::cout << "extracted " << payload.size() << " bytes, sha256 " << to_hex(sha256(payload))
                << " verified\n";
    } else if (*lsb_embed) {
      const TensorModel model = load_model(model_path);
      const Bytes payload = read_file(payload_path);
      const TensorModel out = embed_lsb(model, layer, payload, bits);
      save_model(out, out_path);
      std::cout << "embedded " << payload.size() << " bytes in the low " << bits << " bits of "
                << layer << ", sha256 " << to_hex(sha256(payload)) << "\n";
    } else if (*lsb_extract) {
      const TensorModel model = load_model(model_path);
      const Bytes payload = extract_lsb(model, layer, bits);
      write_file_atomic(out_path, payload);
      std::cout << "extracted " << payload.size() << " bytes, sha256 " << to_hex(sha256(payload))
                << " verified\n";
    } else if (*detect_cmd) {
      const TensorModel model = load_model(model_path);
      const DetectionReport report = detect(model, {threshold, window});
      for (const auto& t : report.tensors) {
        if (format == Format::kRecords) {
          json rec = {{"tensor", t.name},
                      {"count", t.count},
                      {"pinned_fraction", t.pinned_fraction},
                      {"trailing_entropy_bits", t.trailing_entropy_bits},
                      {"in_window", t.in_window},
                      {"flagged", t.flagged}};
          std::cout << rec.dump() << "\n";
        } else {
          std::cout << std::left << std::setw(32) << t.name << " n=" << std::setw(10) << t.count
                    << " pinned=" << std::fixed << std::setprecision(4) << t.pinned_fraction
                    << " entropy=" << std::setprecision(3) << t.trailing_entropy_bits
                    << (t.flagged ? "  FLAGGED" : (t.in_window ? "" : "  (below window)"))
                    << "\n";
        }
      }
      if (format == Format::kText) {
        std::cout << "verdict: " << (report.flagged ? "flagged" : "clean") << " (threshold "
                  << report.threshold << ", window " << report.window << ")\n";
      }
    } else if (*sanitize_cmd) {
      const TensorModel model = load_model(model_path);
      save_model(sanitize(model, bits, seed), out_path);
      std::cout << "randomized the low " << bits << " mantissa bits of every parameter\n";
    } else if (*train_cmd) {
      MlpSpec spec;
      spec.dims = parse_dims(dims_text);
      spec.batch_norm = batch_norm;
      spec.seed = seed;
      train_config.seed = seed;
      const std::uint64_t data_seed = data.data_seed_set ? data.data_seed : seed;
      const DatasetSplit split = data.load(spec.dims.front(), spec.dims.back(), data_seed);
      TrainResult result = train(make_mlp(spec), split.train, train_config);
      TensorModel out = to_container(result.model);
      if (data.idx_images.empty()) out.set_metadata(kDataSeedKey, std::to_string(data_seed));
      save_model(out, out_path);
      if (!metrics_path.empty()) {
        std::ostringstream csv;
        csv << "epoch,loss,train_accuracy\n";
        for (const auto& m : result.metrics) {
          csv << m.epoch << ',' << m.loss << ',' << m.train_accuracy << '\n';
        }
        const std::string text = csv.str();
        write_file_atomic(metrics_path, Bytes(text.begin(), text.end()));
      }
      std::cout << "test accuracy " << std::fixed << std::setprecision(4)
                << evaluate(result.model, split.test) << "\n";
    } else if (*eval_cmd) {
      const TensorModel container = load_model(model_path);
      const Mlp<float> model = from_container(container);
      const DatasetSplit split = data.load(static_cast<int>(model.input_dim()),
                                           static_cast<int>(model.output_dim()),
                                           stored_data_seed(container));
      std::cout << std::fixed << std::setprecision(6) << evaluate(model, split.test) << "\n";
    } else if (*sweep_cmd) {
      const TensorModel container = load_model(model_path);
      const Mlp<float> model = from_container(container);
      const DatasetSplit split = data.load(static_cast<int>(model.input_dim()),
                                           static_cast<int>(model.output_dim()),
                                           stored_data_seed(container));
      SweepOptions options;
      options.layer = layer;
      options.fractions = parse_fractions(fractions_text);
      options.retrain = retrain;
      options.retrain_config = train_config;
      if (sweep_cmd->count("--epochs") == 0) options.retrain_config.epochs = 1;
      options.retrain_config.seed = seed;
      options.encoding = encoding_from(band, sweep_cmd->count("--sign") ? sign : "positive");
      const PayloadSource source = payload_path.empty()
                                       ? random_payload_source(seed)
                                       : repeating_payload_source(read_file(payload_path));
      const std::string csv = sweep_csv(sweep(model, split, source, options));
      if (out_path.empty()) {
        std::cout << csv;
      } else {
        write_file_atomic(out_path, Bytes(csv.begin(), csv.end()));
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace nnstego
