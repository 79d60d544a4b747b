#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>

#include "nnstego/container.hpp"
#include "nnstego/digest.hpp"

namespace nnstego {
namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string output;
};

class CliTest : public testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("nnstego_cli_" + std::string(testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  static RunResult run(const std::string& args) {
    const std::string cmd = std::string(NNSTEGO_CLI_PATH) + " " + args + " 2>&1";
    RunResult r;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return r;
    char buf[4096];
    std::size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.output.append(buf, n);
    const int status = pclose(pipe);
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
  }

  // A container with one layer of the given shape and small random weights.
  std::string make_layer_file(const std::string& name, std::size_t m, std::size_t n,
                              std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 0.01f);
    std::vector<float> w(m * n), b(m);
    for (auto& x : w) x = gauss(rng);
    for (auto& x : b) x = gauss(rng);
    TensorModel model;
    model.insert("fc.weight", Tensor::from_floats({m, n}, w));
    model.insert("fc.bias", Tensor::from_floats({m}, b));
    save_model(model, path(name));
    return path(name);
  }

  std::string make_payload(const std::string& name, std::size_t size, std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    Bytes bytes(size);
    for (auto& x : bytes) x = static_cast<std::uint8_t>(rng());
    write_file_atomic(path(name), bytes);
    return path(name);
  }

  fs::path dir_;
};

TEST_F(CliTest, EmbedExtractRoundTrip) {
  const auto model = make_layer_file("m.nst", 20, 64, 1);
  const auto payload = make_payload("p.bin", 1000, 2);
  const Bytes model_before = read_file(model);

  auto r = run("embed --model " + model + " --layer fc --payload " + payload + " --out " +
               path("s.nst"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find(to_hex(sha256(read_file(payload)))), std::string::npos);
  EXPECT_EQ(read_file(model), model_before);

  r = run("extract --model " + path("s.nst") + " --layer fc --out " + path("x.bin"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(read_file(path("x.bin")), read_file(payload));
  EXPECT_NE(r.output.find("verified"), std::string::npos);
}

TEST_F(CliTest, CleanModelReportsNoHeader) {
  const auto model = make_layer_file("m.nst", 20, 16, 3);
  const auto r = run("extract --model " + model + " --layer fc --out " + path("x.bin"));
  EXPECT_EQ(r.exit_code, 5);
  EXPECT_NE(r.output.find("no stego header"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(path("x.bin")));
}

TEST_F(CliTest, CapacityOfAWideLayer) {
  const auto model = make_layer_file("m.nst", 16, 4096, 4);
  auto r = run("capacity --model " + model + " --layer fc");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("12288"), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("12 KiB"), std::string::npos) << r.output;
  r = run("capacity --model " + model + " --layer fc --format records");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("\"per_neuron_bytes\":12288"), std::string::npos) << r.output;
}

TEST_F(CliTest, ExitCodes) {
  const auto model = make_layer_file("m.nst", 20, 4, 5);
  EXPECT_EQ(run("").exit_code, 2);
  EXPECT_EQ(run("embed --model " + model).exit_code, 2);
  EXPECT_EQ(run("frobnicate").exit_code, 2);
  EXPECT_EQ(run("detect --model " + model + " --threshold 2").exit_code, 2);

  write_file_atomic(path("junk.nst"), Bytes{1, 2, 3});
  EXPECT_EQ(run("info --model " + path("junk.nst")).exit_code, 3);
  EXPECT_EQ(run("capacity --model " + model + " --layer nope").exit_code, 3);

  const auto big = make_payload("big.bin", 3 * 20 * 4 + 1, 6);
  EXPECT_EQ(run("embed --model " + model + " --layer fc --payload " + big + " --out " +
                path("o.nst"))
                .exit_code,
            4);
  write_file_atomic(path("empty.bin"), Bytes{});
  EXPECT_EQ(run("embed --model " + model + " --layer fc --payload " + path("empty.bin") +
                " --out " + path("o.nst"))
                .exit_code,
            4);
  EXPECT_EQ(run("extract --model " + path("missing.nst") + " --layer fc --out " + path("x"))
                .exit_code,
            1);
}

TEST_F(CliTest, RefusesToOverwriteInput) {
  const auto model = make_layer_file("m.nst", 20, 4, 7);
  const auto payload = make_payload("p.bin", 10, 8);
  const Bytes before = read_file(model);
  const auto r = run("embed --model " + model + " --layer fc --payload " + payload + " --out " +
                     path("./m.nst"));
  EXPECT_EQ(r.exit_code, 2) << r.output;
  EXPECT_EQ(read_file(model), before);
}

TEST_F(CliTest, DetectAndSanitize) {
  const auto model = make_layer_file("m.nst", 20, 512, 9);
  const auto payload = make_payload("p.bin", 3 * 512 * 10, 10);
  ASSERT_EQ(run("embed --model " + model + " --layer fc --payload " + payload + " --out " +
                path("s.nst"))
                .exit_code,
            0);
  auto r = run("detect --model " + path("s.nst") + " --format records");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("\"tensor\":\"fc.weight\""), std::string::npos) << r.output;
  EXPECT_NE(r.output.find("\"flagged\":true"), std::string::npos) << r.output;
  r = run("detect --model " + path("s.nst"));
  EXPECT_NE(r.output.find("verdict: flagged"), std::string::npos) << r.output;

  ASSERT_EQ(run("sanitize --model " + path("s.nst") + " --bits 8 --seed 3 --out " + path("a.nst"))
                .exit_code,
            0);
  ASSERT_EQ(run("sanitize --model " + path("s.nst") + " --bits 8 --seed 3 --out " + path("b.nst"))
                .exit_code,
            0);
  EXPECT_EQ(read_file(path("a.nst")), read_file(path("b.nst")));
  r = run("extract --model " + path("a.nst") + " --layer fc --out " + path("x.bin"));
  EXPECT_EQ(r.exit_code, 5) << r.output;
}

TEST_F(CliTest, LsbRoundTrip) {
  const auto model = make_layer_file("m.nst", 20, 64, 11);
  const auto payload = make_payload("p.bin", 500, 12);
  ASSERT_EQ(run("lsb-embed --model " + model + " --layer fc --bits 4 --payload " + payload +
                " --out " + path("s.nst"))
                .exit_code,
            0);
  auto r = run("lsb-extract --model " + path("s.nst") + " --layer fc --bits 4 --out " +
               path("x.bin"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(read_file(path("x.bin")), read_file(payload));
  r = run("lsb-extract --model " + path("s.nst") + " --layer fc --bits 5 --out " + path("y.bin"));
  EXPECT_EQ(r.exit_code, 5) << r.output;
  EXPECT_EQ(run("lsb-embed --model " + model + " --layer fc --bits 24 --payload " + payload +
                " --out " + path("t.nst"))
                .exit_code,
            2);
}

TEST_F(CliTest, InfoAndStats) {
  const auto model = make_layer_file("m.nst", 20, 64, 13);
  auto r = run("info --model " + model);
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("fc.weight"), std::string::npos);
  r = run("stats --model " + model + " --tensor fc.weight --format records");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("\"count\":1280"), std::string::npos) << r.output;
}

TEST_F(CliTest, TrainEvalSweep) {
  auto r = run("train --out " + path("mlp.nst") + " --epochs 3 --seed 2 --metrics " +
               path("metrics.csv"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("test accuracy"), std::string::npos);
  const Bytes metrics = read_file(path("metrics.csv"));
  EXPECT_EQ(std::string(metrics.begin(), metrics.end()).substr(0, 26), "epoch,loss,train_accuracy\n");

  r = run("eval --model " + path("mlp.nst"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_GT(std::stod(r.output), 0.9);

  r = run("sweep --model " + path("mlp.nst") + " --layer fc1 --fractions 0,1 --seed 4");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  EXPECT_EQ(r.output.substr(0, r.output.find('\n')), "fraction,acc_before,acc_after,digest_ok");
  EXPECT_NE(r.output.find("\n1.0000,"), std::string::npos) << r.output;

  r = run("sweep --model " + path("mlp.nst") + " --layer fc1 --fractions 0.5 --retrain --out " +
          path("curve.csv"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  const Bytes csv = read_file(path("curve.csv"));
  EXPECT_NE(std::string(csv.begin(), csv.end()).find(",true\n"), std::string::npos);

  r = run("embed --model " + path("mlp.nst") + " --layer fc1 --payload " +
          make_payload("p.bin", 100, 5) + " --out " + path("s.nst"));
  ASSERT_EQ(r.exit_code, 0) << r.output;
  r = run("extract --model " + path("s.nst") + " --layer fc1 --out " + path("x.bin"));
  EXPECT_EQ(r.exit_code, 0) << r.output;
}

}  // namespace
}  // namespace nnstego
