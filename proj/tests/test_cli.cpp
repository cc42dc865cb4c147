// End-to-end checks of the command-line surface: exit codes, logging
// conventions, config-file merging, and determinism of produced artifacts.
#include <gtest/gtest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "udae/checkpoint.hpp"
#include "udae/dataset.hpp"
#include "udae/image_io.hpp"
#include "udae/scenes.hpp"

namespace fs = std::filesystem;

namespace {

std::string g_cli_path;

struct CmdResult {
  int exit_code = -1;
  std::string output; // stdout + stderr
};

CmdResult run_cli(const std::string &args) {
  const std::string cmd = g_cli_path + " " + args + " 2>&1";
  FILE *pipe = popen(cmd.c_str(), "r");
  if (!pipe)
    throw std::runtime_error("popen failed");
  CmdResult result;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe))
    result.output.append(buf, n);
  const int status = pclose(pipe);
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return result;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("udae_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

TEST(Cli, VersionExitsZero) {
  auto r = run_cli("--version");
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("udae"), std::string::npos);
}

TEST(Cli, UnknownFlagFailsWithUsage) {
  auto r = run_cli("restore --definitely-not-a-flag 1");
  EXPECT_NE(r.exit_code, 0);
}

TEST(Cli, MissingRequiredPathFails) {
  auto r = run_cli("restore --in /tmp --out /tmp");
  EXPECT_NE(r.exit_code, 0);
  EXPECT_NE(r.output.find("--model"), std::string::npos);
}

TEST(Cli, NoSubcommandFails) {
  auto r = run_cli("");
  EXPECT_NE(r.exit_code, 0);
}

TEST(Cli, RestoreEmptyDirSucceedsWithZeroCount) {
  TempDir tmp;
  fs::create_directories(tmp.path / "in");
  udae::UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  udae::save_weights(udae::build_model(cfg, 1), tmp.path / "m.udae");
  auto r = run_cli("restore --model " + (tmp.path / "m.udae").string() + " --in " +
                   (tmp.path / "in").string() + " --out " + (tmp.path / "out").string());
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_NE(r.output.find("0 images processed"), std::string::npos);
}

TEST(Cli, GenDataTrainEvaluatePipelineRuns) {
  TempDir tmp;
  auto gen = run_cli("gen-data --out " + (tmp.path / "data").string() +
                     " --count 16 --size 16 --preset mixed --seed 5 --synth-count 4");
  ASSERT_EQ(gen.exit_code, 0) << gen.output;
  ASSERT_TRUE(fs::exists(tmp.path / "data" / "manifest.json"));

  auto train = run_cli("train --data " + (tmp.path / "data").string() + " --out " +
                       (tmp.path / "run").string() +
                       " --epochs 1 --batch 4 --depth 1 --base 2 --seed 5");
  ASSERT_EQ(train.exit_code, 0) << train.output;
  ASSERT_TRUE(fs::exists(tmp.path / "run" / "model.udae"));
  ASSERT_TRUE(fs::exists(tmp.path / "run" / "loss_history.csv"));

  auto eval = run_cli("evaluate --model " + (tmp.path / "run" / "model.udae").string() +
                      " --data " + (tmp.path / "data").string() + " --split test --out " +
                      (tmp.path / "report").string());
  ASSERT_EQ(eval.exit_code, 0) << eval.output;
  EXPECT_TRUE(fs::exists(tmp.path / "report.csv"));
  EXPECT_TRUE(fs::exists(tmp.path / "report.json"));
}

TEST(Cli, TrainZeroEpochsWritesInitialCheckpoint) {
  TempDir tmp;
  auto gen = run_cli("gen-data --out " + (tmp.path / "data").string() +
                     " --count 8 --size 16 --seed 2 --synth-count 2");
  ASSERT_EQ(gen.exit_code, 0) << gen.output;
  auto train = run_cli("train --data " + (tmp.path / "data").string() + " --out " +
                       (tmp.path / "run").string() +
                       " --epochs 0 --depth 1 --base 2 --seed 2");
  ASSERT_EQ(train.exit_code, 0) << train.output;
  // epochs 0 leaves the freshly built weights untouched
  udae::UNetConfig cfg;
  cfg.depth = 1;
  cfg.base_channels = 2;
  udae::ModelWeights expect = udae::build_model(cfg, 2);
  udae::ModelWeights got = udae::load_weights(tmp.path / "run" / "model.udae");
  ASSERT_EQ(got.layers.size(), expect.layers.size());
  for (std::size_t i = 0; i < got.layers.size(); ++i)
    for (std::int64_t k = 0; k < got.layers[i].weights.size(); ++k)
      ASSERT_EQ(got.layers[i].weights.data()[k], expect.layers[i].weights.data()[k]);
}

TEST(Cli, GradcheckPassesAtTinyConfig) {
  auto r = run_cli("gradcheck --depth 1 --base 2 --size 16");
  EXPECT_EQ(r.exit_code, 0) << r.output;
  EXPECT_NE(r.output.find("max relative error"), std::string::npos);
}

TEST(Cli, ConfigFileSuppliesDefaultsCommandLineWins) {
  TempDir tmp;
  std::ofstream(tmp.path / "cfg.json")
      << R"({"count": 6, "size": 16, "seed": 9, "synth-count": 2, "out": ")"
      << (tmp.path / "data").string() << R"("})";
  auto r = run_cli("gen-data --config " + (tmp.path / "cfg.json").string() + " --count 4");
  ASSERT_EQ(r.exit_code, 0) << r.output;
  auto manifest = udae::load_manifest(tmp.path / "data" / "manifest.json");
  EXPECT_EQ(manifest.entries.size(), 4u) << "command line must override the config file";
  EXPECT_EQ(manifest.seed, 9u) << "config file must fill unset flags";
}

TEST(Cli, SeededRerunsProduceByteIdenticalArtifacts) {
  TempDir tmp;
  const std::string common = " --count 8 --size 16 --preset mixed --seed 3 --synth-count 2";
  ASSERT_EQ(run_cli("gen-data --out " + (tmp.path / "d1").string() + common).exit_code, 0);
  ASSERT_EQ(run_cli("gen-data --out " + (tmp.path / "d2").string() + common).exit_code, 0);
  EXPECT_EQ(slurp(tmp.path / "d1" / "manifest.json"), slurp(tmp.path / "d2" / "manifest.json"));

  const std::string train_args = " --epochs 1 --depth 1 --base 2 --seed 3";
  ASSERT_EQ(run_cli("train --data " + (tmp.path / "d1").string() + " --out " +
                    (tmp.path / "r1").string() + train_args)
                .exit_code,
            0);
  ASSERT_EQ(run_cli("train --data " + (tmp.path / "d1").string() + " --out " +
                    (tmp.path / "r2").string() + train_args)
                .exit_code,
            0);
  EXPECT_EQ(slurp(tmp.path / "r1" / "loss_history.csv"),
            slurp(tmp.path / "r2" / "loss_history.csv"));
  EXPECT_EQ(slurp(tmp.path / "r1" / "model.udae"), slurp(tmp.path / "r2" / "model.udae"));
}

} // namespace

int main(int argc, char **argv) {
  ::testing::InitGoogleTest(&argc, argv);
  if (const char *env = std::getenv("UDAE_CLI_BIN"))
    g_cli_path = env;
  for (int i = 1; i < argc; ++i)
    if (argv[i][0] != '-')
      g_cli_path = argv[i];
  if (g_cli_path.empty()) {
    std::fprintf(stderr, "UDAE_CLI_BIN not set and no CLI path argument given\n");
    return 2;
  }
  return RUN_ALL_TESTS();
}
