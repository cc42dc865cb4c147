// Command-line frontend for the underwater color restoration pipeline:
// synthetic pair generation, training, restoration, evaluation, timing, and
// gradient verification. Logs go to stderr; data goes to files.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "udae/adam.hpp"
#include "udae/checkpoint.hpp"
#include "udae/dataset.hpp"
#include "udae/eval.hpp"
#include "udae/model_check.hpp"
#include "udae/scenes.hpp"
#include "udae/trainer.hpp"
#include "udae/unet.hpp"

namespace fs = std::filesystem;

namespace {

constexpr const char *kVersion = "1.0.0";

// --config <file.json> supplies defaults for any flag not given on the
// command line: keys are flag names without the leading dashes.
std::vector<std::string> merge_json_config(std::vector<std::string> args) {
  std::string cfg_path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size())
      cfg_path = args[i + 1];
    else if (args[i].rfind("--config=", 0) == 0)
      cfg_path = args[i].substr(9);
  }
  if (cfg_path.empty())
    return args;
  std::ifstream f(cfg_path);
  if (!f)
    throw std::runtime_error("cannot open config file " + cfg_path);
  nlohmann::json j = nlohmann::json::parse(f);
  if (!j.is_object())
    throw std::runtime_error("config file must hold a JSON object of flag values");
  for (const auto &[key, value] : j.items()) {
    const std::string flag = "--" + key;
    bool present = false;
    for (const auto &a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) {
        present = true;
        break;
      }
    if (present)
      continue;
    if (value.is_boolean()) {
      if (value.get<bool>())
        args.push_back(flag);
    } else if (value.is_string()) {
      args.push_back(flag);
      args.push_back(value.get<std::string>());
    } else {
      args.push_back(flag);
      args.push_back(value.dump());
    }
  }
  return args;
}

void add_config_flag(CLI::App *cmd, std::string &sink) {
  cmd->add_option("--config", sink, "JSON file with default flag values");
}

struct GenDataArgs {
  std::string clean_dir;
  std::string out_dir;
  std::int64_t count = 200;
  std::int64_t size = 64;
  std::string preset = "mixed";
  std::uint64_t seed = 0;
  std::int64_t synth_count = 24;
};

int run_gen_data(const GenDataArgs &a) {
  fs::path clean = a.clean_dir;
  if (a.clean_dir.empty()) {
    // no source photographs given: synthesize procedural clean scenes
    clean = fs::path(a.out_dir) / "clean_src";
    fs::create_directories(clean);
    for (std::int64_t i = 0; i < a.synth_count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scene_%04lld.png", static_cast<long long>(i));
      udae::save_png(udae::from_tensor(udae::generate_clean_scene(
                         udae::mix_seed(a.seed ^ 0x5CE17Eull, static_cast<std::uint64_t>(i)),
                         a.size)),
                     clean / name);
    }
    std::fprintf(stderr, "generated %lld procedural clean scenes in %s\n",
                 static_cast<long long>(a.synth_count), clean.string().c_str());
  }
  const auto manifest = udae::build_dataset(clean, a.out_dir, a.count, a.size,
                                            udae::preset_from_name(a.preset), a.seed);
  std::int64_t train = 0, val = 0, test = 0;
  for (const auto &e : manifest.entries) {
    if (e.split == "train")
      ++train;
    else if (e.split == "val")
      ++val;
    else
      ++test;
  }
  std::fprintf(stderr, "wrote %zu pairs to %s (train %lld / val %lld / test %lld)\n",
               manifest.entries.size(), a.out_dir.c_str(), static_cast<long long>(train),
               static_cast<long long>(val), static_cast<long long>(test));
  return 0;
}

struct TrainArgs {
  std::string data_dir;
  std::string out_dir;
  int epochs = 10;
  int batch = 4;
  double lr = 1e-3;
  double alpha = 0.80;
  std::uint64_t seed = 0;
  int depth = 3;
  int base = 16;
  int checkpoint_every = 0;
  std::string resume;
  int start_epoch = 0;
};

int run_train(const TrainArgs &a) {
  const auto manifest = udae::load_manifest(fs::path(a.data_dir) / "manifest.json");
  const auto train_pairs = udae::load_pairs(a.data_dir, manifest, "train");
  const auto val_pairs = udae::load_pairs(a.data_dir, manifest, "val");
  std::fprintf(stderr, "loaded %zu train / %zu val pairs\n", train_pairs.size(),
               val_pairs.size());

  udae::ModelWeights model;
  udae::AdamState adam;
  const udae::AdamState *resume_adam = nullptr;
  if (!a.resume.empty()) {
    model = udae::load_weights(a.resume + ".udae");
    adam = udae::load_adam_state(a.resume + ".adam");
    resume_adam = &adam;
    std::fprintf(stderr, "resumed from %s at epoch %d\n", a.resume.c_str(), a.start_epoch);
  } else {
    udae::UNetConfig cfg;
    cfg.depth = a.depth;
    cfg.base_channels = a.base;
    model = udae::build_model(cfg, a.seed);
  }

  udae::TrainConfig cfg;
  cfg.learning_rate = a.lr;
  cfg.batch_size = a.batch;
  cfg.epochs = a.epochs;
  cfg.alpha = a.alpha;
  cfg.seed = a.seed;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.checkpoint_dir = fs::path(a.out_dir) / "checkpoints";

  auto result = udae::train(model, train_pairs, val_pairs, cfg, a.start_epoch, resume_adam);

  fs::create_directories(a.out_dir);
  udae::save_weights(result.weights, fs::path(a.out_dir) / "model.udae");
  udae::save_adam_state(result.adam, fs::path(a.out_dir) / "model.adam");
  result.history.save_csv(fs::path(a.out_dir) / "loss_history.csv");
  if (!result.history.records.empty()) {
    const auto &last = result.history.records.back();
    std::fprintf(stderr, "final train loss %.6f val loss %.6f\n", last.train_loss,
                 last.val_loss);
  }
  std::fprintf(stderr, "saved model to %s\n",
               (fs::path(a.out_dir) / "model.udae").string().c_str());
  return 0;
}

struct RestoreArgs {
  std::string model;
  std::string in_dir;
  std::string out_dir;
};

int run_restore(const RestoreArgs &a) {
  const auto model = udae::load_weights(a.model);
  const auto result = udae::restore_batch(model, a.in_dir, a.out_dir);
  std::fprintf(stderr, "%lld images processed, %zu skipped\n",
               static_cast<long long>(result.count), result.skipped.size());
  return 0;
}

struct EvaluateArgs {
  std::string model;
  std::string data_dir;
  std::string split = "test";
  std::string out_prefix;
  double alpha = 0.80;
};

int run_evaluate(const EvaluateArgs &a) {
  const auto model = udae::load_weights(a.model);
  const auto manifest = udae::load_manifest(fs::path(a.data_dir) / "manifest.json");
  const auto pairs = udae::load_pairs(a.data_dir, manifest, a.split);
  if (pairs.empty())
    throw std::runtime_error("no pairs in split '" + a.split + "' of " + a.data_dir);

  auto report = udae::evaluate(
      [&model](const udae::Tensor &t) { return udae::forward(model, t); }, pairs,
      udae::LossConfig{a.alpha});
  report.checkpoint_id = fs::path(a.model).filename().string();
  std::fprintf(stderr, "evaluated %lld pairs: mse %.6f ssim %.6f ms_ssim_l1 %.6f\n",
               static_cast<long long>(report.count), report.mean_mse, report.mean_ssim,
               report.mean_ms_ssim_l1);
  if (!a.out_prefix.empty()) {
    report.save_csv(a.out_prefix + ".csv");
    report.save_json(a.out_prefix + ".json");
    std::fprintf(stderr, "wrote %s.csv and %s.json\n", a.out_prefix.c_str(),
                 a.out_prefix.c_str());
  }
  return 0;
}

struct BenchArgs {
  std::string model;
  int depth = 3;
  int base = 16;
  std::int64_t size = 256;
  int images = 4;
  int warmup = 2;
  int repeat = 5;
  std::uint64_t seed = 0;
  std::string hardware;
  std::string out;
};

int run_bench(const BenchArgs &a) {
  udae::ModelWeights model;
  if (!a.model.empty()) {
    model = udae::load_weights(a.model);
  } else {
    udae::UNetConfig cfg;
    cfg.depth = a.depth;
    cfg.base_channels = a.base;
    model = udae::build_model(cfg, a.seed);
  }
  std::vector<udae::Tensor> images;
  for (int i = 0; i < a.images; ++i)
    images.push_back(udae::generate_clean_scene(
        udae::mix_seed(a.seed, static_cast<std::uint64_t>(i)), a.size));
  const auto stats = udae::bench_throughput(
      [&model](const udae::Tensor &t) { return udae::forward(model, t); }, images,
      a.warmup, a.repeat, a.hardware);
  std::fprintf(stderr,
               "%lldx%lld: mean %.4f s/image (%.2f fps), median %.4f s, run-mean CV %.2f%%\n",
               static_cast<long long>(a.size), static_cast<long long>(a.size),
               stats.mean_seconds, stats.fps, stats.median_seconds,
               100.0 * stats.run_mean_cv);
  if (!a.out.empty()) {
    std::ofstream f(a.out, std::ios::trunc);
    if (!f)
      throw std::runtime_error("cannot write " + a.out);
    f << stats.to_json().dump(2) << "\n";
    std::fprintf(stderr, "wrote %s\n", a.out.c_str());
  }
  return 0;
}

struct GradcheckArgs {
  int depth = 1;
  int base = 2;
  std::int64_t size = 16;
  std::uint64_t seed = 7;
  double h = 1e-4;
  double tolerance = 1e-3;
};

int run_gradcheck(const GradcheckArgs &a) {
  udae::UNetConfig cfg;
  cfg.depth = a.depth;
  cfg.base_channels = a.base;
  const auto model = udae::build_model(cfg, a.seed);
  auto rng = udae::make_rng(a.seed + 1);
  udae::Tensor input(1, 3, a.size, a.size), target(1, 3, a.size, a.size);
  for (std::int64_t i = 0; i < input.size(); ++i) {
    input.data()[i] = static_cast<float>(udae::uniform01(rng));
    target.data()[i] = static_cast<float>(udae::uniform01(rng));
  }
  const auto report = udae::full_model_gradient_check(model, input, target, 0.80, a.h);
  std::printf("max relative error = %.3e (param %zu, analytic %.6e, numeric %.6e; "
              "%zu checked, %zu tie-point exclusions)\n",
              report.max_rel_error, report.worst_index, report.worst_analytic,
              report.worst_numeric, report.checked, report.excluded);
  return report.max_rel_error < a.tolerance ? 0 : 1;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"underwater color restoration toolkit"};
  app.set_version_flag("--version", std::string("udae ") + kVersion + " (" + __DATE__ + ")");
  app.require_subcommand(1);
  std::string config_sink;

  GenDataArgs gen;
  auto *gen_cmd = app.add_subcommand("gen-data", "generate paired clean/distorted images");
  gen_cmd->add_option("--clean-dir", gen.clean_dir,
                      "directory of source PNGs (omit to synthesize procedural scenes)");
  gen_cmd->add_option("--out", gen.out_dir, "output dataset directory")->required();
  gen_cmd->add_option("--count", gen.count, "number of pairs")->capture_default_str();
  gen_cmd->add_option("--size", gen.size, "square image size")->capture_default_str();
  gen_cmd->add_option("--preset", gen.preset, "greenish|bluish|turbid|mixed")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "rng seed")->capture_default_str();
  gen_cmd->add_option("--synth-count", gen.synth_count,
                      "procedural scene count when --clean-dir is omitted")
      ->capture_default_str();
  add_config_flag(gen_cmd, config_sink);

  TrainArgs tr;
  auto *train_cmd = app.add_subcommand("train", "train the restoration model");
  train_cmd->add_option("--data", tr.data_dir, "dataset directory (with manifest.json)")
      ->required();
  train_cmd->add_option("--out", tr.out_dir, "output directory")->required();
  train_cmd->add_option("--epochs", tr.epochs, "training epochs")->capture_default_str();
  train_cmd->add_option("--batch", tr.batch, "batch size")->capture_default_str();
  train_cmd->add_option("--lr", tr.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--alpha", tr.alpha, "MS-SSIM weight in the loss")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.seed, "rng seed")->capture_default_str();
  train_cmd->add_option("--depth", tr.depth, "downsampling stages")->capture_default_str();
  train_cmd->add_option("--base", tr.base, "stage-1 feature maps")->capture_default_str();
  train_cmd->add_option("--checkpoint-every", tr.checkpoint_every,
                        "epochs between checkpoints (0 = off)")
      ->capture_default_str();
  train_cmd->add_option("--resume", tr.resume,
                        "checkpoint prefix to resume from (expects .udae and .adam)");
  train_cmd->add_option("--start-epoch", tr.start_epoch, "first epoch index when resuming")
      ->capture_default_str();
  add_config_flag(train_cmd, config_sink);

  RestoreArgs rs;
  auto *restore_cmd = app.add_subcommand("restore", "restore every PNG in a directory");
  restore_cmd->add_option("--model", rs.model, "checkpoint file")->required();
  restore_cmd->add_option("--in", rs.in_dir, "input directory")->required();
  restore_cmd->add_option("--out", rs.out_dir, "output directory")->required();
  add_config_flag(restore_cmd, config_sink);

  EvaluateArgs ev;
  auto *eval_cmd = app.add_subcommand("evaluate", "score a model on a paired test split");
  eval_cmd->add_option("--model", ev.model, "checkpoint file")->required();
  eval_cmd->add_option("--data", ev.data_dir, "dataset directory")->required();
  eval_cmd->add_option("--split", ev.split, "train|val|test")->capture_default_str();
  eval_cmd->add_option("--out", ev.out_prefix, "report path prefix (.csv/.json appended)");
  eval_cmd->add_option("--alpha", ev.alpha, "alpha for the ms_ssim_l1 column")
      ->capture_default_str();
  add_config_flag(eval_cmd, config_sink);

  BenchArgs be;
  auto *bench_cmd = app.add_subcommand("bench", "measure forward-pass throughput");
  bench_cmd->add_option("--model", be.model, "checkpoint file (omit to time a fresh model)");
  bench_cmd->add_option("--depth", be.depth, "depth when no checkpoint given")
      ->capture_default_str();
  bench_cmd->add_option("--base", be.base, "base channels when no checkpoint given")
      ->capture_default_str();
  bench_cmd->add_option("--size", be.size, "square image size")->capture_default_str();
  bench_cmd->add_option("--images", be.images, "distinct images per run")
      ->capture_default_str();
  bench_cmd->add_option("--warmup", be.warmup, "untimed warmup forwards")
      ->capture_default_str();
  bench_cmd->add_option("--repeat", be.repeat, "timed passes over the image set (>= 3)")
      ->capture_default_str();
  bench_cmd->add_option("--seed", be.seed, "rng seed")->capture_default_str();
  bench_cmd->add_option("--hardware", be.hardware, "hardware description for the report");
  bench_cmd->add_option("--out", be.out, "JSON output path");
  add_config_flag(bench_cmd, config_sink);

  GradcheckArgs gc;
  auto *grad_cmd = app.add_subcommand("gradcheck", "finite-difference check of the full model");
  grad_cmd->add_option("--depth", gc.depth, "downsampling stages")->capture_default_str();
  grad_cmd->add_option("--base", gc.base, "stage-1 feature maps")->capture_default_str();
  grad_cmd->add_option("--size", gc.size, "square input size")->capture_default_str();
  grad_cmd->add_option("--seed", gc.seed, "rng seed")->capture_default_str();
  grad_cmd->add_option("--step", gc.h, "finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tolerance", gc.tolerance, "pass threshold")->capture_default_str();
  add_config_flag(grad_cmd, config_sink);

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    args = merge_json_config(std::move(args));
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  std::vector<const char *> cargs;
  cargs.push_back(argv[0]);
  for (const auto &a : args)
    cargs.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError &e) {
    return app.exit(e);
  }

  try {
    if (gen_cmd->parsed())
      return run_gen_data(gen);
    if (train_cmd->parsed())
      return run_train(tr);
    if (restore_cmd->parsed())
      return run_restore(rs);
    if (eval_cmd->parsed())
      return run_evaluate(ev);
    if (bench_cmd->parsed())
      return run_bench(be);
    if (grad_cmd->parsed())
      return run_gradcheck(gc);
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
