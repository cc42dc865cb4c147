#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "udae/dataset.hpp"
#include "udae/image_io.hpp"
#include "udae/metrics.hpp"
#include "udae/unet.hpp"

namespace udae {

using RestoreFn = std::function<Tensor(const Tensor &)>;

struct MetricRow {
  std::string id;
  double mse = 0.0;
  double ssim = 0.0;
  double ms_ssim_l1 = 0.0;
};

// Per-image and aggregate scores for a paired test set, plus optional
// wall-clock stats. The ms_ssim_l1 column uses the same alpha as the
// training loss; `notes` records that assumption.
struct MetricsReport {
  std::vector<MetricRow> rows;
  double mean_mse = 0.0;
  double mean_ssim = 0.0;
  double mean_ms_ssim_l1 = 0.0;
  std::int64_t count = 0;
  std::vector<std::string> skipped;
  std::string checkpoint_id;
  std::int64_t image_size = 0;
  double alpha = 0.80;
  int ms_ssim_scales = 0;
  std::string notes;
  double mean_seconds_per_image = 0.0; // 0 when timing was not collected
  double fps = 0.0;

  void recompute_aggregates() {
    mean_mse = mean_ssim = mean_ms_ssim_l1 = 0.0;
    for (const auto &r : rows) {
      mean_mse += r.mse;
      mean_ssim += r.ssim;
      mean_ms_ssim_l1 += r.ms_ssim_l1;
    }
    count = static_cast<std::int64_t>(rows.size());
    if (count > 0) {
      mean_mse /= static_cast<double>(count);
      mean_ssim /= static_cast<double>(count);
      mean_ms_ssim_l1 /= static_cast<double>(count);
    }
  }

  // Timing is excluded by default so reports from seeded runs stay
  // byte-identical; pass include_timing for bench-style output.
  nlohmann::ordered_json to_json(bool include_timing = false) const {
    nlohmann::ordered_json j;
    j["checkpoint_id"] = checkpoint_id;
    j["image_size"] = image_size;
    j["count"] = count;
    j["alpha"] = alpha;
    j["ms_ssim_scales"] = ms_ssim_scales;
    j["notes"] = notes;
    j["aggregate"] = {{"mse", mean_mse}, {"ssim", mean_ssim}, {"ms_ssim_l1", mean_ms_ssim_l1}};
    j["rows"] = nlohmann::ordered_json::array();
    for (const auto &r : rows)
      j["rows"].push_back({{"id", r.id},
                           {"mse", r.mse},
                           {"ssim", r.ssim},
                           {"ms_ssim_l1", r.ms_ssim_l1}});
    j["skipped"] = skipped;
    if (include_timing) {
      j["mean_seconds_per_image"] = mean_seconds_per_image;
      j["fps"] = fps;
    }
    return j;
  }

  void save_json(const std::filesystem::path &path, bool include_timing = false) const {
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f)
      throw std::runtime_error("MetricsReport::save_json: cannot write " + path.string());
    f << to_json(include_timing).dump(2) << "\n";
  }

  void save_csv(const std::filesystem::path &path) const {
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f)
      throw std::runtime_error("MetricsReport::save_csv: cannot write " + path.string());
    auto fmt = [](double v) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.9g", v);
      return std::string(buf);
    };
    f << "id,mse,ssim,ms_ssim_l1\n";
    for (const auto &r : rows)
      f << r.id << "," << fmt(r.mse) << "," << fmt(r.ssim) << "," << fmt(r.ms_ssim_l1) << "\n";
    f << "aggregate," << fmt(mean_mse) << "," << fmt(mean_ssim) << ","
      << fmt(mean_ms_ssim_l1) << "\n";
  }
};

// Restores every distorted image and scores it against its clean partner.
// Pairs the restorer rejects are recorded under `skipped`.
inline MetricsReport evaluate(const RestoreFn &restore, const std::vector<ImagePair> &pairs,
                              const LossConfig &loss_cfg = {}, const SsimParams &params = {}) {
  if (pairs.empty())
    throw std::invalid_argument("evaluate: empty test set");
  MetricsReport report;
  report.alpha = loss_cfg.alpha;
  report.notes = "ms_ssim_l1 column uses the training-loss alpha";
  report.image_size = pairs.front().clean.height();
  double total_seconds = 0.0;
  std::int64_t timed = 0;
  for (const auto &p : pairs) {
    try {
      const auto t0 = std::chrono::steady_clock::now();
      Tensor restored = restore(p.distorted);
      const auto t1 = std::chrono::steady_clock::now();
      MetricRow row;
      row.id = p.id;
      row.mse = mse(restored, p.clean);
      row.ssim = ssim(restored, p.clean, params);
      const CompositeResult comp = composite_loss(restored, p.clean, loss_cfg, params);
      row.ms_ssim_l1 = comp.value;
      report.ms_ssim_scales = comp.scales_used;
      report.rows.push_back(std::move(row));
      total_seconds += std::chrono::duration<double>(t1 - t0).count();
      ++timed;
    } catch (const std::exception &e) {
      report.skipped.push_back(p.id + ": " + e.what());
    }
  }
  report.recompute_aggregates();
  if (timed > 0) {
    report.mean_seconds_per_image = total_seconds / static_cast<double>(timed);
    report.fps = report.mean_seconds_per_image > 0.0 ? 1.0 / report.mean_seconds_per_image : 0.0;
  }
  return report;
}

struct ThroughputStats {
  std::int64_t image_count = 0;
  int warmup = 0;
  int repeat = 0;
  double mean_seconds = 0.0;
  double median_seconds = 0.0;
  double fps = 0.0;
  double run_mean_cv = 0.0; // coefficient of variation of per-run mean times
  std::vector<double> per_run_mean_seconds;
  std::string hardware;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["image_count"] = image_count;
    j["warmup"] = warmup;
    j["repeat"] = repeat;
    j["mean_seconds_per_image"] = mean_seconds;
    j["median_seconds_per_image"] = median_seconds;
    j["fps"] = fps;
    j["run_mean_cv"] = run_mean_cv;
    j["per_run_mean_seconds"] = per_run_mean_seconds;
    j["hardware"] = hardware;
    return j;
  }
};

// Forward-pass-only timing: decode and disk I/O stay outside the clock.
inline ThroughputStats bench_throughput(const RestoreFn &restore,
                                        const std::vector<Tensor> &images, int warmup_count,
                                        int repeat, const std::string &hardware = "") {
  if (images.empty())
    throw std::invalid_argument("bench_throughput: empty image list");
  if (repeat < 3)
    throw std::invalid_argument("bench_throughput: repeat must be >= 3");
  for (int i = 0; i < warmup_count; ++i)
    restore(images[static_cast<std::size_t>(i) % images.size()]);

  ThroughputStats stats;
  stats.image_count = static_cast<std::int64_t>(images.size());
  stats.warmup = warmup_count;
  stats.repeat = repeat;
  stats.hardware = hardware;
  std::vector<double> all_times;
  for (int r = 0; r < repeat; ++r) {
    double run_total = 0.0;
    for (const auto &img : images) {
      const auto t0 = std::chrono::steady_clock::now();
      restore(img);
      const auto t1 = std::chrono::steady_clock::now();
      const double dt = std::chrono::duration<double>(t1 - t0).count();
      all_times.push_back(dt);
      run_total += dt;
    }
    stats.per_run_mean_seconds.push_back(run_total / static_cast<double>(images.size()));
  }
  double total = 0.0;
  for (double t : all_times)
    total += t;
  stats.mean_seconds = total / static_cast<double>(all_times.size());
  std::sort(all_times.begin(), all_times.end());
  stats.median_seconds = all_times[all_times.size() / 2];
  stats.fps = stats.mean_seconds > 0.0 ? 1.0 / stats.mean_seconds : 0.0;

  double run_mean = 0.0;
  for (double t : stats.per_run_mean_seconds)
    run_mean += t;
  run_mean /= static_cast<double>(stats.per_run_mean_seconds.size());
  double var = 0.0;
  for (double t : stats.per_run_mean_seconds)
    var += (t - run_mean) * (t - run_mean);
  var /= static_cast<double>(stats.per_run_mean_seconds.size());
  stats.run_mean_cv = run_mean > 0.0 ? std::sqrt(var) / run_mean : 0.0;
  return stats;
}

// Reflect padding (edge not repeated) up to the next multiple of `multiple`,
// split evenly between the two sides.
inline Tensor pad_reflect_to_multiple(const Tensor &img, std::int64_t multiple,
                                      std::int64_t &pad_top, std::int64_t &pad_left) {
  const std::int64_t H = img.height(), W = img.width();
  const std::int64_t PH = (H + multiple - 1) / multiple * multiple;
  const std::int64_t PW = (W + multiple - 1) / multiple * multiple;
  pad_top = (PH - H) / 2;
  pad_left = (PW - W) / 2;
  if (PH == H && PW == W)
    return img;
  auto mirror = [](std::int64_t i, std::int64_t n) {
    // reflect without repeating the border sample
    if (n == 1)
      return std::int64_t{0};
    const std::int64_t period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };
  Tensor out(img.batch(), img.channels(), PH, PW);
  for (std::int64_t n = 0; n < img.batch(); ++n)
    for (std::int64_t c = 0; c < img.channels(); ++c) {
      const float *src = img.plane(n, c);
      float *dst = out.plane(n, c);
      for (std::int64_t y = 0; y < PH; ++y) {
        const std::int64_t sy = mirror(y - pad_top, H);
        for (std::int64_t x = 0; x < PW; ++x)
          dst[y * PW + x] = src[sy * W + mirror(x - pad_left, W)];
      }
    }
  return out;
}

inline Tensor crop(const Tensor &img, std::int64_t top, std::int64_t left, std::int64_t h,
                   std::int64_t w) {
  Tensor out(img.batch(), img.channels(), h, w);
  for (std::int64_t n = 0; n < img.batch(); ++n)
    for (std::int64_t c = 0; c < img.channels(); ++c) {
      const float *src = img.plane(n, c);
      float *dst = out.plane(n, c);
      for (std::int64_t y = 0; y < h; ++y)
        std::copy(src + (y + top) * img.width() + left,
                  src + (y + top) * img.width() + left + w, dst + y * w);
    }
  return out;
}

struct RestoreBatchResult {
  std::int64_t count = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::vector<std::string> skipped;

  nlohmann::ordered_json to_json() const {
    return nlohmann::ordered_json{
        {"inputs", inputs}, {"outputs", outputs}, {"skipped", skipped}};
  }
};

// Runs the model over every PNG in input_dir, handling non-divisible sizes
// by reflect-padding and cropping back. Writes restored PNGs plus an
// index.json of what happened.
inline RestoreBatchResult restore_batch(const ModelWeights &model,
                                        const std::filesystem::path &input_dir,
                                        const std::filesystem::path &output_dir) {
  RestoreBatchResult result;
  std::filesystem::create_directories(output_dir);
  const std::int64_t multiple = std::int64_t{1} << model.config.depth;
  for (const auto &path : list_pngs(input_dir)) {
    try {
      Tensor img = to_tensor(load_png(path));
      const std::int64_t H = img.height(), W = img.width();
      std::int64_t pad_top = 0, pad_left = 0;
      Tensor padded = pad_reflect_to_multiple(img, multiple, pad_top, pad_left);
      Tensor restored = forward(model, padded);
      if (restored.height() != H || restored.width() != W)
        restored = crop(restored, pad_top, pad_left, H, W);
      const auto out_path = output_dir / path.filename();
      save_png(from_tensor(restored), out_path);
      result.inputs.push_back(path.filename().string());
      result.outputs.push_back(out_path.filename().string());
      ++result.count;
    } catch (const std::exception &e) {
      result.skipped.push_back(path.filename().string() + ": " + e.what());
    }
  }
  std::ofstream f(output_dir / "index.json", std::ios::trunc);
  if (!f)
    throw std::runtime_error("restore_batch: cannot write index.json");
  f << result.to_json().dump(2) << "\n";
  return result;
}

} // namespace udae
