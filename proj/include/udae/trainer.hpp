#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "udae/adam.hpp"
#include "udae/dataset.hpp"
#include "udae/metrics.hpp"
#include "udae/unet.hpp"

namespace udae {

struct TrainConfig {
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 4;
  int epochs = 1;
  double alpha = 0.80;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;             // epochs between checkpoints, 0 disables
  std::filesystem::path checkpoint_dir; // required when checkpoint_every > 0
  std::int64_t image_size = 0;          // 0 = accept whatever the dataset holds

  void validate() const {
    if (!(learning_rate > 0.0))
      throw std::invalid_argument("TrainConfig: learning_rate must be > 0");
    if (batch_size < 1)
      throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (epochs < 0)
      throw std::invalid_argument("TrainConfig: epochs must be >= 0");
    if (!(alpha >= 0.0 && alpha <= 1.0))
      throw std::invalid_argument("TrainConfig: alpha must be in [0,1]");
  }
};

struct LossRecord {
  int epoch = 0;
  std::int64_t step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  bool has_val = false;
};

namespace trainer_detail {

inline std::string fmt_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, res.ptr);
}

} // namespace trainer_detail

struct LossHistory {
  std::vector<LossRecord> records;

  void save_csv(const std::filesystem::path &path) const {
    if (path.has_parent_path())
      std::filesystem::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f)
      throw std::runtime_error("LossHistory::save_csv: cannot write " + path.string());
    f << "epoch,step,train_loss,val_loss\n";
    for (const auto &r : records) {
      f << r.epoch << "," << r.step << "," << trainer_detail::fmt_double(r.train_loss) << ",";
      if (r.has_val)
        f << trainer_detail::fmt_double(r.val_loss);
      f << "\n";
    }
  }
};

struct TrainResult {
  ModelWeights weights;
  LossHistory history;
  AdamState adam;
};

namespace trainer_detail {

inline Tensor stack_batch(const std::vector<ImagePair> &pairs,
                          const std::vector<std::size_t> &order, std::size_t begin,
                          std::size_t end, bool distorted) {
  const Tensor &first = distorted ? pairs[order[begin]].distorted : pairs[order[begin]].clean;
  Tensor batch(static_cast<std::int64_t>(end - begin), first.channels(), first.height(),
               first.width());
  const std::int64_t per = first.size();
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor &src = distorted ? pairs[order[i]].distorted : pairs[order[i]].clean;
    if (src.shape() != first.shape())
      throw std::invalid_argument("train: inconsistent image shapes in batch (" +
                                  src.shape().str() + " vs " + first.shape().str() + ")");
    std::copy(src.data(), src.data() + per,
              batch.data() + static_cast<std::int64_t>(i - begin) * per);
  }
  return batch;
}

inline double validation_loss(const ModelWeights &model, const std::vector<ImagePair> &val,
                              const LossConfig &loss_cfg) {
  if (val.empty())
    return 0.0;
  double total = 0.0;
  for (const auto &p : val) {
    Tensor out = forward(model, p.distorted);
    total += composite_loss(out, p.clean, loss_cfg).value;
  }
  return total / static_cast<double>(val.size());
}

inline std::string layer_norms(const ModelWeights &model) {
  std::string s;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    double acc = 0.0;
    const auto &w = model.layers[i].weights;
    for (std::int64_t k = 0; k < w.size(); ++k)
      acc += static_cast<double>(w.data()[k]) * static_cast<double>(w.data()[k]);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s%zu:%.4g", i ? " " : "", i, std::sqrt(acc));
    s += buf;
  }
  return s;
}

} // namespace trainer_detail

// Minimizes the composite loss over (distorted -> clean) pairs with Adam.
// Deterministic for a fixed seed: the epoch data order is a pure function of
// (seed, epoch), so a run resumed from a checkpoint at epoch k replays the
// same batches the uninterrupted run saw.
inline TrainResult train(const ModelWeights &initial, const std::vector<ImagePair> &train_set,
                         const std::vector<ImagePair> &val_set, const TrainConfig &cfg,
                         int start_epoch = 0, const AdamState *resume_adam = nullptr) {
  cfg.validate();
  if (train_set.empty())
    throw std::invalid_argument("train: empty training set");
  if (cfg.image_size > 0)
    for (const auto &p : train_set)
      if (p.clean.height() != cfg.image_size || p.clean.width() != cfg.image_size)
        throw std::invalid_argument("train: pair " + p.id + " is " + p.clean.shape().str() +
                                    ", expected size " + std::to_string(cfg.image_size));

  TrainResult result;
  result.weights = initial;
  result.adam = resume_adam ? *resume_adam : make_adam_state(initial);
  const AdamConfig adam_cfg{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  const LossConfig loss_cfg{cfg.alpha};

  const std::size_t n = train_set.size();
  const std::int64_t steps_per_epoch =
      static_cast<std::int64_t>((n + static_cast<std::size_t>(cfg.batch_size) - 1) /
                                static_cast<std::size_t>(cfg.batch_size));
  std::int64_t step = static_cast<std::int64_t>(start_epoch) * steps_per_epoch;

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto epoch_rng = make_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle_indices(order.begin(), order.end(), epoch_rng);

    double epoch_loss = 0.0;
    std::int64_t epoch_steps = 0;
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(cfg.batch_size));
      Tensor input = trainer_detail::stack_batch(train_set, order, begin, end, true);
      Tensor target = trainer_detail::stack_batch(train_set, order, begin, end, false);

      Tape tape;
      const int out_id = forward(result.weights, input, tape);
      Tensor grad_out;
      const CompositeResult loss =
          composite_loss(tape.value(out_id), target, loss_cfg, {}, &grad_out);
      if (!std::isfinite(loss.value))
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 "; layer weight norms: " +
                                 trainer_detail::layer_norms(result.weights));
      auto grads = backward(result.weights, tape, out_id, grad_out);
      adam_step(result.weights, grads, result.adam, adam_cfg);

      result.history.records.push_back({epoch, step, loss.value, 0.0, false});
      epoch_loss += loss.value;
      ++epoch_steps;
      ++step;
    }

    const double mean_train = epoch_steps ? epoch_loss / static_cast<double>(epoch_steps) : 0.0;
    const double val = trainer_detail::validation_loss(result.weights, val_set, loss_cfg);
    result.history.records.push_back({epoch, step, mean_train, val, !val_set.empty()});

    if (cfg.checkpoint_every > 0 && ((epoch + 1) % cfg.checkpoint_every == 0)) {
      char name[64];
      std::snprintf(name, sizeof(name), "epoch_%04d", epoch + 1);
      save_weights(result.weights, cfg.checkpoint_dir / (std::string(name) + ".udae"));
      save_adam_state(result.adam, cfg.checkpoint_dir / (std::string(name) + ".adam"));
    }
  }
  return result;
}

} // namespace udae
