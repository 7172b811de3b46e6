#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "dancegen/adam.hpp"
#include "dancegen/checkpoint.hpp"
#include "dancegen/curriculum.hpp"
#include "dancegen/datapipe.hpp"
#include "dancegen/decoder.hpp"
#include "dancegen/encoder.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/model.hpp"
#include "dancegen/textio.hpp"

// Training loop: per epoch, derive the curriculum p, build feed masks, run
// scheduled rollouts sequence by sequence, take the batch-mean l1 loss and
// apply Adam with optional global-norm gradient clipping. All randomness is
// derived statelessly from (seed, epoch, clip id), which makes interrupted
// runs resume bit-exactly from a checkpoint.

namespace dancegen {

// Mean over sequences of the summed absolute error over frames and
// coordinates.
inline Tensor l1_loss(const std::vector<Tensor>& predicted, const std::vector<Matrix>& target) {
  if (predicted.empty() || predicted.size() != target.size())
    throw ShapeError("l1_loss: need matching non-empty batches, got " +
                     std::to_string(predicted.size()) + " and " + std::to_string(target.size()));
  Tensor total;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i].rows() != target[i].rows || predicted[i].cols() != target[i].cols)
      throw ShapeError("l1_loss: sequence " + std::to_string(i) + " shape mismatch");
    Tensor term = abs_sum(sub(predicted[i], Tensor::from_matrix(target[i])));
    total = total.defined() ? add(total, term) : term;
  }
  return scale(total, 1.0 / static_cast<double>(predicted.size()));
}

struct TrainConfig {
  int epochs = 200;
  int batch = 8;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  CurriculumSchedule schedule;
  EncoderConfig encoder;
  DecoderConfig decoder;
  double clip_norm = 5.0;  // global gradient norm; <= 0 disables clipping
  bool detach_fed = false;
  int checkpoint_interval = 0;   // epochs between checkpoints; 0 = final only
  std::string checkpoint_dir;    // empty = do not write checkpoints

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch < 1) throw ConfigError("train: batch must be >= 1");
    if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
    schedule.validate();
    encoder.validate();
    decoder.validate();
  }
};

struct EpochRecord {
  std::int64_t epoch = 0;
  std::int64_t p = 0;
  double loss = 0.0;           // mean per-sequence l1
  double loss_per_elem = 0.0;  // loss / (frames * d_y), scale-free
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> records;

  std::string to_csv() const {
    std::string csv = "epoch,p,loss,loss_per_elem,seconds\n";
    for (const auto& r : records)
      csv += std::to_string(r.epoch) + "," + std::to_string(r.p) + "," + format_g17(r.loss) +
             "," + format_g17(r.loss_per_elem) + "," + format_g17(r.seconds) + "\n";
    return csv;
  }

  // Count of `window`-epoch spans whose endpoint moving average rose; a
  // soft diagnostic, not a hard invariant.
  int smoothed_increase_count(int window = 50) const {
    if (static_cast<int>(records.size()) < 2 * window) return 0;
    std::vector<double> avg;
    for (std::size_t i = 0; i + window <= records.size(); ++i) {
      double s = 0.0;
      for (int j = 0; j < window; ++j) s += records[i + j].loss;
      avg.push_back(s / window);
    }
    int rises = 0;
    for (std::size_t i = 0; i + window < avg.size(); ++i)
      if (avg[i + window] > avg[i]) ++rises;
    return rises;
  }
};

struct TrainResult {
  Model model;
  AdamState adam;
  TrainLog log;
};

// Normalized training view of a dataset clip.
namespace detail {

struct TrainItem {
  const DatasetClip* clip = nullptr;
  std::size_t clip_id = 0;  // index in the dataset, stable across shuffles
  Matrix pose_norm;
  Tensor music;  // cached constant tensor
};

}  // namespace detail

inline TrainResult train(const DanceDataset& dataset, const TrainConfig& cfg,
                         const std::string& resume_dir = "") {
  cfg.validate();
  dataset.validate();
  if (cfg.encoder.d_x != layout_width(dataset.layout))
    throw ConfigError("train: encoder d_x " + std::to_string(cfg.encoder.d_x) +
                      " does not match dataset feature width " +
                      std::to_string(layout_width(dataset.layout)));

  std::vector<detail::TrainItem> items;
  std::vector<const PoseSequence*> train_poses;
  std::vector<PoseSequence> cleaned;
  cleaned.reserve(dataset.clips.size());
  for (std::size_t i = 0; i < dataset.clips.size(); ++i) {
    if (dataset.clips[i].split != "train") continue;
    cleaned.push_back(interpolate_missing(dataset.clips[i].pose));
    detail::TrainItem item;
    item.clip = &dataset.clips[i];
    item.clip_id = i;
    items.push_back(std::move(item));
  }
  if (items.empty()) throw Error("train: dataset has no clips with split \"train\"");
  for (const auto& seq : cleaned) train_poses.push_back(&seq);

  TrainResult result;
  std::int64_t start_epoch = 0;
  if (!resume_dir.empty()) {
    LoadedModel loaded = load_model_checkpoint(resume_dir);
    if (!loaded.adam) throw IoError("resume checkpoint lacks optimizer state");
    result.model = std::move(loaded.model);
    result.adam = std::move(*loaded.adam);
    start_epoch = loaded.epoch;
  } else {
    result.model = Model::init(cfg.encoder, cfg.decoder, cfg.seed);
    result.model.fps = dataset.fps;
    result.model.norm = PoseNormalizer::fit(train_poses);
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    result.adam = AdamState::init(result.model.params(), adam_cfg);
  }
  Model& model = result.model;
  ParamSet params = model.params();

  // normalized targets, cached constant music tensors, and the mean pose (BOP)
  double bop_frames = 0.0;
  std::vector<double> bop_acc(cfg.decoder.d_y, 0.0);
  for (std::size_t k = 0; k < items.size(); ++k) {
    items[k].pose_norm = model.norm.apply(cleaned[k].frames);
    if (items[k].pose_norm.cols != cfg.decoder.d_y)
      throw ConfigError("train: decoder d_y " + std::to_string(cfg.decoder.d_y) +
                        " does not match pose width " + std::to_string(items[k].pose_norm.cols));
    items[k].music = Tensor::from_matrix(items[k].clip->music.frames);
    for (int t = 0; t < items[k].pose_norm.rows; ++t)
      for (int c = 0; c < cfg.decoder.d_y; ++c) bop_acc[c] += items[k].pose_norm.at(t, c);
    bop_frames += items[k].pose_norm.rows;
  }
  if (start_epoch == 0) {
    for (int c = 0; c < cfg.decoder.d_y; ++c) bop_acc[c] /= bop_frames;
    model.bop = bop_acc;
  }

  // batches hold sequences of equal length; group indices by length
  std::map<int, std::vector<std::size_t>> by_length;
  for (std::size_t k = 0; k < items.size(); ++k)
    by_length[items[k].pose_norm.rows].push_back(k);

  const auto t_start = std::chrono::steady_clock::now();
  double elapsed_before = 0.0;
  for (std::int64_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const std::int64_t p_raw = p_of_epoch(cfg.schedule, epoch);
    double epoch_loss_sum = 0.0;
    std::size_t epoch_sequences = 0;
    double epoch_elems = 0.0;

    for (auto& [length, group] : by_length) {
      const std::int64_t p_eff = std::min<std::int64_t>(p_raw, length);
      const auto mask = build_feed_mask(length, p_eff, cfg.schedule.q);

      std::vector<std::size_t> order = group;
      Rng shuffle_rng(derive_seed(cfg.seed, 0xba7c4, static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(length)));
      for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.below(i)]);

      for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch);
        params.zero_grad();
        std::vector<Tensor> outputs;
        std::vector<Matrix> targets;
        for (std::size_t b = start; b < stop; ++b) {
          auto& item = items[order[b]];
          Tensor z = encode(item.music, model.encoder, model.encoder_cfg);
          auto rollout = scheduled_rollout(
              z, item.pose_norm, model.bop, model.decoder, model.decoder_cfg, mask,
              derive_seed(cfg.seed, 0x40110, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(item.clip_id)),
              cfg.detach_fed);
          outputs.push_back(rollout.outputs);
          targets.push_back(item.pose_norm);
        }
        Tensor loss = l1_loss(outputs, targets);
        const double loss_value = loss.scalar_value();
        if (!std::isfinite(loss_value))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch starting at sequence " + std::to_string(start));
        backward(loss);
        if (cfg.clip_norm > 0.0) params.clip_grad_norm(cfg.clip_norm);
        adam_step(params, result.adam);
        epoch_loss_sum += loss_value * static_cast<double>(stop - start);
        epoch_sequences += stop - start;
        epoch_elems += static_cast<double>(stop - start) * length * cfg.decoder.d_y;
      }
    }

    EpochRecord record;
    record.epoch = epoch;
    record.p = p_raw;
    record.loss = epoch_loss_sum / static_cast<double>(epoch_sequences);
    record.loss_per_elem = epoch_loss_sum / epoch_elems;
    const double elapsed_total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    record.seconds = elapsed_total - elapsed_before;
    elapsed_before = elapsed_total;
    result.log.records.push_back(record);

    if (!cfg.checkpoint_dir.empty()) {
      const bool at_interval =
          cfg.checkpoint_interval > 0 && (epoch + 1) % cfg.checkpoint_interval == 0;
      const bool last = epoch + 1 == cfg.epochs;
      if (at_interval || last)
        save_model_checkpoint(cfg.checkpoint_dir, model, &result.adam, epoch + 1);
    }
  }
  return result;
}

}  // namespace dancegen
