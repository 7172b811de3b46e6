#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dancegen/curriculum.hpp"
#include "dancegen/decoder.hpp"
#include "dancegen/encoder.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/metrics.hpp"
#include "dancegen/training.hpp"

#include "json.hpp"

// Run configuration: one JSON document with data/encoder/decoder/curriculum/
// train/metrics sections. Unknown keys are rejected. Defaults reproduce the
// reference hyperparameters (N=2 layers, l=8 heads, d_k=d_v=64, k=100,
// d_x=438, d_z=256, 3-layer LSTM with d_s=1024, d_y=50, lambda=0.01, q=10,
// Adam at 1e-4).

namespace dancegen {

struct DataConfig {
  int styles = 3;
  int clips_per_style = 10;
  int frames = 900;
  double fps = 15.0;
  std::uint64_t seed = 1;
  double train_fraction = 0.9;
};

struct TrainSection {
  int epochs = 200;
  int batch = 8;
  double lr = 1e-4;
  std::uint64_t seed = 1;
  double clip_norm = 5.0;
  int checkpoint_interval = 0;
};

struct MetricsConfig {
  double dt = 1.0 / 15.0;     // beat matching tolerance, seconds
  int window = 5;             // SD window (frames) for kinematic beat detection
  double prominence = 0.1;    // fraction of the SD curve's range
  int num_pairs = 500;        // sampled pairs for the diversity metric
  double fid_window_s = 4.0;  // FID-over-time window, seconds
  int classifier_embed = 64;
  int classifier_hidden = 128;
  int classifier_epochs = 300;
  double classifier_lr = 1e-2;
  int multimodal_clips = 60;   // music clips used for multimodality
  int multimodal_samples = 5;  // generations per clip
  std::uint64_t seed = 1;
};

struct RunConfig {
  DataConfig data;
  EncoderConfig encoder;
  DecoderConfig decoder;
  CurriculumSchedule curriculum;
  TrainSection train;
  MetricsConfig metrics;

  TrainConfig train_config() const {
    TrainConfig cfg;
    cfg.epochs = train.epochs;
    cfg.batch = train.batch;
    cfg.lr = train.lr;
    cfg.seed = train.seed;
    cfg.schedule = curriculum;
    cfg.encoder = encoder;
    cfg.decoder = decoder;
    cfg.clip_norm = train.clip_norm;
    cfg.checkpoint_interval = train.checkpoint_interval;
    return cfg;
  }

  ClassifierConfig classifier_config() const {
    ClassifierConfig cfg;
    cfg.embed_dim = metrics.classifier_embed;
    cfg.hidden_dim = metrics.classifier_hidden;
    cfg.epochs = metrics.classifier_epochs;
    cfg.lr = metrics.classifier_lr;
    cfg.n_styles = 3;
    return cfg;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, const std::string& section,
                                const std::vector<std::string>& known) {
  for (const auto& [key, _] : obj.items()) {
    bool ok = false;
    for (const auto& k : known)
      if (k == key) {
        ok = true;
        break;
      }
    if (!ok)
      throw ConfigError("unknown config key '" + (section.empty() ? key : section + "." + key) +
                        "'");
  }
}

template <typename T>
void maybe(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(j, "",
                              {"data", "encoder", "decoder", "curriculum", "train", "metrics"});
  RunConfig cfg;

  if (j.contains("data")) {
    const auto& d = j.at("data");
    detail::reject_unknown_keys(
        d, "data", {"styles", "clips_per_style", "frames", "fps", "seed", "train_fraction"});
    detail::maybe(d, "styles", cfg.data.styles);
    detail::maybe(d, "clips_per_style", cfg.data.clips_per_style);
    detail::maybe(d, "frames", cfg.data.frames);
    detail::maybe(d, "fps", cfg.data.fps);
    detail::maybe(d, "seed", cfg.data.seed);
    detail::maybe(d, "train_fraction", cfg.data.train_fraction);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    detail::reject_unknown_keys(
        e, "encoder",
        {"N", "l", "d_k", "d_v", "k", "d_x", "d_z", "ffn_hidden", "positional", "layer_norm"});
    detail::maybe(e, "N", cfg.encoder.n_layers);
    detail::maybe(e, "l", cfg.encoder.n_heads);
    detail::maybe(e, "d_k", cfg.encoder.d_k);
    detail::maybe(e, "d_v", cfg.encoder.d_v);
    detail::maybe(e, "k", cfg.encoder.window);
    detail::maybe(e, "d_x", cfg.encoder.d_x);
    detail::maybe(e, "d_z", cfg.encoder.d_z);
    detail::maybe(e, "ffn_hidden", cfg.encoder.ffn_hidden);
    detail::maybe(e, "positional", cfg.encoder.positional);
    detail::maybe(e, "layer_norm", cfg.encoder.layer_norm);
  }
  if (j.contains("decoder")) {
    const auto& d = j.at("decoder");
    detail::reject_unknown_keys(d, "decoder", {"layers", "d_s", "d_y"});
    detail::maybe(d, "layers", cfg.decoder.n_layers);
    detail::maybe(d, "d_s", cfg.decoder.d_s);
    detail::maybe(d, "d_y", cfg.decoder.d_y);
  }
  if (j.contains("curriculum")) {
    const auto& c = j.at("curriculum");
    detail::reject_unknown_keys(c, "curriculum", {"kind", "lambda", "q", "const_p"});
    if (c.contains("kind")) cfg.curriculum.kind = growth_kind_from_string(c.at("kind").get<std::string>());
    detail::maybe(c, "lambda", cfg.curriculum.lambda);
    detail::maybe(c, "q", cfg.curriculum.q);
    detail::maybe(c, "const_p", cfg.curriculum.const_p);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    detail::reject_unknown_keys(
        t, "train", {"epochs", "batch", "lr", "seed", "clip_norm", "checkpoint_interval"});
    detail::maybe(t, "epochs", cfg.train.epochs);
    detail::maybe(t, "batch", cfg.train.batch);
    detail::maybe(t, "lr", cfg.train.lr);
    detail::maybe(t, "seed", cfg.train.seed);
    detail::maybe(t, "clip_norm", cfg.train.clip_norm);
    detail::maybe(t, "checkpoint_interval", cfg.train.checkpoint_interval);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    detail::reject_unknown_keys(m, "metrics",
                                {"dt", "window", "prominence", "num_pairs", "fid_window_s",
                                 "classifier_embed", "classifier_hidden", "classifier_epochs",
                                 "classifier_lr", "multimodal_clips", "multimodal_samples",
                                 "seed"});
    detail::maybe(m, "dt", cfg.metrics.dt);
    detail::maybe(m, "window", cfg.metrics.window);
    detail::maybe(m, "prominence", cfg.metrics.prominence);
    detail::maybe(m, "num_pairs", cfg.metrics.num_pairs);
    detail::maybe(m, "fid_window_s", cfg.metrics.fid_window_s);
    detail::maybe(m, "classifier_embed", cfg.metrics.classifier_embed);
    detail::maybe(m, "classifier_hidden", cfg.metrics.classifier_hidden);
    detail::maybe(m, "classifier_epochs", cfg.metrics.classifier_epochs);
    detail::maybe(m, "classifier_lr", cfg.metrics.classifier_lr);
    detail::maybe(m, "multimodal_clips", cfg.metrics.multimodal_clips);
    detail::maybe(m, "multimodal_samples", cfg.metrics.multimodal_samples);
    detail::maybe(m, "seed", cfg.metrics.seed);
  }

  // the decoder consumes the encoder's latent width
  cfg.decoder.d_z = cfg.encoder.d_z;
  return cfg;
}

inline nlohmann::json to_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["data"] = {{"styles", cfg.data.styles},
               {"clips_per_style", cfg.data.clips_per_style},
               {"frames", cfg.data.frames},
               {"fps", cfg.data.fps},
               {"seed", cfg.data.seed},
               {"train_fraction", cfg.data.train_fraction}};
  j["encoder"] = {{"N", cfg.encoder.n_layers},
                  {"l", cfg.encoder.n_heads},
                  {"d_k", cfg.encoder.d_k},
                  {"d_v", cfg.encoder.d_v},
                  {"k", cfg.encoder.window},
                  {"d_x", cfg.encoder.d_x},
                  {"d_z", cfg.encoder.d_z},
                  {"ffn_hidden", cfg.encoder.ffn_hidden},
                  {"positional", cfg.encoder.positional},
                  {"layer_norm", cfg.encoder.layer_norm}};
  j["decoder"] = {{"layers", cfg.decoder.n_layers}, {"d_s", cfg.decoder.d_s}, {"d_y", cfg.decoder.d_y}};
  j["curriculum"] = {{"kind", to_string(cfg.curriculum.kind)},
                     {"lambda", cfg.curriculum.lambda},
                     {"q", cfg.curriculum.q},
                     {"const_p", cfg.curriculum.const_p}};
  j["train"] = {{"epochs", cfg.train.epochs},
                {"batch", cfg.train.batch},
                {"lr", cfg.train.lr},
                {"seed", cfg.train.seed},
                {"clip_norm", cfg.train.clip_norm},
                {"checkpoint_interval", cfg.train.checkpoint_interval}};
  j["metrics"] = {{"dt", cfg.metrics.dt},
                  {"window", cfg.metrics.window},
                  {"prominence", cfg.metrics.prominence},
                  {"num_pairs", cfg.metrics.num_pairs},
                  {"fid_window_s", cfg.metrics.fid_window_s},
                  {"classifier_embed", cfg.metrics.classifier_embed},
                  {"classifier_hidden", cfg.metrics.classifier_hidden},
                  {"classifier_epochs", cfg.metrics.classifier_epochs},
                  {"classifier_lr", cfg.metrics.classifier_lr},
                  {"multimodal_clips", cfg.metrics.multimodal_clips},
                  {"multimodal_samples", cfg.metrics.multimodal_samples},
                  {"seed", cfg.metrics.seed}};
  return j;
}

// "--set section.key=value" override applied to the JSON document before
// parsing; the value is parsed as JSON when possible, else kept as a string.
inline void apply_override(nlohmann::json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string value_text = assignment.substr(eq + 1);
  const auto dot = path.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 >= path.size())
    throw ConfigError("override path '" + path + "' is not of the form section.key");
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(value_text);
  } catch (const nlohmann::json::parse_error&) {
    value = value_text;
  }
  doc[path.substr(0, dot)][path.substr(dot + 1)] = value;
}

}  // namespace dancegen
