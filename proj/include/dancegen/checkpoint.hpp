#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dancegen/adam.hpp"
#include "dancegen/errors.hpp"
#include "dancegen/model.hpp"
#include "dancegen/params.hpp"
#include "dancegen/textio.hpp"

#include "json.hpp"

// Checkpoint format: a JSON manifest (manifest.json) listing parameter
// names, shapes and dtype, next to a raw blob (params.bin) holding each
// parameter's little-endian float64 values in manifest order, followed by
// the Adam first/second moments in the same order when optimizer state is
// saved. Round-trips are bit-exact.

namespace dancegen {

namespace detail {

inline void append_le_doubles(std::string& out, const std::vector<double>& values) {
  for (double x : values) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof(bits));
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
}

inline std::vector<double> read_le_doubles(const std::string& blob, std::size_t& offset,
                                           std::size_t count, const std::string& what) {
  if (offset + count * 8 > blob.size())
    throw IoError("checkpoint blob truncated while reading " + what + " (need " +
                  std::to_string(count * 8) + " bytes at offset " + std::to_string(offset) +
                  ", blob has " + std::to_string(blob.size()) + ")");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(blob[offset + 8 * i + b]))
              << (8 * b);
    std::memcpy(&out[i], &bits, sizeof(bits));
  }
  offset += count * 8;
  return out;
}

}  // namespace detail

struct Checkpoint {
  std::vector<std::pair<std::string, Tensor>> params;
  std::optional<AdamState> adam;
  std::int64_t epoch = 0;
  nlohmann::json meta;  // model section: configs, normalizer, bop, fps

  const Tensor& find(const std::string& name) const {
    for (const auto& [n, t] : params)
      if (n == name) return t;
    throw IoError("checkpoint has no parameter named '" + name + "'");
  }
};

inline void save_checkpoint(const std::string& dir, const ParamSet& params,
                            const AdamState* adam, std::int64_t epoch,
                            const nlohmann::json& meta) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["format"] = "dancegen-checkpoint-v1";
  manifest["epoch"] = epoch;
  manifest["blob"] = "params.bin";
  manifest["params"] = nlohmann::json::array();
  std::string blob;
  for (const auto& [name, t] : params.items()) {
    manifest["params"].push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "float64"}});
    detail::append_le_doubles(blob, t.values());
  }
  if (adam) {
    if (adam->m.size() != params.count())
      throw Error("save_checkpoint: optimizer state does not match parameter set");
    manifest["adam"] = {{"t", adam->t},
                        {"lr", adam->cfg.lr},
                        {"beta1", adam->cfg.beta1},
                        {"beta2", adam->cfg.beta2},
                        {"eps", adam->cfg.eps}};
    for (const auto& m : adam->m) detail::append_le_doubles(blob, m);
    for (const auto& v : adam->v) detail::append_le_doubles(blob, v);
  }
  if (!meta.is_null()) manifest["model"] = meta;

  write_text_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  std::ofstream out((fs::path(dir) / "params.bin").string(), std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint blob for writing in '" + dir + "'");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw IoError("checkpoint blob write failed in '" + dir + "'");
}

inline Checkpoint load_checkpoint(const std::string& dir) {
  namespace fs = std::filesystem;
  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(manifest_path + ": corrupt manifest: " + e.what());
  }
  if (manifest.value("format", "") != "dancegen-checkpoint-v1")
    throw IoError(manifest_path + ": unknown checkpoint format");

  Checkpoint ckpt;
  ckpt.epoch = manifest.at("epoch").get<std::int64_t>();
  if (manifest.contains("model")) ckpt.meta = manifest["model"];

  std::ifstream in((fs::path(dir) / manifest.at("blob").get<std::string>()).string(),
                   std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint blob in '" + dir + "'");
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t offset = 0;
  for (const auto& entry : manifest.at("params")) {
    const std::string name = entry.at("name").get<std::string>();
    if (entry.at("dtype").get<std::string>() != "float64")
      throw IoError("checkpoint parameter '" + name + "' has unsupported dtype");
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    auto values = detail::read_le_doubles(blob, offset, count, "parameter '" + name + "'");
    ckpt.params.emplace_back(name, Tensor::from(shape, std::move(values), /*requires_grad=*/true));
  }
  if (manifest.contains("adam")) {
    AdamConfig cfg;
    cfg.lr = manifest["adam"].at("lr").get<double>();
    cfg.beta1 = manifest["adam"].at("beta1").get<double>();
    cfg.beta2 = manifest["adam"].at("beta2").get<double>();
    cfg.eps = manifest["adam"].at("eps").get<double>();
    AdamState state;
    state.cfg = cfg;
    state.t = manifest["adam"].at("t").get<std::int64_t>();
    for (const auto& [name, t] : ckpt.params)
      state.m.push_back(detail::read_le_doubles(blob, offset, t.size(), "adam m of '" + name + "'"));
    for (const auto& [name, t] : ckpt.params)
      state.v.push_back(detail::read_le_doubles(blob, offset, t.size(), "adam v of '" + name + "'"));
    ckpt.adam = std::move(state);
  }
  if (offset != blob.size())
    throw IoError("checkpoint blob has " + std::to_string(blob.size() - offset) +
                  " trailing bytes");
  return ckpt;
}

// ---------------------------------------------------------------------------
// Model-level checkpoints
// ---------------------------------------------------------------------------

inline nlohmann::json model_meta(const Model& model) {
  nlohmann::json meta;
  meta["encoder"] = {{"N", model.encoder_cfg.n_layers},   {"l", model.encoder_cfg.n_heads},
                     {"d_x", model.encoder_cfg.d_x},      {"d_z", model.encoder_cfg.d_z},
                     {"d_k", model.encoder_cfg.d_k},      {"d_v", model.encoder_cfg.d_v},
                     {"k", model.encoder_cfg.window},     {"ffn_hidden", model.encoder_cfg.ffn_hidden},
                     {"layer_norm", model.encoder_cfg.layer_norm},
                     {"positional", model.encoder_cfg.positional}};
  meta["decoder"] = {{"layers", model.decoder_cfg.n_layers},
                     {"d_s", model.decoder_cfg.d_s},
                     {"d_y", model.decoder_cfg.d_y},
                     {"d_z", model.decoder_cfg.d_z}};
  meta["norm"] = {{"offset_x", model.norm.offset_x},
                  {"offset_y", model.norm.offset_y},
                  {"scale", model.norm.scale}};
  meta["bop"] = model.bop;
  meta["fps"] = model.fps;
  return meta;
}

inline void save_model_checkpoint(const std::string& dir, const Model& model,
                                  const AdamState* adam, std::int64_t epoch) {
  save_checkpoint(dir, model.params(), adam, epoch, model_meta(model));
}

struct LoadedModel {
  Model model;
  std::optional<AdamState> adam;
  std::int64_t epoch = 0;
};

inline LoadedModel load_model_checkpoint(const std::string& dir) {
  Checkpoint ckpt = load_checkpoint(dir);
  if (ckpt.meta.is_null()) throw IoError("checkpoint in '" + dir + "' has no model section");

  EncoderConfig enc;
  const auto& je = ckpt.meta.at("encoder");
  enc.n_layers = je.at("N").get<int>();
  enc.n_heads = je.at("l").get<int>();
  enc.d_x = je.at("d_x").get<int>();
  enc.d_z = je.at("d_z").get<int>();
  enc.d_k = je.at("d_k").get<int>();
  enc.d_v = je.at("d_v").get<int>();
  enc.window = je.at("k").get<int>();
  enc.ffn_hidden = je.at("ffn_hidden").get<int>();
  enc.layer_norm = je.at("layer_norm").get<bool>();
  enc.positional = je.at("positional").get<bool>();
  DecoderConfig dec;
  const auto& jd = ckpt.meta.at("decoder");
  dec.n_layers = jd.at("layers").get<int>();
  dec.d_s = jd.at("d_s").get<int>();
  dec.d_y = jd.at("d_y").get<int>();
  dec.d_z = jd.at("d_z").get<int>();

  LoadedModel loaded;
  loaded.model = Model::init(enc, dec, /*seed=*/0);
  loaded.model.norm.offset_x = ckpt.meta.at("norm").at("offset_x").get<double>();
  loaded.model.norm.offset_y = ckpt.meta.at("norm").at("offset_y").get<double>();
  loaded.model.norm.scale = ckpt.meta.at("norm").at("scale").get<double>();
  loaded.model.bop = ckpt.meta.at("bop").get<std::vector<double>>();
  loaded.model.fps = ckpt.meta.at("fps").get<double>();

  ParamSet target = loaded.model.params();
  if (target.count() != ckpt.params.size())
    throw IoError("checkpoint parameter count " + std::to_string(ckpt.params.size()) +
                  " does not match model (" + std::to_string(target.count()) + ")");
  for (const auto& [name, source] : ckpt.params) {
    Tensor& dest = target.find(name);
    if (dest.shape() != source.shape())
      throw IoError("checkpoint parameter '" + name + "' shape mismatch");
    dest.mutable_values() = source.values();
  }
  loaded.adam = std::move(ckpt.adam);
  loaded.epoch = ckpt.epoch;
  return loaded;
}

}  // namespace dancegen
