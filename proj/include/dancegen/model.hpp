#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dancegen/datapipe.hpp"
#include "dancegen/decoder.hpp"
#include "dancegen/encoder.hpp"
#include "dancegen/params.hpp"
#include "dancegen/rng.hpp"

namespace dancegen {

// Encoder + decoder weights plus everything generation needs: the pose
// normalizer fitted on the training split and the begin-of-pose seed (the
// training-set mean pose, in normalized coordinates).
struct Model {
  EncoderConfig encoder_cfg;
  DecoderConfig decoder_cfg;
  EncoderParams encoder;
  DecoderParams decoder;
  PoseNormalizer norm;
  std::vector<double> bop;
  double fps = 15.0;

  static Model init(const EncoderConfig& enc_cfg, const DecoderConfig& dec_cfg,
                    std::uint64_t seed) {
    if (enc_cfg.d_z != dec_cfg.d_z)
      throw ConfigError("Model: encoder d_z " + std::to_string(enc_cfg.d_z) +
                        " != decoder d_z " + std::to_string(dec_cfg.d_z));
    Model m;
    m.encoder_cfg = enc_cfg;
    m.decoder_cfg = dec_cfg;
    Rng rng(derive_seed(seed, 0x90de1));
    m.encoder = EncoderParams::init(enc_cfg, rng);
    m.decoder = DecoderParams::init(dec_cfg, rng);
    m.bop.assign(dec_cfg.d_y, 0.0);
    return m;
  }

  ParamSet params() const {
    ParamSet set;
    encoder.register_into(set, "encoder");
    decoder.register_into(set, "decoder");
    return set;
  }

  // Full pipeline on raw music features: encode, roll out, denormalize.
  Matrix generate_poses(const Matrix& music, std::uint64_t seed) const {
    if (music.cols != encoder_cfg.d_x)
      throw ShapeError("generate: music has " + std::to_string(music.cols) +
                       " channels, model expects " + std::to_string(encoder_cfg.d_x));
    const Matrix z = encode(music, encoder, encoder_cfg);
    const Matrix normalized = generate(z, bop, decoder, decoder_cfg, seed);
    return norm.invert(normalized);
  }
};

}  // namespace dancegen
