#pragma once

#include "modeseq/decoder.hpp"

namespace modeseq {

struct ModelConfig {
  int dim = 128;
  int heads = 8;
  int layer_count = 6;
  int modes = 6;
  int future_steps = 30;
  double dropout = 0.1;
  double map_radius = 50.0;
};

struct Model {
  ModelConfig cfg;
  ParamStore store;
  EncoderP enc;
  DecoderP dec;

  EncoderConfig encoder_config() const { return {cfg.dim, cfg.heads, cfg.map_radius}; }
  DecoderConfig decoder_config() const {
    DecoderConfig d;
    d.dim = cfg.dim;
    d.heads = cfg.heads;
    d.layer_count = cfg.layer_count;
    d.modes = cfg.modes;
    d.future_steps = cfg.future_steps;
    return d;
  }
};

Model build_model(const ModelConfig& cfg, uint64_t seed);

struct ForwardVars {
  EncodedScene scene;
  DecodeVars decode;
};

ForwardVars model_forward(ParamBinder& pb, const Model& m, const Scenario& sc, int steps,
                          bool rearrange);

// Eval-mode forward returning focal-frame mode sequences for every layer.
RefinementStack predict_stack(const Model& m, const Scenario& sc, int steps, bool rearrange);

// Final-layer output in the global frame.
struct Prediction {
  std::vector<std::vector<Vec2>> trajectories;  // [K][Tf]
  std::vector<double> confidences;
};
Prediction predict(const Model& m, const Scenario& sc, int steps, bool rearrange);

}  // namespace modeseq
