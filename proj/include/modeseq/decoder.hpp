#pragma once

#include "modeseq/encoder.hpp"

namespace modeseq {

struct DecoderConfig {
  int dim = 128;
  int heads = 8;
  int layer_count = 6;
  int modes = 6;         // decoding steps used at training time
  int future_steps = 30;
  double traj_unit = 10.0;     // meters per trajectory-head output unit
  double scale_floor = 1e-3;   // lower bound on Laplace scales
};

struct DecoderLayerP {
  BlockP memory, mode_time, mode_map, mode_agent;
  MlpP traj_head;  // [K,D] -> [K, 4*Tf]: locations then pre-softplus scales
  MlpP conf_head;  // [K,D] -> [K, 1] logits
};

struct DecoderP {
  std::vector<DecoderLayerP> layers;
  int init_embed = -1;  // shared first-layer input embedding
};

DecoderP make_decoder(ParamStore& ps, int dim, int layer_count, int future_steps, Rng& rng);

// One layer's outputs as tape nodes.
struct ModeVars {
  Var omega;       // [K,D]
  Var loc;         // [K, 2*Tf], focal frame, meters
  Var scale;       // [K, 2*Tf], > 0
  Var conf_logit;  // [K,1]
  Var conf;        // [K,1], sigmoid
};

struct DecodeVars {
  std::vector<ModeVars> layers;
  std::vector<std::vector<int64_t>> perms;  // between-layer reorderings (layer_count-1)
};

// Recurrent single-layer decode: step t queries the memory bank of modes
// decoded so far (bypassed when empty), then the three context attentions.
ModeVars decode_layer_on_tape(ParamBinder& pb, const DecoderLayerP& lp, const EncodedScene& scene,
                              Var prev_modes, int steps, const DecoderConfig& cfg);

DecodeVars decode_on_tape(ParamBinder& pb, const DecoderP& p, const EncodedScene& scene, int steps,
                          bool rearrange, const DecoderConfig& cfg);

// Stable descending-confidence order; ties keep the earlier decoding step.
std::vector<int64_t> rearrange_order(const std::vector<double>& confidences);

// Value-level views of one layer and of the whole refinement stack.
struct ModeSequence {
  Array embeddings;    // [K,D]
  Array trajectories;  // [K,Tf,2], focal frame
  Array scales;        // [K,Tf,2]
  std::vector<double> confidences;
  int layer_index = 0;
};

struct RefinementStack {
  std::vector<ModeSequence> layers;
  std::vector<std::vector<int64_t>> perms;
  FrameTransform frame;
};

ModeSequence extract_mode_sequence(const Tape& t, const ModeVars& mv, int layer_index);

}  // namespace modeseq
