#pragma once

#include "modeseq/nn.hpp"
#include "modeseq/scenario.hpp"

namespace modeseq {

// Rigid transform between the global frame and the focal agent's frame at the
// last observed step.
struct FrameTransform {
  Vec2 origin;
  double heading = 0.0;

  Vec2 to_local(Vec2 g) const;
  Vec2 to_global(Vec2 l) const;
};

struct EncoderConfig {
  int dim = 128;
  int heads = 8;
  double map_radius = 50.0;
};

struct EncoderP {
  MlpP map_point;   // per-point features -> token, max-pooled per polyline
  MlpP agent_step;  // per-step motion features -> token
  BlockP map_self;
  struct Round {
    BlockP temporal, agent_map, agent_agent;
  };
  std::array<Round, 2> rounds;
};

EncoderP make_encoder(ParamStore& ps, int dim, Rng& rng);

// Scene embedding as tape nodes, for joint encoder/decoder differentiation.
struct EncodedScene {
  int num_agents = 0;
  int history_steps = 0;
  int map_count = 0;
  Var map_embed;                 // [M,D]; invalid when M == 0
  std::vector<Var> agent_seq;    // per agent [T,D]
  Var focal_seq;                 // [T,D]
  Var neighbor_last;             // [A-1,D]; invalid when A == 1
  std::vector<int64_t> near_map; // map tokens within map_radius of the focal agent
  Var near_map_embed;            // [|near_map|,D]; invalid when empty
  Array focal_key_mask;          // [1,T] additive mask over focal history steps
  FrameTransform frame;
};

EncodedScene encode_on_tape(ParamBinder& pb, const EncoderP& p, const Scenario& sc,
                            const EncoderConfig& cfg);

// Value-level scene embedding.
struct SceneEmbedding {
  Array map_embedding;    // [M,D]
  Array agent_embedding;  // [A,T,D]
  int focal_index = 0;
  FrameTransform frame;
};

SceneEmbedding encode(const Scenario& sc, const ParamStore& ps, const EncoderP& p,
                      const EncoderConfig& cfg);

}  // namespace modeseq
