#include "modeseq/model.hpp"

namespace modeseq {

Model build_model(const ModelConfig& cfg, uint64_t seed) {
  if (cfg.dim % cfg.heads != 0) throw shape_error("model: heads must divide dim");
  Model m;
  m.cfg = cfg;
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  m.enc = make_encoder(m.store, cfg.dim, rng);
  m.dec = make_decoder(m.store, cfg.dim, cfg.layer_count, cfg.future_steps, rng);
  return m;
}

ForwardVars model_forward(ParamBinder& pb, const Model& m, const Scenario& sc, int steps,
                          bool rearrange) {
  ForwardVars fv;
  fv.scene = encode_on_tape(pb, m.enc, sc, m.encoder_config());
  fv.decode = decode_on_tape(pb, m.dec, fv.scene, steps, rearrange, m.decoder_config());
  return fv;
}

RefinementStack predict_stack(const Model& m, const Scenario& sc, int steps, bool rearrange) {
  Tape tape(false);
  ParamBinder pb(tape, m.store);
  ForwardVars fv = model_forward(pb, m, sc, steps, rearrange);
  RefinementStack out;
  out.frame = fv.scene.frame;
  out.perms = fv.decode.perms;
  for (size_t l = 0; l < fv.decode.layers.size(); ++l)
    out.layers.push_back(extract_mode_sequence(tape, fv.decode.layers[l], static_cast<int>(l)));
  return out;
}

Prediction predict(const Model& m, const Scenario& sc, int steps, bool rearrange) {
  RefinementStack stack = predict_stack(m, sc, steps, rearrange);
  const ModeSequence& last = stack.layers.back();
  Prediction out;
  int64_t k = last.trajectories.shape[0];
  int64_t tf = last.trajectories.shape[1];
  out.trajectories.resize(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    auto& traj = out.trajectories[static_cast<size_t>(i)];
    traj.resize(static_cast<size_t>(tf));
    for (int64_t s = 0; s < tf; ++s) {
      Vec2 local{last.trajectories.at(i * tf * 2 + s * 2), last.trajectories.at(i * tf * 2 + s * 2 + 1)};
      traj[static_cast<size_t>(s)] = stack.frame.to_global(local);
    }
  }
  out.confidences = last.confidences;
  return out;
}

}  // namespace modeseq
