#include "modeseq/decoder.hpp"

#include <algorithm>
#include <numeric>

namespace modeseq {

DecoderP make_decoder(ParamStore& ps, int dim, int layer_count, int future_steps, Rng& rng) {
  DecoderP p;
  Array e({1, dim});
  for (double& v : e.data) v = round_real(rng.normal(0.0, 0.02));
  p.init_embed = ps.add("decoder.init_embed", std::move(e));
  for (int l = 0; l < layer_count; ++l) {
    std::string base = "decoder.layer" + std::to_string(l);
    DecoderLayerP lp;
    lp.memory = make_block(ps, base + ".memory", dim, rng);
    lp.mode_time = make_block(ps, base + ".mode_time", dim, rng);
    lp.mode_map = make_block(ps, base + ".mode_map", dim, rng);
    lp.mode_agent = make_block(ps, base + ".mode_agent", dim, rng);
    lp.traj_head = make_mlp(ps, base + ".traj_head", dim, dim, 4 * future_steps, rng);
    lp.conf_head = make_mlp(ps, base + ".conf_head", dim, dim, 1, rng);
    p.layers.push_back(std::move(lp));
  }
  return p;
}

ModeVars decode_layer_on_tape(ParamBinder& pb, const DecoderLayerP& lp, const EncodedScene& scene,
                              Var prev_modes, int steps, const DecoderConfig& cfg) {
  Tape& t = pb.tape();
  if (steps < 1) throw std::invalid_argument("decode_layer: steps must be >= 1");
  if (t.val(prev_modes).shape != std::vector<int64_t>{steps, cfg.dim})
    throw shape_error("decode_layer: prev_modes must be [steps, dim]");

  CachedKv kv_time = project_kv(pb, lp.mode_time, scene.focal_seq);
  Var time_mask = t.leaf(scene.focal_key_mask);
  bool has_map = !scene.near_map.empty();
  bool has_agents = scene.neighbor_last.valid();
  CachedKv kv_map, kv_agent;
  if (has_map) kv_map = project_kv(pb, lp.mode_map, scene.near_map_embed);
  if (has_agents) kv_agent = project_kv(pb, lp.mode_agent, scene.neighbor_last);

  std::vector<Var> bank;       // decoded mode embeddings, in step order
  std::vector<Var> bank_k, bank_v;
  for (int step = 0; step < steps; ++step) {
    Var x = t.slice_rows(prev_modes, step, step + 1);
    if (step > 0) {
      CachedKv mem{t.concat_rows(bank_k), t.concat_rows(bank_v)};
      x = block_cross_cached(pb, lp.memory, x, mem, cfg.heads);
    }
    x = block_cross_cached(pb, lp.mode_time, x, kv_time, cfg.heads, time_mask);
    if (has_map) x = block_cross_cached(pb, lp.mode_map, x, kv_map, cfg.heads);
    if (has_agents) x = block_cross_cached(pb, lp.mode_agent, x, kv_agent, cfg.heads);
    bank.push_back(x);
    CachedKv row = project_kv(pb, lp.memory, x);
    bank_k.push_back(row.k);
    bank_v.push_back(row.v);
  }

  ModeVars out;
  out.omega = steps == 1 ? bank[0] : t.concat_rows(bank);
  Var head = mlp(pb, lp.traj_head, out.omega);
  int64_t tf2 = 2 * cfg.future_steps;
  out.loc = t.scale(t.slice_cols(head, 0, tf2), cfg.traj_unit);
  out.scale = t.add_const(t.softplus(t.slice_cols(head, tf2, 2 * tf2)), cfg.scale_floor);
  out.conf_logit = mlp(pb, lp.conf_head, out.omega);
  out.conf = t.sigmoid(out.conf_logit);
  return out;
}

std::vector<int64_t> rearrange_order(const std::vector<double>& confidences) {
  std::vector<int64_t> order(confidences.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return confidences[static_cast<size_t>(a)] > confidences[static_cast<size_t>(b)];
  });
  return order;
}

DecodeVars decode_on_tape(ParamBinder& pb, const DecoderP& p, const EncodedScene& scene, int steps,
                          bool rearrange, const DecoderConfig& cfg) {
  Tape& t = pb.tape();
  if (steps < 1) throw std::invalid_argument("decode: steps must be >= 1");
  DecodeVars out;
  Var prev = t.gather_rows(pb(p.init_embed), std::vector<int64_t>(static_cast<size_t>(steps), 0));
  for (size_t l = 0; l < p.layers.size(); ++l) {
    ModeVars mv = decode_layer_on_tape(pb, p.layers[l], scene, prev, steps, cfg);
    if (l + 1 < p.layers.size()) {
      const Array& conf = t.val(mv.conf);
      std::vector<int64_t> perm(static_cast<size_t>(steps));
      if (rearrange) {
        std::vector<double> c(conf.data.begin(), conf.data.end());
        perm = rearrange_order(c);
        prev = t.gather_rows(mv.omega, perm);
      } else {
        std::iota(perm.begin(), perm.end(), 0);
        prev = mv.omega;
      }
      out.perms.push_back(std::move(perm));
    }
    out.layers.push_back(mv);
  }
  return out;
}

ModeSequence extract_mode_sequence(const Tape& t, const ModeVars& mv, int layer_index) {
  ModeSequence seq;
  seq.layer_index = layer_index;
  seq.embeddings = t.val(mv.omega);
  const Array& loc = t.val(mv.loc);
  const Array& scl = t.val(mv.scale);
  int64_t k = loc.shape[0];
  int64_t tf = loc.shape[1] / 2;
  seq.trajectories = loc;
  seq.trajectories.shape = {k, tf, 2};
  seq.scales = scl;
  seq.scales.shape = {k, tf, 2};
  const Array& conf = t.val(mv.conf);
  seq.confidences.assign(conf.data.begin(), conf.data.end());
  return seq;
}

}  // namespace modeseq
