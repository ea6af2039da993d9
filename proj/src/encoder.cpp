#include "modeseq/encoder.hpp"

#include <cmath>

namespace modeseq {

namespace {
constexpr double kPosScale = 0.1;     // meters -> feature units
constexpr double kSpeedScale = 0.1;
constexpr double kMaskOff = -1e30;
}  // namespace

Vec2 FrameTransform::to_local(Vec2 g) const {
  double c = std::cos(heading), s = std::sin(heading);
  Vec2 d = g - origin;
  return {c * d.x + s * d.y, -s * d.x + c * d.y};
}

Vec2 FrameTransform::to_global(Vec2 l) const {
  double c = std::cos(heading), s = std::sin(heading);
  return {c * l.x - s * l.y + origin.x, s * l.x + c * l.y + origin.y};
}

EncoderP make_encoder(ParamStore& ps, int dim, Rng& rng) {
  EncoderP p;
  p.map_point = make_mlp(ps, "encoder.map_point", 6, dim, dim, rng);
  p.agent_step = make_mlp(ps, "encoder.agent_step", 7, dim, dim, rng);
  p.map_self = make_block(ps, "encoder.map_self", dim, rng);
  for (int r = 0; r < 2; ++r) {
    std::string base = "encoder.round" + std::to_string(r);
    p.rounds[static_cast<size_t>(r)].temporal = make_block(ps, base + ".temporal", dim, rng);
    p.rounds[static_cast<size_t>(r)].agent_map = make_block(ps, base + ".agent_map", dim, rng);
    p.rounds[static_cast<size_t>(r)].agent_agent = make_block(ps, base + ".agent_agent", dim, rng);
  }
  return p;
}

EncodedScene encode_on_tape(ParamBinder& pb, const EncoderP& p, const Scenario& sc,
                            const EncoderConfig& cfg) {
  Tape& t = pb.tape();
  if (cfg.dim % cfg.heads != 0) throw shape_error("encoder: heads must divide dim");
  if (sc.agents.empty()) throw std::invalid_argument("encoder: scenario has no agents");

  EncodedScene out;
  out.num_agents = static_cast<int>(sc.agents.size());
  out.frame.origin = sc.focal_position();
  out.frame.heading = sc.focal_heading();

  // map tokens: per-point MLP, max-pool per polyline, one self-attention round
  out.map_count = static_cast<int>(sc.map.size());
  if (out.map_count > 0) {
    std::vector<Var> tokens;
    tokens.reserve(sc.map.size());
    for (const Polyline& pl : sc.map) {
      int64_t np = static_cast<int64_t>(pl.points.size());
      Array feats({np, 6});
      for (int64_t i = 0; i < np; ++i) {
        Vec2 a = out.frame.to_local(pl.points[static_cast<size_t>(i)]);
        Vec2 bpt = pl.points[static_cast<size_t>(i + 1 < np ? i + 1 : i)];
        Vec2 apt = pl.points[static_cast<size_t>(i + 1 < np ? i : i - 1)];
        Vec2 d = out.frame.to_local(bpt) - out.frame.to_local(apt);
        double len = norm(d);
        if (len > 0.0) d = (1.0 / len) * d;
        feats.at(i, 0) = a.x * kPosScale;
        feats.at(i, 1) = a.y * kPosScale;
        feats.at(i, 2) = d.x;
        feats.at(i, 3) = d.y;
        feats.at(i, 4) = pl.semantic == Semantic::kLaneCenter ? 1.0 : 0.0;
        feats.at(i, 5) = pl.semantic == Semantic::kBoundary ? 1.0 : 0.0;
      }
      tokens.push_back(t.maxpool_rows(mlp(pb, p.map_point, t.leaf(std::move(feats)))));
    }
    Var map_raw = t.concat_rows(tokens);
    out.map_embed = block_self(pb, p.map_self, map_raw, cfg.heads);

    for (size_t i = 0; i < sc.map.size(); ++i) {
      double best = 1e300;
      for (Vec2 pt : sc.map[i].points) best = std::min(best, norm(out.frame.to_local(pt)));
      if (best <= cfg.map_radius) out.near_map.push_back(static_cast<int64_t>(i));
    }
    if (!out.near_map.empty()) out.near_map_embed = t.gather_rows(out.map_embed, out.near_map);
  }

  // agent step tokens
  const int A = out.num_agents;
  const int T = static_cast<int>(sc.focal().positions.size());
  out.history_steps = T;
  out.agent_seq.resize(static_cast<size_t>(A));
  std::vector<Array> masks(static_cast<size_t>(A));
  for (int a = 0; a < A; ++a) {
    const AgentTrack& tr = sc.agents[static_cast<size_t>(a)];
    if (static_cast<int>(tr.positions.size()) != T)
      throw std::invalid_argument("encoder: agent histories must share the same length");
    Array feats({T, 7});
    for (int i = 0; i < T; ++i) {
      bool ok = tr.valid[static_cast<size_t>(i)] != 0;
      Vec2 lp = out.frame.to_local(tr.positions[static_cast<size_t>(i)]);
      double dh = wrap_angle(tr.headings[static_cast<size_t>(i)] - out.frame.heading);
      feats.at(i, 0) = ok ? lp.x * kPosScale : 0.0;
      feats.at(i, 1) = ok ? lp.y * kPosScale : 0.0;
      feats.at(i, 2) = ok ? std::cos(dh) : 0.0;
      feats.at(i, 3) = ok ? std::sin(dh) : 0.0;
      feats.at(i, 4) = ok ? tr.speeds[static_cast<size_t>(i)] * kSpeedScale : 0.0;
      feats.at(i, 5) = T > 1 ? static_cast<double>(i) / static_cast<double>(T - 1) : 0.0;
      feats.at(i, 6) = ok ? 1.0 : 0.0;
    }
    out.agent_seq[static_cast<size_t>(a)] = mlp(pb, p.agent_step, t.leaf(std::move(feats)));

    Array m({T, T});
    for (int i = 0; i < T; ++i)
      for (int j = 0; j < T; ++j)
        m.at(i, j) = (j <= i && tr.valid[static_cast<size_t>(j)] != 0) ? 0.0 : kMaskOff;
    masks[static_cast<size_t>(a)] = std::move(m);
  }

  // two rounds of temporal self-attention plus last-step map/agent fusion
  for (int r = 0; r < 2; ++r) {
    const EncoderP::Round& round = p.rounds[static_cast<size_t>(r)];
    for (int a = 0; a < A; ++a) {
      Var mask = t.leaf(masks[static_cast<size_t>(a)]);
      out.agent_seq[static_cast<size_t>(a)] =
          block_self(pb, round.temporal, out.agent_seq[static_cast<size_t>(a)], cfg.heads, mask);
    }
    std::vector<Var> last_rows;
    last_rows.reserve(static_cast<size_t>(A));
    for (int a = 0; a < A; ++a)
      last_rows.push_back(t.slice_rows(out.agent_seq[static_cast<size_t>(a)], T - 1, T));
    Var last = t.concat_rows(last_rows);
    if (out.map_count > 0) last = block_cross(pb, round.agent_map, last, out.map_embed, cfg.heads);
    last = block_self(pb, round.agent_agent, last, cfg.heads);
    for (int a = 0; a < A; ++a) {
      Var head = t.slice_rows(out.agent_seq[static_cast<size_t>(a)], 0, T - 1);
      Var row = t.slice_rows(last, a, a + 1);
      out.agent_seq[static_cast<size_t>(a)] = T > 1 ? t.concat_rows({head, row}) : row;
    }
  }

  out.focal_seq = out.agent_seq[static_cast<size_t>(sc.focal_index)];
  out.focal_key_mask = Array::zeros({1, T});
  for (int i = 0; i < T; ++i)
    out.focal_key_mask.at(0, i) = sc.focal().valid[static_cast<size_t>(i)] != 0 ? 0.0 : kMaskOff;

  if (A > 1) {
    std::vector<Var> rows;
    for (int a = 0; a < A; ++a) {
      if (a == sc.focal_index) continue;
      rows.push_back(t.slice_rows(out.agent_seq[static_cast<size_t>(a)], T - 1, T));
    }
    out.neighbor_last = t.concat_rows(rows);
  }
  return out;
}

SceneEmbedding encode(const Scenario& sc, const ParamStore& ps, const EncoderP& p,
                      const EncoderConfig& cfg) {
  Tape tape(false);
  ParamBinder pb(tape, ps);
  EncodedScene enc = encode_on_tape(pb, p, sc, cfg);
  SceneEmbedding out;
  out.focal_index = sc.focal_index;
  out.frame = enc.frame;
  out.map_embedding =
      enc.map_count > 0 ? tape.val(enc.map_embed) : Array::zeros({0, cfg.dim});
  const int A = enc.num_agents;
  const int T = enc.history_steps;
  out.agent_embedding = Array::zeros({A, T, cfg.dim});
  for (int a = 0; a < A; ++a) {
    const Array& seq = tape.val(enc.agent_seq[static_cast<size_t>(a)]);
    std::copy(seq.data.begin(), seq.data.end(),
              out.agent_embedding.data.begin() + static_cast<int64_t>(a) * T * cfg.dim);
  }
  return out;
}

}  // namespace modeseq
