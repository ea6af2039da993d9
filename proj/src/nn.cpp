#include "modeseq/nn.hpp"

#include <stdexcept>

namespace modeseq {

namespace {
constexpr double kInitStd = 0.02;

Array init_weight(int64_t in, int64_t out, Rng& rng) {
  Array w({in, out});
  for (double& v : w.data) v = round_real(rng.normal(0.0, kInitStd));
  return w;
}
}  // namespace

int ParamStore::add(const std::string& name, Array value) {
  if (find(name) >= 0) throw std::invalid_argument("duplicate parameter name: " + name);
  entries.push_back({name, std::move(value), {}, {}});
  Entry& e = entries.back();
  e.m = Array::zeros(e.value.shape);
  e.v = Array::zeros(e.value.shape);
  return static_cast<int>(entries.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries.size(); ++i)
    if (entries[i].name == name) return static_cast<int>(i);
  return -1;
}

Var ParamBinder::operator()(int idx) {
  auto it = bound_.find(idx);
  if (it != bound_.end()) return it->second;
  if (idx < 0 || idx >= static_cast<int>(store_.entries.size()))
    throw std::invalid_argument("parameter index out of range");
  Var v = tape_.external_leaf(&store_.entries[static_cast<size_t>(idx)].value, true, idx);
  bound_.emplace(idx, v);
  return v;
}

LinearP make_linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng) {
  LinearP p;
  p.w = ps.add(name + ".w", init_weight(in, out, rng));
  p.b = ps.add(name + ".b", Array::zeros({out}));
  return p;
}

MlpP make_mlp(ParamStore& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out,
              Rng& rng) {
  MlpP p;
  p.l1 = make_linear(ps, name + ".l1", in, hidden, rng);
  p.l2 = make_linear(ps, name + ".l2", hidden, out, rng);
  return p;
}

NormP make_norm(ParamStore& ps, const std::string& name, int64_t dim) {
  NormP p;
  p.gain = ps.add(name + ".g", Array::full({dim}, 1.0));
  p.bias = ps.add(name + ".b", Array::zeros({dim}));
  return p;
}

BlockP make_block(ParamStore& ps, const std::string& name, int64_t dim, Rng& rng) {
  BlockP p;
  p.ln_q = make_norm(ps, name + ".ln_q", dim);
  p.ln_kv = make_norm(ps, name + ".ln_kv", dim);
  p.ln_ff = make_norm(ps, name + ".ln_ff", dim);
  p.wq = make_linear(ps, name + ".wq", dim, dim, rng);
  p.wk = make_linear(ps, name + ".wk", dim, dim, rng);
  p.wv = make_linear(ps, name + ".wv", dim, dim, rng);
  p.wo = make_linear(ps, name + ".wo", dim, dim, rng);
  p.ff1 = make_linear(ps, name + ".ff1", dim, 4 * dim, rng);
  p.ff2 = make_linear(ps, name + ".ff2", 4 * dim, dim, rng);
  return p;
}

Var linear(ParamBinder& pb, const LinearP& p, Var x) {
  Tape& t = pb.tape();
  return t.add_row(t.matmul(x, pb(p.w)), pb(p.b));
}

Var mlp(ParamBinder& pb, const MlpP& p, Var x) {
  Tape& t = pb.tape();
  return linear(pb, p.l2, t.gelu(linear(pb, p.l1, x)));
}

Var layer_norm(ParamBinder& pb, const NormP& p, Var x) {
  return pb.tape().layer_norm(x, pb(p.gain), pb(p.bias));
}

namespace {

Var feed_forward(ParamBinder& pb, const BlockP& p, Var x) {
  Tape& t = pb.tape();
  Var h = t.gelu(linear(pb, p.ff1, layer_norm(pb, p.ln_ff, x)));
  return t.add(x, t.dropout(linear(pb, p.ff2, h)));
}

Var attn_residual(ParamBinder& pb, const BlockP& p, Var x, Var k, Var v, int heads, Var mask) {
  Tape& t = pb.tape();
  Var q = linear(pb, p.wq, layer_norm(pb, p.ln_q, x));
  Var core = t.attention(q, k, v, heads, mask);
  return t.add(x, t.dropout(linear(pb, p.wo, core)));
}

}  // namespace

CachedKv project_kv(ParamBinder& pb, const BlockP& p, Var kv) {
  Var n = layer_norm(pb, p.ln_kv, kv);
  return {linear(pb, p.wk, n), linear(pb, p.wv, n)};
}

Var block_cross_cached(ParamBinder& pb, const BlockP& p, Var x, const CachedKv& kv, int heads,
                       Var mask) {
  return feed_forward(pb, p, attn_residual(pb, p, x, kv.k, kv.v, heads, mask));
}

Var block_cross(ParamBinder& pb, const BlockP& p, Var x, Var kv, int heads, Var mask) {
  return block_cross_cached(pb, p, x, project_kv(pb, p, kv), heads, mask);
}

Var block_self(ParamBinder& pb, const BlockP& p, Var x, int heads, Var mask) {
  Var n = layer_norm(pb, p.ln_q, x);
  CachedKv kv{linear(pb, p.wk, n), linear(pb, p.wv, n)};
  Tape& t = pb.tape();
  Var q = linear(pb, p.wq, n);
  Var core = t.attention(q, kv.k, kv.v, heads, mask);
  Var x1 = t.add(x, t.dropout(linear(pb, p.wo, core)));
  return feed_forward(pb, p, x1);
}

}  // namespace modeseq
