#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "modeseq/tape.hpp"

namespace modeseq {

// Named trainable parameters plus their AdamW moments. Entry order is the
// canonical order used for gradient reduction and serialization.
struct ParamStore {
  struct Entry {
    std::string name;
    Array value;
    Array m;
    Array v;
  };
  std::vector<Entry> entries;

  int add(const std::string& name, Array value);
  int find(const std::string& name) const;  // -1 if absent
  size_t size() const { return entries.size(); }
};

// Per-tape binder so each parameter materializes as one leaf per tape.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParamStore& store) : tape_(tape), store_(store) {}

  Var operator()(int idx);
  Tape& tape() const { return tape_; }

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::unordered_map<int, Var> bound_;
};

struct LinearP {
  int w = -1, b = -1;
};
struct MlpP {
  LinearP l1, l2;
};
struct NormP {
  int gain = -1, bias = -1;
};

// Pre-norm transformer block: x += drop(attn(ln_q x, ln_kv kv)) followed by
// x += drop(ffn(ln_ff x)); GELU feed-forward with 4x expansion.
struct BlockP {
  NormP ln_q, ln_kv, ln_ff;
  LinearP wq, wk, wv, wo, ff1, ff2;
};

LinearP make_linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng);
MlpP make_mlp(ParamStore& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out,
              Rng& rng);
NormP make_norm(ParamStore& ps, const std::string& name, int64_t dim);
BlockP make_block(ParamStore& ps, const std::string& name, int64_t dim, Rng& rng);

Var linear(ParamBinder& pb, const LinearP& p, Var x);
Var mlp(ParamBinder& pb, const MlpP& p, Var x);
Var layer_norm(ParamBinder& pb, const NormP& p, Var x);

// Full cross-attention block. `mask` is an additive [Nq,Nk] constant.
Var block_cross(ParamBinder& pb, const BlockP& p, Var x, Var kv, int heads, Var mask = {});
// Self-attention block (keys/values share the query normalization).
Var block_self(ParamBinder& pb, const BlockP& p, Var x, int heads, Var mask = {});

// Keys/values of a block projected once so recurrent queries can reuse them.
struct CachedKv {
  Var k, v;
};
CachedKv project_kv(ParamBinder& pb, const BlockP& p, Var kv);
Var block_cross_cached(ParamBinder& pb, const BlockP& p, Var x, const CachedKv& kv, int heads,
                       Var mask = {});

}  // namespace modeseq
