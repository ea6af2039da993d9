#pragma once

#include <vector>

#include "modeseq/array.hpp"

namespace modeseq {

// Handle into a Tape. Valid only for the tape that produced it.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op {
  kLeaf,
  kMatmul,
  kAdd,
  kAddRow,     // [N,D] + [D]
  kSub,
  kMul,
  kDiv,
  kScale,      // x * c0
  kAddConst,   // x + c0
  kRsubConst,  // c0 - x
  kGelu,
  kSigmoid,
  kSoftplus,
  kLog,
  kAbs,
  kSquare,
  kSoftmaxRows,  // optional additive mask as second input
  kLayerNorm,    // inputs: x, gain, bias
  kConcatRows,
  kSliceRows,    // rows [c0i, c1i)
  kSliceCols,    // cols [c0i, c1i)
  kGatherRows,
  kMaxPoolRows,  // [P,D] -> [1,D]
  kSumAll,
  kMeanAll,
  kReshape,
  kDropout,
  kAttention,    // inputs: Q, K, V, optional additive mask; multi-head core
};

// Records one op-level computation graph per sample. Ops run eagerly; backward
// walks the record in reverse. All reductions use a fixed order, so a given
// graph always produces bit-identical values.
class Tape {
 public:
  explicit Tape(bool training = false, uint64_t dropout_seed = 0, double dropout_rate = 0.0)
      : training_(training), drop_rng_(dropout_seed), dropout_rate_(dropout_rate) {
    nodes_.reserve(1024);
  }

  bool training() const { return training_; }
  double dropout_rate() const { return dropout_rate_; }

  Var leaf(Array value, bool requires_grad = false);
  // Leaf that references external storage (parameters). The pointee must
  // outlive the tape and stay unchanged until backward completes.
  Var external_leaf(const Array* value, bool requires_grad, int param_index);

  const Array& val(Var v) const;
  const Array& grad(Var v) const;
  int param_index(Var v) const;
  size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var add_row(Var a, Var bias);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  Var rsub_const(Var a, double c);  // c - a
  Var gelu(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var log(Var a);
  Var abs(Var a);
  Var square(Var a);
  Var softmax_rows(Var a, Var mask = {});
  Var layer_norm(Var x, Var gain, Var bias);
  Var concat_rows(const std::vector<Var>& parts);
  Var slice_rows(Var a, int64_t r0, int64_t r1);
  Var slice_cols(Var a, int64_t c0, int64_t c1);
  Var gather_rows(Var a, std::vector<int64_t> indices);
  Var maxpool_rows(Var a);
  Var sum_all(Var a);
  Var mean_all(Var a);
  Var reshape(Var a, std::vector<int64_t> shape);
  Var dropout(Var a);  // identity when not training or rate == 0
  Var attention(Var q, Var k, Var v, int heads, Var mask = {});

  // Seeds grad(loss) = 1 and accumulates adjoints for every node that needs
  // them. The loss must be scalar.
  void backward(Var loss);

  // Attention probabilities of the most recent kAttention node (per head,
  // stacked row blocks). Test hook.
  const Array& last_attention_probs() const;

  // Moves accumulated parameter-leaf gradients into a store-indexed vector.
  // Entries without gradient stay empty (treated as zero downstream).
  std::vector<Array> take_param_grads(size_t store_size);

 private:
  struct Node {
    Op op;
    std::vector<int> inputs;
    Array value;
    const Array* ext = nullptr;  // set for external leaves
    Array grad;
    bool needs_grad = false;
    bool grad_alloc = false;
    int param_index = -1;
    double c0 = 0.0;
    int64_t c0i = 0, c1i = 0;
    int heads = 0;
    std::vector<int64_t> idx;  // gather indices / concat offsets / argmax
    Array saved;               // op-specific backward context
  };

  const Array& value_of(int id) const {
    const Node& n = nodes_[static_cast<size_t>(id)];
    return n.ext ? *n.ext : n.value;
  }
  Array& ensure_grad(int id);
  Var push(Node n);
  void check(Var v) const;
  void backstep(int id);

  std::vector<Node> nodes_;
  bool training_;
  Rng drop_rng_;
  double dropout_rate_;
  int last_attention_ = -1;
};

}  // namespace modeseq
