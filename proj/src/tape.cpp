#include "modeseq/tape.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace modeseq {

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kAdd: return "add";
    case Op::kAddRow: return "add_row";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddConst: return "add_const";
    case Op::kRsubConst: return "rsub_const";
    case Op::kGelu: return "gelu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSoftplus: return "softplus";
    case Op::kLog: return "log";
    case Op::kAbs: return "abs";
    case Op::kSquare: return "square";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kLayerNorm: return "layer_norm";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSliceRows: return "slice_rows";
    case Op::kSliceCols: return "slice_cols";
    case Op::kGatherRows: return "gather_rows";
    case Op::kMaxPoolRows: return "maxpool_rows";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanAll: return "mean_all";
    case Op::kReshape: return "reshape";
    case Op::kDropout: return "dropout";
    case Op::kAttention: return "attention";
  }
  return "?";
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
}

void softmax_row(const double* z, double* p, int64_t m) {
  double mx = z[0];
  for (int64_t j = 1; j < m; ++j) mx = std::max(mx, z[j]);
  double s = 0.0;
  for (int64_t j = 0; j < m; ++j) {
    p[j] = std::exp(z[j] - mx);
    s += p[j];
  }
  for (int64_t j = 0; j < m; ++j) p[j] /= s;
}

constexpr double kLnEps = 1e-5;

}  // namespace

Var Tape::push(Node n) {
  if (n.op != Op::kLeaf) {
    for (double& v : n.value.data) {
      v = round_real(v);
      if (!std::isfinite(v))
        throw numeric_error(std::string("non-finite output of ") + op_name(n.op));
    }
  } else {
    const Array& a = n.ext ? *n.ext : n.value;
    if (!a.all_finite()) throw numeric_error("non-finite leaf value");
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check(Var v) const {
  if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Var does not belong to this tape");
}

Var Tape::leaf(Array value, bool requires_grad) {
  Node n;
  n.op = Op::kLeaf;
  n.value = std::move(value);
  n.needs_grad = requires_grad;
  return push(std::move(n));
}

Var Tape::external_leaf(const Array* value, bool requires_grad, int param_index) {
  Node n;
  n.op = Op::kLeaf;
  n.ext = value;
  n.needs_grad = requires_grad;
  n.param_index = param_index;
  return push(std::move(n));
}

const Array& Tape::val(Var v) const {
  check(v);
  return value_of(v.id);
}

const Array& Tape::grad(Var v) const {
  check(v);
  static const Array empty;
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  return n.grad_alloc ? n.grad : empty;
}

int Tape::param_index(Var v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)].param_index;
}

Array& Tape::ensure_grad(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (!n.grad_alloc) {
    n.grad = Array::zeros(value_of(id).shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Array& x = value_of(a.id);
  const Array& y = value_of(b.id);
  if (x.ndim() != 2 || y.ndim() != 2 || x.shape[1] != y.shape[0])
    throw shape_error("matmul: " + shape_str(x.shape) + " x " + shape_str(y.shape));
  Node n;
  n.op = Op::kMatmul;
  n.inputs = {a.id, b.id};
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = Array::zeros({x.shape[0], y.shape[1]});
  matmul_nn_acc(x.data.data(), y.data.data(), n.value.data.data(), x.shape[0], x.shape[1],
                y.shape[1]);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Array& x = value_of(a.id);
  const Array& y = value_of(b.id);
  if (!x.same_shape(y)) throw shape_error("add: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a.id, b.id};
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = x;
  for (int64_t i = 0; i < y.numel(); ++i) n.value.at(i) += y.at(i);
  return push(std::move(n));
}

Var Tape::add_row(Var a, Var bias) {
  check(a);
  check(bias);
  const Array& x = value_of(a.id);
  const Array& b = value_of(bias.id);
  if (x.ndim() != 2 || b.numel() != x.shape[1])
    throw shape_error("add_row: " + shape_str(x.shape) + " + " + shape_str(b.shape));
  Node n;
  n.op = Op::kAddRow;
  n.inputs = {a.id, bias.id};
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[bias.id].needs_grad;
  n.value = x;
  int64_t rows = x.shape[0], cols = x.shape[1];
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) n.value.at(r, c) += b.at(c);
  return push(std::move(n));
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Array& x = value_of(a.id);
  const Array& y = value_of(b.id);
  if (!x.same_shape(y)) throw shape_error("sub: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  Node n;
  n.op = Op::kSub;
  n.inputs = {a.id, b.id};
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = x;
  for (int64_t i = 0; i < y.numel(); ++i) n.value.at(i) -= y.at(i);
  return push(std::move(n));
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Array& x = value_of(a.id);
  const Array& y = value_of(b.id);
  if (!x.same_shape(y)) throw shape_error("mul: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  Node n;
  n.op = Op::kMul;
  n.inputs = {a.id, b.id};
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = x;
  for (int64_t i = 0; i < y.numel(); ++i) n.value.at(i) *= y.at(i);
  return push(std::move(n));
}

Var Tape::div(Var a, Var b) {
  check(a);
  check(b);
  const Array& x = value_of(a.id);
  const Array& y = value_of(b.id);
  if (!x.same_shape(y)) throw shape_error("div: " + shape_str(x.shape) + " vs " + shape_str(y.shape));
  Node n;
  n.op = Op::kDiv;
  n.inputs = {a.id, b.id};
  n.needs_grad = nodes_[a.id].needs_grad || nodes_[b.id].needs_grad;
  n.value = x;
  for (int64_t i = 0; i < y.numel(); ++i) n.value.at(i) /= y.at(i);
  return push(std::move(n));
}

#define MODESEQ_UNARY(NAME, OP, EXPR)                       \
  Var Tape::NAME(Var a) {                                   \
    check(a);                                               \
    const Array& x = value_of(a.id);                        \
    Node n;                                                 \
    n.op = OP;                                              \
    n.inputs = {a.id};                                      \
    n.needs_grad = nodes_[a.id].needs_grad;                 \
    n.value = x;                                            \
    for (double& v : n.value.data) v = (EXPR);              \
    return push(std::move(n));                              \
  }

MODESEQ_UNARY(gelu, Op::kGelu, 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))))
MODESEQ_UNARY(sigmoid, Op::kSigmoid, stable_sigmoid(v))
MODESEQ_UNARY(softplus, Op::kSoftplus, stable_softplus(v))
MODESEQ_UNARY(log, Op::kLog, std::log(v))
MODESEQ_UNARY(abs, Op::kAbs, std::fabs(v))
MODESEQ_UNARY(square, Op::kSquare, v* v)

#undef MODESEQ_UNARY

Var Tape::scale(Var a, double c) {
  check(a);
  Node n;
  n.op = Op::kScale;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.c0 = c;
  n.value = value_of(a.id);
  for (double& v : n.value.data) v *= c;
  return push(std::move(n));
}

Var Tape::add_const(Var a, double c) {
  check(a);
  Node n;
  n.op = Op::kAddConst;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.c0 = c;
  n.value = value_of(a.id);
  for (double& v : n.value.data) v += c;
  return push(std::move(n));
}

Var Tape::rsub_const(Var a, double c) {
  check(a);
  Node n;
  n.op = Op::kRsubConst;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.c0 = c;
  n.value = value_of(a.id);
  for (double& v : n.value.data) v = c - v;
  return push(std::move(n));
}

Var Tape::softmax_rows(Var a, Var mask) {
  check(a);
  const Array& x = value_of(a.id);
  if (x.ndim() != 2) throw shape_error("softmax_rows: need 2-D input, got " + shape_str(x.shape));
  Node n;
  n.op = Op::kSoftmaxRows;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  Array z = x;
  if (mask.valid()) {
    check(mask);
    const Array& m = value_of(mask.id);
    if (!m.same_shape(x)) throw shape_error("softmax mask shape " + shape_str(m.shape));
    for (int64_t i = 0; i < z.numel(); ++i) z.at(i) += m.at(i);
    n.inputs.push_back(mask.id);
    n.needs_grad = n.needs_grad || nodes_[mask.id].needs_grad;
  }
  n.value = Array::zeros(x.shape);
  int64_t rows = x.shape[0], cols = x.shape[1];
  for (int64_t r = 0; r < rows; ++r)
    softmax_row(z.data.data() + r * cols, n.value.data.data() + r * cols, cols);
  return push(std::move(n));
}

Var Tape::layer_norm(Var xv, Var gain, Var bias) {
  check(xv);
  check(gain);
  check(bias);
  const Array& x = value_of(xv.id);
  const Array& g = value_of(gain.id);
  const Array& b = value_of(bias.id);
  if (x.ndim() != 2 || g.numel() != x.shape[1] || b.numel() != x.shape[1])
    throw shape_error("layer_norm: " + shape_str(x.shape));
  Node n;
  n.op = Op::kLayerNorm;
  n.inputs = {xv.id, gain.id, bias.id};
  n.needs_grad =
      nodes_[xv.id].needs_grad || nodes_[gain.id].needs_grad || nodes_[bias.id].needs_grad;
  int64_t rows = x.shape[0], cols = x.shape[1];
  n.value = Array::zeros(x.shape);
  n.saved = Array::zeros({rows, 2});
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0.0;
    for (int64_t c = 0; c < cols; ++c) mean += x.at(r, c);
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (int64_t c = 0; c < cols; ++c) {
      double d = x.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(cols);
    double inv = 1.0 / std::sqrt(var + kLnEps);
    n.saved.at(r, 0) = mean;
    n.saved.at(r, 1) = inv;
    for (int64_t c = 0; c < cols; ++c)
      n.value.at(r, c) = g.at(c) * (x.at(r, c) - mean) * inv + b.at(c);
  }
  return push(std::move(n));
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw shape_error("concat_rows: no inputs");
  Node n;
  n.op = Op::kConcatRows;
  int64_t rows = 0;
  int64_t cols = -1;
  for (Var p : parts) {
    check(p);
    const Array& a = value_of(p.id);
    if (a.ndim() != 2) throw shape_error("concat_rows: need 2-D parts");
    if (cols < 0) cols = a.shape[1];
    if (a.shape[1] != cols) throw shape_error("concat_rows: column mismatch");
    n.idx.push_back(rows);
    rows += a.shape[0];
    n.inputs.push_back(p.id);
    n.needs_grad = n.needs_grad || nodes_[p.id].needs_grad;
  }
  n.value = Array::zeros({rows, cols});
  for (size_t i = 0; i < parts.size(); ++i) {
    const Array& a = value_of(parts[i].id);
    std::memcpy(n.value.data.data() + n.idx[i] * cols, a.data.data(),
                sizeof(double) * static_cast<size_t>(a.numel()));
  }
  return push(std::move(n));
}

Var Tape::slice_rows(Var a, int64_t r0, int64_t r1) {
  check(a);
  const Array& x = value_of(a.id);
  if (x.ndim() != 2 || r0 < 0 || r1 > x.shape[0] || r0 >= r1)
    throw shape_error("slice_rows: bad range");
  Node n;
  n.op = Op::kSliceRows;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.c0i = r0;
  n.c1i = r1;
  int64_t cols = x.shape[1];
  n.value = Array::zeros({r1 - r0, cols});
  std::memcpy(n.value.data.data(), x.data.data() + r0 * cols,
              sizeof(double) * static_cast<size_t>((r1 - r0) * cols));
  return push(std::move(n));
}

Var Tape::slice_cols(Var a, int64_t c0, int64_t c1) {
  check(a);
  const Array& x = value_of(a.id);
  if (x.ndim() != 2 || c0 < 0 || c1 > x.shape[1] || c0 >= c1)
    throw shape_error("slice_cols: bad range");
  Node n;
  n.op = Op::kSliceCols;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.c0i = c0;
  n.c1i = c1;
  int64_t rows = x.shape[0];
  n.value = Array::zeros({rows, c1 - c0});
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = c0; c < c1; ++c) n.value.at(r, c - c0) = x.at(r, c);
  return push(std::move(n));
}

Var Tape::gather_rows(Var a, std::vector<int64_t> indices) {
  check(a);
  const Array& x = value_of(a.id);
  if (x.ndim() != 2) throw shape_error("gather_rows: need 2-D input");
  for (int64_t i : indices)
    if (i < 0 || i >= x.shape[0]) throw shape_error("gather_rows: index out of range");
  Node n;
  n.op = Op::kGatherRows;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  int64_t cols = x.shape[1];
  n.value = Array::zeros({static_cast<int64_t>(indices.size()), cols});
  for (size_t i = 0; i < indices.size(); ++i)
    std::memcpy(n.value.data.data() + static_cast<int64_t>(i) * cols,
                x.data.data() + indices[i] * cols, sizeof(double) * static_cast<size_t>(cols));
  n.idx = std::move(indices);
  return push(std::move(n));
}

Var Tape::maxpool_rows(Var a) {
  check(a);
  const Array& x = value_of(a.id);
  if (x.ndim() != 2 || x.shape[0] < 1) throw shape_error("maxpool_rows: need non-empty 2-D input");
  Node n;
  n.op = Op::kMaxPoolRows;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  int64_t rows = x.shape[0], cols = x.shape[1];
  n.value = Array::zeros({1, cols});
  n.idx.assign(static_cast<size_t>(cols), 0);
  for (int64_t c = 0; c < cols; ++c) {
    double best = x.at(0, c);
    int64_t arg = 0;
    for (int64_t r = 1; r < rows; ++r) {
      if (x.at(r, c) > best) {
        best = x.at(r, c);
        arg = r;
      }
    }
    n.value.at(0, c) = best;
    n.idx[static_cast<size_t>(c)] = arg;
  }
  return push(std::move(n));
}

Var Tape::sum_all(Var a) {
  check(a);
  const Array& x = value_of(a.id);
  Node n;
  n.op = Op::kSumAll;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  double s = 0.0;
  for (double v : x.data) s += v;
  n.value = Array::from({1}, {s});
  return push(std::move(n));
}

Var Tape::mean_all(Var a) {
  check(a);
  const Array& x = value_of(a.id);
  if (x.numel() == 0) throw shape_error("mean_all: empty input");
  Node n;
  n.op = Op::kMeanAll;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  double s = 0.0;
  for (double v : x.data) s += v;
  n.value = Array::from({1}, {s / static_cast<double>(x.numel())});
  return push(std::move(n));
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
  check(a);
  const Array& x = value_of(a.id);
  int64_t count = 1;
  for (int64_t e : shape) count *= e;
  if (count != x.numel()) throw shape_error("reshape: element count mismatch");
  Node n;
  n.op = Op::kReshape;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.value = x;
  n.value.shape = std::move(shape);
  return push(std::move(n));
}

Var Tape::dropout(Var a) {
  if (!training_ || dropout_rate_ <= 0.0) return a;
  check(a);
  const Array& x = value_of(a.id);
  Node n;
  n.op = Op::kDropout;
  n.inputs = {a.id};
  n.needs_grad = nodes_[a.id].needs_grad;
  n.saved = Array::zeros(x.shape);
  n.value = x;
  double keep = 1.0 - dropout_rate_;
  for (int64_t i = 0; i < x.numel(); ++i) {
    double m = drop_rng_.uniform() < keep ? 1.0 / keep : 0.0;
    n.saved.at(i) = m;
    n.value.at(i) *= m;
  }
  return push(std::move(n));
}

Var Tape::attention(Var qv, Var kv, Var vv, int heads, Var mask) {
  check(qv);
  check(kv);
  check(vv);
  const Array& q = value_of(qv.id);
  const Array& k = value_of(kv.id);
  const Array& v = value_of(vv.id);
  if (q.ndim() != 2 || k.ndim() != 2 || v.ndim() != 2)
    throw shape_error("attention: need 2-D inputs");
  int64_t dim = q.shape[1];
  int64_t nq = q.shape[0], nk = k.shape[0];
  if (k.shape[1] != dim || v.shape[1] != dim || v.shape[0] != nk)
    throw shape_error("attention: shape mismatch");
  if (heads <= 0 || dim % heads != 0) throw shape_error("attention: heads must divide dim");
  if (nk < 1) throw shape_error("attention: empty key set");
  int64_t hd = dim / heads;
  double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  Node n;
  n.op = Op::kAttention;
  n.inputs = {qv.id, kv.id, vv.id};
  n.needs_grad =
      nodes_[qv.id].needs_grad || nodes_[kv.id].needs_grad || nodes_[vv.id].needs_grad;
  const Array* m = nullptr;
  if (mask.valid()) {
    check(mask);
    m = &value_of(mask.id);
    if (m->shape != std::vector<int64_t>{nq, nk}) throw shape_error("attention: mask shape");
    n.inputs.push_back(mask.id);
  }
  n.heads = heads;
  bool drop = training_ && dropout_rate_ > 0.0;
  n.c1i = drop ? 1 : 0;
  n.saved = Array::zeros({(drop ? 2 : 1) * heads * nq, nk});
  n.value = Array::zeros({nq, dim});

  std::vector<double> s(static_cast<size_t>(nk));
  double keep = 1.0 - dropout_rate_;
  for (int h = 0; h < heads; ++h) {
    int64_t off = h * hd;
    for (int64_t i = 0; i < nq; ++i) {
      const double* qr = q.data.data() + i * dim + off;
      for (int64_t j = 0; j < nk; ++j) {
        const double* kr = k.data.data() + j * dim + off;
        double acc = 0.0;
        for (int64_t c = 0; c < hd; ++c) acc += qr[c] * kr[c];
        s[static_cast<size_t>(j)] = acc * inv_sqrt + (m ? m->at(i, j) : 0.0);
      }
      double* p = n.saved.data.data() + (h * nq + i) * nk;
      softmax_row(s.data(), p, nk);
      double* out = n.value.data.data() + i * dim + off;
      if (drop) {
        double* dm = n.saved.data.data() + ((heads + h) * nq + i) * nk;
        for (int64_t j = 0; j < nk; ++j) dm[j] = drop_rng_.uniform() < keep ? 1.0 / keep : 0.0;
        for (int64_t j = 0; j < nk; ++j) {
          double w = p[j] * dm[j];
          const double* vr = v.data.data() + j * dim + off;
          for (int64_t c = 0; c < hd; ++c) out[c] += w * vr[c];
        }
      } else {
        for (int64_t j = 0; j < nk; ++j) {
          const double* vr = v.data.data() + j * dim + off;
          for (int64_t c = 0; c < hd; ++c) out[c] += p[j] * vr[c];
        }
      }
    }
  }
  Var out = push(std::move(n));
  last_attention_ = out.id;
  return out;
}

const Array& Tape::last_attention_probs() const {
  if (last_attention_ < 0) throw std::logic_error("no attention node recorded");
  return nodes_[static_cast<size_t>(last_attention_)].saved;
}

std::vector<Array> Tape::take_param_grads(size_t store_size) {
  std::vector<Array> out(store_size);
  for (Node& n : nodes_) {
    if (n.param_index < 0 || !n.grad_alloc) continue;
    out[static_cast<size_t>(n.param_index)] = std::move(n.grad);
    n.grad_alloc = false;
  }
  return out;
}

void Tape::backward(Var loss) {
  check(loss);
  if (value_of(loss.id).numel() != 1) throw shape_error("backward: loss must be scalar");
  ensure_grad(loss.id).at(0) = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.grad_alloc || !n.needs_grad || n.op == Op::kLeaf) continue;
    backstep(id);
  }
}

void Tape::backstep(int id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  const Array& g = n.grad;
  auto in_val = [&](int slot) -> const Array& { return value_of(n.inputs[slot]); };
  auto wants = [&](int slot) { return nodes_[n.inputs[slot]].needs_grad; };
  auto in_grad = [&](int slot) -> Array& { return ensure_grad(n.inputs[slot]); };

  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatmul: {
      const Array& a = in_val(0);
      const Array& b = in_val(1);
      int64_t mm = a.shape[0], kk = a.shape[1], nn = b.shape[1];
      if (wants(0))
        matmul_nt_acc(g.data.data(), b.data.data(), in_grad(0).data.data(), mm, nn, kk);
      if (wants(1))
        matmul_tn_acc(a.data.data(), g.data.data(), in_grad(1).data.data(), kk, mm, nn);
      break;
    }
    case Op::kAdd: {
      for (int slot = 0; slot < 2; ++slot)
        if (wants(slot)) {
          Array& gi = in_grad(slot);
          for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i);
        }
      break;
    }
    case Op::kAddRow: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i);
      }
      if (wants(1)) {
        Array& gb = in_grad(1);
        int64_t rows = g.shape[0], cols = g.shape[1];
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < cols; ++c) gb.at(c) += g.at(r, c);
      }
      break;
    }
    case Op::kSub: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i);
      }
      if (wants(1)) {
        Array& gi = in_grad(1);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) -= g.at(i);
      }
      break;
    }
    case Op::kMul: {
      const Array& a = in_val(0);
      const Array& b = in_val(1);
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) * b.at(i);
      }
      if (wants(1)) {
        Array& gi = in_grad(1);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) * a.at(i);
      }
      break;
    }
    case Op::kDiv: {
      const Array& a = in_val(0);
      const Array& b = in_val(1);
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) / b.at(i);
      }
      if (wants(1)) {
        Array& gi = in_grad(1);
        for (int64_t i = 0; i < g.numel(); ++i)
          gi.at(i) -= g.at(i) * a.at(i) / (b.at(i) * b.at(i));
      }
      break;
    }
    case Op::kScale: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) * n.c0;
      }
      break;
    }
    case Op::kAddConst: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i);
      }
      break;
    }
    case Op::kRsubConst: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) -= g.at(i);
      }
      break;
    }
    case Op::kGelu: {
      if (wants(0)) {
        const Array& x = in_val(0);
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) {
          double xv = x.at(i);
          double cdf = 0.5 * (1.0 + std::erf(xv / std::sqrt(2.0)));
          double pdf = std::exp(-0.5 * xv * xv) / std::sqrt(2.0 * M_PI);
          gi.at(i) += g.at(i) * (cdf + xv * pdf);
        }
      }
      break;
    }
    case Op::kSigmoid: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) {
          double y = n.value.at(i);
          gi.at(i) += g.at(i) * y * (1.0 - y);
        }
      }
      break;
    }
    case Op::kSoftplus: {
      if (wants(0)) {
        const Array& x = in_val(0);
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i)
          gi.at(i) += g.at(i) * stable_sigmoid(x.at(i));
      }
      break;
    }
    case Op::kLog: {
      if (wants(0)) {
        const Array& x = in_val(0);
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) / x.at(i);
      }
      break;
    }
    case Op::kAbs: {
      if (wants(0)) {
        const Array& x = in_val(0);
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) {
          double s = x.at(i) > 0.0 ? 1.0 : (x.at(i) < 0.0 ? -1.0 : 0.0);
          gi.at(i) += g.at(i) * s;
        }
      }
      break;
    }
    case Op::kSquare: {
      if (wants(0)) {
        const Array& x = in_val(0);
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) * 2.0 * x.at(i);
      }
      break;
    }
    case Op::kSoftmaxRows: {
      const Array& p = n.value;
      int64_t rows = p.shape[0], cols = p.shape[1];
      Array gz = Array::zeros(p.shape);
      for (int64_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (int64_t c = 0; c < cols; ++c) dot += g.at(r, c) * p.at(r, c);
        for (int64_t c = 0; c < cols; ++c) gz.at(r, c) = p.at(r, c) * (g.at(r, c) - dot);
      }
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < gz.numel(); ++i) gi.at(i) += gz.at(i);
      }
      if (n.inputs.size() > 1 && wants(1)) {
        Array& gm = in_grad(1);
        for (int64_t i = 0; i < gz.numel(); ++i) gm.at(i) += gz.at(i);
      }
      break;
    }
    case Op::kLayerNorm: {
      const Array& x = in_val(0);
      const Array& gain = in_val(1);
      int64_t rows = x.shape[0], cols = x.shape[1];
      for (int64_t r = 0; r < rows; ++r) {
        double mean = n.saved.at(r, 0), inv = n.saved.at(r, 1);
        double sum_gg = 0.0, sum_ggx = 0.0;
        for (int64_t c = 0; c < cols; ++c) {
          double xh = (x.at(r, c) - mean) * inv;
          double gg = g.at(r, c) * gain.at(c);
          sum_gg += gg;
          sum_ggx += gg * xh;
        }
        double inv_n = 1.0 / static_cast<double>(cols);
        if (wants(0)) {
          Array& gx = in_grad(0);
          for (int64_t c = 0; c < cols; ++c) {
            double xh = (x.at(r, c) - mean) * inv;
            double gg = g.at(r, c) * gain.at(c);
            gx.at(r, c) += inv * (gg - inv_n * sum_gg - xh * inv_n * sum_ggx);
          }
        }
        if (wants(1)) {
          Array& gg = in_grad(1);
          for (int64_t c = 0; c < cols; ++c)
            gg.at(c) += g.at(r, c) * (x.at(r, c) - mean) * inv;
        }
        if (wants(2)) {
          Array& gb = in_grad(2);
          for (int64_t c = 0; c < cols; ++c) gb.at(c) += g.at(r, c);
        }
      }
      break;
    }
    case Op::kConcatRows: {
      int64_t cols = n.value.shape[1];
      for (size_t i = 0; i < n.inputs.size(); ++i) {
        if (!wants(static_cast<int>(i))) continue;
        Array& gi = in_grad(static_cast<int>(i));
        int64_t r0 = n.idx[i];
        for (int64_t j = 0; j < gi.numel(); ++j) gi.at(j) += g.at(r0 * cols + j);
      }
      break;
    }
    case Op::kSliceRows: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        int64_t cols = n.value.shape[1];
        for (int64_t j = 0; j < g.numel(); ++j) gi.at(n.c0i * cols + j) += g.at(j);
      }
      break;
    }
    case Op::kSliceCols: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        int64_t rows = n.value.shape[0], out_cols = n.value.shape[1];
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t c = 0; c < out_cols; ++c) gi.at(r, n.c0i + c) += g.at(r, c);
      }
      break;
    }
    case Op::kGatherRows: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        int64_t cols = n.value.shape[1];
        for (size_t i = 0; i < n.idx.size(); ++i)
          for (int64_t c = 0; c < cols; ++c)
            gi.at(n.idx[i], c) += g.at(static_cast<int64_t>(i), c);
      }
      break;
    }
    case Op::kMaxPoolRows: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        int64_t cols = n.value.shape[1];
        for (int64_t c = 0; c < cols; ++c) gi.at(n.idx[static_cast<size_t>(c)], c) += g.at(0, c);
      }
      break;
    }
    case Op::kSumAll: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < gi.numel(); ++i) gi.at(i) += g.at(0);
      }
      break;
    }
    case Op::kMeanAll: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        double s = g.at(0) / static_cast<double>(gi.numel());
        for (int64_t i = 0; i < gi.numel(); ++i) gi.at(i) += s;
      }
      break;
    }
    case Op::kReshape: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i);
      }
      break;
    }
    case Op::kDropout: {
      if (wants(0)) {
        Array& gi = in_grad(0);
        for (int64_t i = 0; i < g.numel(); ++i) gi.at(i) += g.at(i) * n.saved.at(i);
      }
      break;
    }
    case Op::kAttention: {
      const Array& q = in_val(0);
      const Array& k = in_val(1);
      const Array& v = in_val(2);
      int64_t dim = q.shape[1];
      int64_t nq = q.shape[0], nk = k.shape[0];
      int heads = n.heads;
      int64_t hd = dim / heads;
      double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
      bool drop = n.c1i == 1;
      Array* gq = wants(0) ? &in_grad(0) : nullptr;
      Array* gk = wants(1) ? &in_grad(1) : nullptr;
      Array* gv = wants(2) ? &in_grad(2) : nullptr;
      std::vector<double> gp(static_cast<size_t>(nk)), gs(static_cast<size_t>(nk));
      for (int h = 0; h < heads; ++h) {
        int64_t off = h * hd;
        for (int64_t i = 0; i < nq; ++i) {
          const double* go = g.data.data() + i * dim + off;
          const double* p = n.saved.data.data() + (h * nq + i) * nk;
          const double* dm =
              drop ? n.saved.data.data() + ((heads + h) * nq + i) * nk : nullptr;
          // grad wrt dropped probabilities, then undo dropout scaling
          for (int64_t j = 0; j < nk; ++j) {
            const double* vr = v.data.data() + j * dim + off;
            double acc = 0.0;
            for (int64_t c = 0; c < hd; ++c) acc += go[c] * vr[c];
            gp[static_cast<size_t>(j)] = dm ? acc * dm[j] : acc;
          }
          if (gv) {
            for (int64_t j = 0; j < nk; ++j) {
              double w = dm ? p[j] * dm[j] : p[j];
              double* gvr = gv->data.data() + j * dim + off;
              for (int64_t c = 0; c < hd; ++c) gvr[c] += w * go[c];
            }
          }
          double dot = 0.0;
          for (int64_t j = 0; j < nk; ++j) dot += gp[static_cast<size_t>(j)] * p[j];
          for (int64_t j = 0; j < nk; ++j)
            gs[static_cast<size_t>(j)] = p[j] * (gp[static_cast<size_t>(j)] - dot) * inv_sqrt;
          if (gq) {
            double* gqr = gq->data.data() + i * dim + off;
            for (int64_t j = 0; j < nk; ++j) {
              const double* kr = k.data.data() + j * dim + off;
              double w = gs[static_cast<size_t>(j)];
              for (int64_t c = 0; c < hd; ++c) gqr[c] += w * kr[c];
            }
          }
          if (gk) {
            const double* qr = q.data.data() + i * dim + off;
            for (int64_t j = 0; j < nk; ++j) {
              double* gkr = gk->data.data() + j * dim + off;
              double w = gs[static_cast<size_t>(j)];
              for (int64_t c = 0; c < hd; ++c) gkr[c] += w * qr[c];
            }
          }
        }
      }
      break;
    }
  }
}

}  // namespace modeseq
