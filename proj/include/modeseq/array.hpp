#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace modeseq {

// Global scalar mode. f32 keeps every stored value representable in single
// precision (compute happens in double, results are rounded); f64 is used for
// gradient checks.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);
double round_real(double v);

struct shape_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major array of doubles with an arbitrary shape.
struct Array {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Array() = default;
  explicit Array(std::vector<int64_t> shp, double fill = 0.0);

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t ndim() const { return static_cast<int64_t>(shape.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.empty() ? 0 : numel() / shape[0]; }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  double at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Array& o) const { return shape == o.shape; }
  bool all_finite() const;

  static Array zeros(std::vector<int64_t> shp) { return Array(std::move(shp), 0.0); }
  static Array full(std::vector<int64_t> shp, double v) { return Array(std::move(shp), v); }
  static Array from(std::vector<int64_t> shp, std::vector<double> values);
};

std::string shape_str(const std::vector<int64_t>& s);

// Deterministic RNG pinned to a fixed algorithm so generated datasets and
// parameter initializations are byte-stable across toolchains.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64();
  double uniform();                 // [0, 1)
  double uniform(double lo, double hi);
  double normal();                  // standard normal, Box-Muller
  double normal(double mean, double sigma) { return mean + sigma * normal(); }
  int64_t uniform_int(int64_t n);   // [0, n)
  void shuffle(std::vector<int64_t>& v);
};

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0);

// C = A(m,k) * B(k,n), accumulating into C.
void matmul_nn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C = A(m,k) * B(n,k)^T
void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);
// C = A(k,m)^T * B(k,n)
void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

}  // namespace modeseq
