#include "modeseq/array.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace modeseq {

namespace {
Precision g_precision = Precision::f32;
}

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

double round_real(double v) {
  return g_precision == Precision::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

Array::Array(std::vector<int64_t> shp, double fill) : shape(std::move(shp)) {
  int64_t n = 1;
  for (int64_t e : shape) {
    if (e < 0) throw shape_error("negative extent in shape " + shape_str(shape));
    n *= e;
  }
  data.assign(static_cast<size_t>(n), fill);
}

bool Array::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Array Array::from(std::vector<int64_t> shp, std::vector<double> values) {
  Array a;
  a.shape = std::move(shp);
  int64_t n = 1;
  for (int64_t e : a.shape) n *= e;
  if (n != static_cast<int64_t>(values.size()))
    throw shape_error("value count does not match shape " + shape_str(a.shape));
  a.data = std::move(values);
  return a;
}

std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

uint64_t Rng::next_u64() {
  // splitmix64
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

void Rng::shuffle(std::vector<int64_t>& v) {
  for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
    int64_t j = uniform_int(i + 1);
    std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
  }
}

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c) {
  Rng r(a ^ 0x6a09e667f3bcc909ULL);
  r.state ^= r.next_u64() + b;
  r.state ^= r.next_u64() + c;
  return r.next_u64();
}

void matmul_nn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = b + p * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void matmul_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < k; ++i) {
    const double* ai = a + i * m;
    const double* bi = b + i * n;
    for (int64_t p = 0; p < m; ++p) {
      const double av = ai[p];
      double* cp = c + p * n;
      for (int64_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace modeseq
