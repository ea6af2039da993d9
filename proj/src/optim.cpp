#include "modeseq/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace modeseq {

void AdamW::step(ParamStore& ps, const std::vector<Array>& grads, double lr) {
  if (grads.size() != ps.entries.size())
    throw std::invalid_argument("gradient vector does not match parameter store");
  for (const Array& g : grads)
    if (!g.all_finite()) throw numeric_error("non-finite gradient; step aborted");

  step_count += 1;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (size_t i = 0; i < ps.entries.size(); ++i) {
    ParamStore::Entry& e = ps.entries[i];
    const Array& g = grads[i];
    bool has_grad = g.numel() > 0;
    if (has_grad && !g.same_shape(e.value))
      throw shape_error("gradient shape mismatch for " + e.name);
    for (int64_t j = 0; j < e.value.numel(); ++j) {
      double p = e.value.at(j) * (1.0 - lr * weight_decay);
      double gj = has_grad ? g.at(j) : 0.0;
      double m = beta1 * e.m.at(j) + (1.0 - beta1) * gj;
      double v = beta2 * e.v.at(j) + (1.0 - beta2) * gj * gj;
      p -= lr * (m / bc1) / (std::sqrt(v / bc2) + eps);
      e.m.at(j) = round_real(m);
      e.v.at(j) = round_real(v);
      e.value.at(j) = round_real(p);
    }
  }
}

double clip_global_norm(std::vector<Array>& grads, double max_norm) {
  double sq = 0.0;
  for (const Array& g : grads)
    for (double v : g.data) sq += v * v;
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    double s = max_norm / norm;
    for (Array& g : grads)
      for (double& v : g.data) v = round_real(v * s);
  }
  return norm;
}

double cosine_lr(int64_t step, int64_t total_steps, double base_lr) {
  if (total_steps <= 0) throw std::invalid_argument("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step out of range");
  return base_lr * 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)));
}

}  // namespace modeseq
