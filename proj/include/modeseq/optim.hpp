#pragma once

#include "modeseq/nn.hpp"

namespace modeseq {

// Decoupled-decay Adam over a ParamStore. Moments live in the store entries so
// checkpoints can carry them.
struct AdamW {
  double base_lr = 5e-4;
  double weight_decay = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t step_count = 0;

  // One update with the given per-step learning rate. `grads` is indexed like
  // the store; missing gradients (zero-size arrays) count as zero.
  void step(ParamStore& ps, const std::vector<Array>& grads, double lr);
};

// Scales gradients in place so their global L2 norm is at most `max_norm`.
// Returns the pre-clip norm.
double clip_global_norm(std::vector<Array>& grads, double max_norm);

// Cosine annealing from base_lr at step 0 to 0 at total_steps.
double cosine_lr(int64_t step, int64_t total_steps, double base_lr);

}  // namespace modeseq
