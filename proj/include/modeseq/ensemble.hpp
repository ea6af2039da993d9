#pragma once

#include "modeseq/metrics.hpp"

namespace modeseq {

struct FusionConfig {
  double vehicle_factor = 1.5;
  double pedestrian_factor = 1.4;
  double cyclist_factor = 1.4;
  int max_modes = 6;

  double factor(AgentClass c) const {
    switch (c) {
      case AgentClass::kVehicle: return vehicle_factor;
      case AgentClass::kPedestrian: return pedestrian_factor;
      case AgentClass::kCyclist: return cyclist_factor;
    }
    return vehicle_factor;
  }
};

struct FusionStats {
  std::vector<int> cluster_sizes;  // before the top-K cut
};

// Greedy confidence-ordered clustering of pooled modes: a mode joins the
// first cluster whose running confidence-weighted mean it matches under the
// class-scaled velocity-aware thresholds, else opens a new cluster. Fused
// confidence is the member sum over the model count, capped at 1.
PredictionRecord fuse(const std::vector<PredictionRecord>& per_model, const FusionConfig& cfg,
                      const MatchCriterion& base_criterion, FusionStats* stats = nullptr);

// Joins same-id records across model outputs; ids must agree across files.
std::vector<PredictionRecord> fuse_predictions(
    const std::vector<std::vector<PredictionRecord>>& model_outputs, const FusionConfig& cfg,
    const std::vector<Scenario>& scenarios, double step_duration, FusionStats* stats = nullptr);

}  // namespace modeseq
