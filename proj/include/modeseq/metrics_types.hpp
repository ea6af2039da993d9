#pragma once

#include "modeseq/scenario.hpp"

namespace modeseq {

struct PredictionRecord {
  int64_t scenario_id = 0;
  std::vector<std::vector<Vec2>> trajectories;  // [K][Tf], global frame
  std::vector<double> confidences;              // [K]
  AgentClass agent_class = AgentClass::kVehicle;
};

struct EvalRecord {
  PredictionRecord pred;
  std::vector<Vec2> ground_truth;
  double focal_speed = 0.0;
  double focal_heading = 0.0;
};

struct MetricsReport {
  double miss_rate = 0.0;
  double mean_ap = 0.0;
  double soft_mean_ap = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double brier_min_fde = 0.0;
};

}  // namespace modeseq
