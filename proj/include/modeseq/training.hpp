#pragma once

#include <functional>

#include "modeseq/metrics_types.hpp"
#include "modeseq/model.hpp"
#include "modeseq/optim.hpp"

namespace modeseq {

enum class MatchFamily { kLinear, kVelocityAware };
enum class Strategy { kEmta, kWta };
enum class IgnoreVariant { kNone, kOtherMatches, kEarlyMismatches };
enum class ModeLabel { kPositive, kNegative, kIgnored };

// Match thresholds. The threshold formulas take benchmark ticks (0.1 s) as
// their argument; `step_duration` maps a trajectory's step index onto that
// axis, so step i of a trajectory is judged at tick (i+1)*step_duration/0.1.
struct MatchCriterion {
  MatchFamily family = MatchFamily::kVelocityAware;
  double speed = 0.0;          // focal speed at the last observed step (m/s)
  double heading = 0.0;        // longitudinal axis for the lateral split (rad)
  double step_duration = 0.5;  // seconds per trajectory step
  double threshold_scale = 1.0;
};

// Speed-dependent factor applied to the velocity-aware thresholds.
double scale_factor(double speed);
// Distance threshold of the single-threshold family at a given tick.
double linear_threshold(double tick);
// (lateral, longitudinal) thresholds of the velocity-aware family.
std::pair<double, double> velocity_thresholds(double speed, double tick);

bool is_match(const std::vector<Vec2>& traj, const std::vector<Vec2>& gt,
              const MatchCriterion& c);

double average_displacement(const std::vector<Vec2>& traj, const std::vector<Vec2>& gt);
double final_displacement(const std::vector<Vec2>& traj, const std::vector<Vec2>& gt);

struct LabelAssignment {
  std::vector<int> match_set;  // ascending mode indices
  int positive = 0;
  std::vector<ModeLabel> labels;
};

LabelAssignment assign_labels(const std::vector<std::vector<Vec2>>& trajs,
                              const std::vector<Vec2>& gt, const MatchCriterion& c,
                              Strategy strategy, IgnoreVariant variant);

// Laplace negative log-likelihood of the positive mode, averaged over steps
// and coordinates. `target` is [1, 2*Tf] in the focal frame.
Var regression_loss(Tape& t, const ModeVars& mv, int positive, const Array& target);
// Binary focal loss (gamma 2) over non-ignored modes, mean-normalized.
Var confidence_loss(Tape& t, const ModeVars& mv, const std::vector<ModeLabel>& labels);

struct TrainConfig {
  Strategy strategy = Strategy::kEmta;
  IgnoreVariant ignore_variant = IgnoreVariant::kNone;
  bool rearrange = true;
  int modes = 6;   // K
  int layers = 6;  // L
  int dim = 128;   // D
  int epochs = 30;
  int batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 0.1;
  double dropout = 0.1;
  uint64_t seed = 1;
  int heads = 8;
  MatchFamily match_family = MatchFamily::kVelocityAware;
  double match_step_duration = 0.5;
  int eval_cadence = 1;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0, reg_loss = 0.0, conf_loss = 0.0;
  MetricsReport eval;
  bool eval_fresh = false;
};

struct TrainState {
  AdamW opt;
  int64_t next_epoch = 0;
};

// Per-sample forward/backward on worker tapes, fixed-order gradient
// reduction, global-norm clip at 5, AdamW with cosine decay. Deterministic
// for a given config and seed; `on_epoch` fires after each epoch.
void train(Model& model, const std::vector<Scenario>& train_set,
           const std::vector<Scenario>& eval_set, const TrainConfig& cfg, int jobs,
           TrainState& state, const std::function<void(const EpochStats&)>& on_epoch = {});

MatchCriterion scenario_criterion(const Scenario& sc, MatchFamily family, double step_duration);

// Ground truth mapped to the focal frame as a [1, 2*Tf] loss target.
Array ground_truth_target(const Scenario& sc, const FrameTransform& frame);

}  // namespace modeseq
