#pragma once

#include <string>
#include <vector>

#include "modeseq/training.hpp"

namespace modeseq {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat key=value run configuration. Unknown keys are errors.
struct RunConfig {
  std::string strategy = "emta";        // emta | wta
  std::string ignore_variant = "none";  // none | other_matches | early_mismatches
  bool rearrange = true;
  int K = 6;
  int L = 6;
  int D = 128;
  int epochs = 30;
  int batch_size = 32;
  double lr = 5e-4;
  double weight_decay = 0.1;
  double dropout = 0.1;
  uint64_t seed = 1;
  int heads = 8;
  std::string match_family = "velocity_aware";  // velocity_aware | linear
  double match_step_duration = 0.5;
  std::string precision = "f32";  // f32 | f64
  int history_steps = 11;
  int future_steps = 30;
  std::string train_dataset;
  std::string eval_dataset;
  std::string out_dir = "out";
  int eval_cadence = 1;
  std::vector<int> eval_modes = {6};  // inference-time step counts

  TrainConfig train_config() const;
  ModelConfig model_config() const;
  void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string config_echo(const RunConfig& cfg);

Strategy strategy_from_string(const std::string& s);
IgnoreVariant ignore_variant_from_string(const std::string& s);
MatchFamily match_family_from_string(const std::string& s);

}  // namespace modeseq
