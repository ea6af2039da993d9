#pragma once

#include "modeseq/optim.hpp"

namespace modeseq {

struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Versioned binary: magic "MSEQ1", dtype byte, JSON manifest (names, shapes,
// training state, config echo), then raw little-endian blobs for every
// parameter value followed by its optimizer moments.
void save_checkpoint(const std::string& path, const ParamStore& ps, const AdamW& opt,
                     int64_t epoch, const std::string& config_echo);

struct LoadedCheckpoint {
  AdamW opt;
  int64_t epoch = 0;
  std::string config_echo;
};

// Fills `ps` (already shaped by model construction) from the file; names and
// shapes must match the manifest exactly.
LoadedCheckpoint load_checkpoint(const std::string& path, ParamStore& ps);

// Reads only the embedded config echo.
std::string read_checkpoint_config(const std::string& path);

}  // namespace modeseq
