#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "modeseq/array.hpp"

namespace modeseq {

struct Vec2 {
  double x = 0.0, y = 0.0;
  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) { return a.x == b.x && a.y == b.y; }
};

double norm(Vec2 v);
double wrap_angle(double a);  // to (-pi, pi]

enum class AgentClass { kVehicle, kPedestrian, kCyclist };
enum class Semantic { kLaneCenter, kBoundary };

std::string to_string(AgentClass c);
AgentClass agent_class_from_string(const std::string& s);

struct Polyline {
  std::vector<Vec2> points;
  Semantic semantic = Semantic::kLaneCenter;
  bool operator==(const Polyline&) const = default;
};

struct AgentTrack {
  std::vector<Vec2> positions;
  std::vector<double> headings;
  std::vector<double> speeds;
  std::vector<uint8_t> valid;
  bool operator==(const AgentTrack&) const = default;
};

struct GroundTruth {
  std::vector<Vec2> positions;
  bool operator==(const GroundTruth&) const = default;
};

struct LatentBranch {
  int index = 0;
  double prior = 1.0;
  bool operator==(const LatentBranch&) const = default;
};

struct Scenario {
  int64_t id = 0;
  std::vector<Polyline> map;
  std::vector<AgentTrack> agents;
  int focal_index = 0;
  GroundTruth future;
  LatentBranch latent_branch;
  AgentClass agent_class = AgentClass::kVehicle;
  bool operator==(const Scenario&) const = default;

  const AgentTrack& focal() const { return agents[static_cast<size_t>(focal_index)]; }
  double focal_speed() const { return focal().speeds.back(); }
  double focal_heading() const { return focal().headings.back(); }
  Vec2 focal_position() const { return focal().positions.back(); }
};

struct ForkOptions {
  int history_steps = 11;
  int future_steps = 30;
  double step_dt = 0.5;
  double noise_sigma = 0.15;
  double branch_spread_deg = -1.0;  // <0: 30 deg per gap, capped at 150 total
  bool randomize_frame = true;      // random global translation/rotation
};

// One approach lane splitting into `branches` arc-connected exits. The focal
// agent approaches the fork; the ground truth follows a branch sampled from
// `priors` at constant speed with per-step positional noise. Neighbors ride
// the branch lanes ahead of the fork.
Scenario generate_fork_scenario(uint64_t seed, int branches, const std::vector<double>& priors,
                                double approach_speed, int num_neighbors,
                                const ForkOptions& opts = {});

struct dataset_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_dataset(const std::vector<Scenario>& scenarios, const std::string& path);
std::vector<Scenario> read_dataset(const std::string& path);

}  // namespace modeseq
