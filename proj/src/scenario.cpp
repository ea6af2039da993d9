#include "modeseq/scenario.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace modeseq {

using nlohmann::json;

double norm(Vec2 v) { return std::sqrt(v.x * v.x + v.y * v.y); }

double wrap_angle(double a) {
  while (a > M_PI) a -= 2.0 * M_PI;
  while (a <= -M_PI) a += 2.0 * M_PI;
  return a;
}

std::string to_string(AgentClass c) {
  switch (c) {
    case AgentClass::kVehicle: return "vehicle";
    case AgentClass::kPedestrian: return "pedestrian";
    case AgentClass::kCyclist: return "cyclist";
  }
  return "vehicle";
}

AgentClass agent_class_from_string(const std::string& s) {
  if (s == "vehicle") return AgentClass::kVehicle;
  if (s == "pedestrian") return AgentClass::kPedestrian;
  if (s == "cyclist") return AgentClass::kCyclist;
  throw dataset_error("unknown agent_class '" + s + "'");
}

namespace {

// Arc-length parametrized lane: straight approach, circular transition to the
// exit heading, then straight. s=0 is the fork point; negative s runs back
// along the approach.
struct LanePath {
  double turn = 0.0;    // signed exit heading
  double radius = 40.0;

  double arc_len() const { return std::fabs(turn) * radius; }

  void sample(double s, Vec2& p, double& heading) const {
    if (s <= 0.0 || turn == 0.0) {
      p = {s, 0.0};
      heading = 0.0;
      return;
    }
    double a = arc_len();
    double sign = turn > 0.0 ? 1.0 : -1.0;
    if (s <= a) {
      double phi = s / radius;
      p = {radius * std::sin(phi), sign * radius * (1.0 - std::cos(phi))};
      heading = sign * phi;
      return;
    }
    double phi = std::fabs(turn);
    Vec2 end{radius * std::sin(phi), sign * radius * (1.0 - std::cos(phi))};
    double rest = s - a;
    heading = turn;
    p = {end.x + rest * std::cos(turn), end.y + rest * std::sin(turn)};
  }

  Vec2 point(double s) const {
    Vec2 p;
    double h;
    sample(s, p, h);
    return p;
  }

  Polyline to_polyline(double s0, double s1, double spacing, Semantic sem,
                       double lateral_offset = 0.0) const {
    Polyline pl;
    pl.semantic = sem;
    int steps = std::max(1, static_cast<int>(std::ceil((s1 - s0) / spacing)));
    for (int i = 0; i <= steps; ++i) {
      double s = s0 + (s1 - s0) * static_cast<double>(i) / static_cast<double>(steps);
      Vec2 p;
      double h;
      sample(s, p, h);
      p.x += -std::sin(h) * lateral_offset;
      p.y += std::cos(h) * lateral_offset;
      if (pl.points.empty() || !(pl.points.back() == p)) pl.points.push_back(p);
    }
    return pl;
  }
};

struct Frame {
  Vec2 t;
  double rot = 0.0;
  Vec2 apply(Vec2 p) const {
    double c = std::cos(rot), s = std::sin(rot);
    return {c * p.x - s * p.y + t.x, s * p.x + c * p.y + t.y};
  }
};

}  // namespace

Scenario generate_fork_scenario(uint64_t seed, int branches, const std::vector<double>& priors,
                                double approach_speed, int num_neighbors,
                                const ForkOptions& opts) {
  if (branches < 1 || branches > 6)
    throw std::invalid_argument("generate_fork_scenario: branches must be in 1..6");
  if (static_cast<int>(priors.size()) != branches)
    throw std::invalid_argument("generate_fork_scenario: priors size must equal branches");
  double prior_sum = 0.0;
  for (double p : priors) {
    if (p <= 0.0 || p > 1.0)
      throw std::invalid_argument("generate_fork_scenario: priors must lie in (0,1]");
    prior_sum += p;
  }
  if (std::fabs(prior_sum - 1.0) > 1e-9)
    throw std::invalid_argument("generate_fork_scenario: priors must sum to 1");
  if (approach_speed < 0.5 || approach_speed > 20.0)
    throw std::invalid_argument("generate_fork_scenario: approach_speed must be in [0.5, 20]");
  if (num_neighbors < 0) throw std::invalid_argument("generate_fork_scenario: num_neighbors < 0");

  double spread = opts.branch_spread_deg;
  if (spread < 0.0) spread = std::min(150.0, 30.0 * (branches - 1));
  if (branches > 1) {
    double sep = spread / static_cast<double>(branches - 1);
    if (sep < 20.0)
      throw std::runtime_error(
          "generate_fork_scenario: branch exit headings closer than 20 degrees; construction "
          "rejected");
  }

  Rng rng(mix_seed(seed, 0x666f726bULL));
  const int T = opts.history_steps;
  const int Tf = opts.future_steps;
  const double dt = opts.step_dt;
  const double v = approach_speed;

  std::vector<LanePath> lanes(static_cast<size_t>(branches));
  for (int b = 0; b < branches; ++b) {
    double turn = 0.0;
    if (branches > 1) {
      double sep = spread / static_cast<double>(branches - 1);
      turn = (static_cast<double>(b) - 0.5 * (branches - 1)) * sep * M_PI / 180.0;
    }
    lanes[static_cast<size_t>(b)].turn = turn;
  }

  Frame frame;
  if (opts.randomize_frame) {
    frame.t = {rng.uniform(-200.0, 200.0), rng.uniform(-200.0, 200.0)};
    frame.rot = rng.uniform(-M_PI, M_PI);
  }

  const double approach_len = 60.0;
  const double branch_len = v * dt * Tf + 15.0;
  const double focal_back = 4.0;  // focal sits this far before the fork at the last history step
  const double lane_half_width = 3.0;
  const double spacing = 5.0;

  Scenario sc;
  sc.map.push_back(lanes[0].to_polyline(-approach_len, 0.0, spacing, Semantic::kLaneCenter));
  for (int b = 0; b < branches; ++b)
    sc.map.push_back(
        lanes[static_cast<size_t>(b)].to_polyline(0.0, branch_len, spacing, Semantic::kLaneCenter));
  sc.map.push_back(
      lanes[0].to_polyline(-approach_len, 0.0, spacing, Semantic::kBoundary, lane_half_width));
  sc.map.push_back(
      lanes[0].to_polyline(-approach_len, 0.0, spacing, Semantic::kBoundary, -lane_half_width));
  for (Polyline& pl : sc.map)
    for (Vec2& p : pl.points) p = frame.apply(p);

  // branch choice
  double u = rng.uniform();
  int branch = branches - 1;
  double acc = 0.0;
  for (int b = 0; b < branches; ++b) {
    acc += priors[static_cast<size_t>(b)];
    if (u < acc) {
      branch = b;
      break;
    }
  }
  sc.latent_branch = {branch, priors[static_cast<size_t>(branch)]};

  auto track_along = [&](const LanePath& lane, double s_last, double speed) {
    AgentTrack tr;
    tr.positions.resize(static_cast<size_t>(T));
    tr.headings.resize(static_cast<size_t>(T));
    tr.speeds.assign(static_cast<size_t>(T), speed);
    tr.valid.assign(static_cast<size_t>(T), 1);
    for (int t = 0; t < T; ++t) {
      double s = s_last - speed * dt * static_cast<double>(T - 1 - t);
      Vec2 p;
      double h;
      lane.sample(s, p, h);
      tr.positions[static_cast<size_t>(t)] = frame.apply(p);
      tr.headings[static_cast<size_t>(t)] = wrap_angle(h + frame.rot);
    }
    return tr;
  };

  sc.agents.push_back(track_along(lanes[0], -focal_back, v));
  sc.focal_index = 0;

  for (int j = 0; j < num_neighbors; ++j) {
    const LanePath& lane = lanes[static_cast<size_t>(j % branches)];
    double ahead = 18.0 + 14.0 * static_cast<double>(j) + rng.uniform(0.0, 6.0);
    double speed = v * rng.uniform(0.8, 1.2);
    speed = std::min(std::max(speed, 0.5), 20.0);
    sc.agents.push_back(track_along(lane, ahead, speed));
  }

  const LanePath& gt_lane = lanes[static_cast<size_t>(branch)];
  sc.future.positions.resize(static_cast<size_t>(Tf));
  for (int t = 1; t <= Tf; ++t) {
    double s = -focal_back + v * dt * static_cast<double>(t);
    Vec2 p = frame.apply(gt_lane.point(s));
    if (opts.noise_sigma > 0.0) {
      p.x += rng.normal(0.0, opts.noise_sigma);
      p.y += rng.normal(0.0, opts.noise_sigma);
    }
    sc.future.positions[static_cast<size_t>(t - 1)] = p;
  }

  sc.agent_class = AgentClass::kVehicle;
  return sc;
}

namespace {

json vec2_json(Vec2 p) { return json::array({p.x, p.y}); }

Vec2 vec2_from(const json& j, int line, const char* field) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw dataset_error("line " + std::to_string(line) + ": field '" + field +
                        "' must be an [x,y] pair");
  return {j[0].get<double>(), j[1].get<double>()};
}

json scenario_json(const Scenario& sc) {
  json j;
  j["map"] = json::array();
  for (const Polyline& pl : sc.map) {
    json pj;
    pj["points"] = json::array();
    for (Vec2 p : pl.points) pj["points"].push_back(vec2_json(p));
    pj["semantic"] = pl.semantic == Semantic::kLaneCenter ? "lane_center" : "boundary";
    j["map"].push_back(std::move(pj));
  }
  j["agents"] = json::array();
  for (const AgentTrack& a : sc.agents) {
    json aj;
    aj["positions"] = json::array();
    for (Vec2 p : a.positions) aj["positions"].push_back(vec2_json(p));
    aj["headings"] = a.headings;
    aj["speeds"] = a.speeds;
    aj["valid"] = json::array();
    for (uint8_t v : a.valid) aj["valid"].push_back(v != 0);
    j["agents"].push_back(std::move(aj));
  }
  j["focal_index"] = sc.focal_index;
  j["future"] = json::array();
  for (Vec2 p : sc.future.positions) j["future"].push_back(vec2_json(p));
  j["latent_branch"] = {{"index", sc.latent_branch.index}, {"prior", sc.latent_branch.prior}};
  j["agent_class"] = to_string(sc.agent_class);
  return j;
}

template <typename T>
T require(const json& j, const char* field, int line) {
  if (!j.contains(field))
    throw dataset_error("line " + std::to_string(line) + ": missing field '" + field + "'");
  try {
    return j.at(field).get<T>();
  } catch (const json::exception&) {
    throw dataset_error("line " + std::to_string(line) + ": field '" + field + "' has wrong type");
  }
}

Scenario scenario_from_json(const json& j, int line) {
  Scenario sc;
  if (!j.contains("map")) throw dataset_error("line " + std::to_string(line) + ": missing field 'map'");
  for (const json& pj : j.at("map")) {
    Polyline pl;
    if (!pj.contains("points"))
      throw dataset_error("line " + std::to_string(line) + ": missing field 'points'");
    for (const json& pt : pj.at("points")) pl.points.push_back(vec2_from(pt, line, "points"));
    std::string sem = require<std::string>(pj, "semantic", line);
    if (sem == "lane_center")
      pl.semantic = Semantic::kLaneCenter;
    else if (sem == "boundary")
      pl.semantic = Semantic::kBoundary;
    else
      throw dataset_error("line " + std::to_string(line) + ": field 'semantic' has unknown value");
    if (pl.points.size() < 2)
      throw dataset_error("line " + std::to_string(line) + ": field 'points' needs >= 2 entries");
    for (size_t i = 1; i < pl.points.size(); ++i)
      if (pl.points[i] == pl.points[i - 1])
        throw dataset_error("line " + std::to_string(line) +
                            ": field 'points' has repeated consecutive points");
    sc.map.push_back(std::move(pl));
  }
  if (!j.contains("agents"))
    throw dataset_error("line " + std::to_string(line) + ": missing field 'agents'");
  for (const json& aj : j.at("agents")) {
    AgentTrack tr;
    if (!aj.contains("positions"))
      throw dataset_error("line " + std::to_string(line) + ": missing field 'positions'");
    for (const json& pt : aj.at("positions")) tr.positions.push_back(vec2_from(pt, line, "positions"));
    tr.headings = require<std::vector<double>>(aj, "headings", line);
    tr.speeds = require<std::vector<double>>(aj, "speeds", line);
    for (bool b : require<std::vector<bool>>(aj, "valid", line)) tr.valid.push_back(b ? 1 : 0);
    size_t T = tr.positions.size();
    if (tr.headings.size() != T || tr.speeds.size() != T || tr.valid.size() != T)
      throw dataset_error("line " + std::to_string(line) + ": field 'agents' has ragged track");
    if (T == 0 || tr.valid.back() == 0)
      throw dataset_error("line " + std::to_string(line) +
                          ": field 'valid' must mark the last step observed");
    for (double s : tr.speeds)
      if (s < 0.0) throw dataset_error("line " + std::to_string(line) + ": field 'speeds' negative");
    sc.agents.push_back(std::move(tr));
  }
  sc.focal_index = require<int>(j, "focal_index", line);
  if (sc.focal_index < 0 || sc.focal_index >= static_cast<int>(sc.agents.size()))
    throw dataset_error("line " + std::to_string(line) + ": field 'focal_index' out of range");
  if (!j.contains("future"))
    throw dataset_error("line " + std::to_string(line) + ": missing field 'future'");
  for (const json& pt : j.at("future")) sc.future.positions.push_back(vec2_from(pt, line, "future"));
  if (sc.future.positions.empty())
    throw dataset_error("line " + std::to_string(line) + ": field 'future' is empty");
  if (!j.contains("latent_branch"))
    throw dataset_error("line " + std::to_string(line) + ": missing field 'latent_branch'");
  sc.latent_branch.index = require<int>(j.at("latent_branch"), "index", line);
  sc.latent_branch.prior = require<double>(j.at("latent_branch"), "prior", line);
  if (sc.latent_branch.prior <= 0.0 || sc.latent_branch.prior > 1.0)
    throw dataset_error("line " + std::to_string(line) + ": field 'prior' must be in (0,1]");
  sc.agent_class = agent_class_from_string(require<std::string>(j, "agent_class", line));
  return sc;
}

}  // namespace

void write_dataset(const std::vector<Scenario>& scenarios, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw dataset_error("cannot open '" + path + "' for writing");
  for (const Scenario& sc : scenarios) out << scenario_json(sc).dump() << "\n";
  out.flush();
  if (!out) throw dataset_error("write to '" + path + "' failed");
}

std::vector<Scenario> read_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dataset_error("cannot open '" + path + "' for reading");
  std::vector<Scenario> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw dataset_error("line " + std::to_string(line_no) + ": malformed record (" +
                          std::string(e.what()) + ")");
    }
    Scenario sc = scenario_from_json(j, line_no);
    sc.id = static_cast<int64_t>(out.size());
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace modeseq
