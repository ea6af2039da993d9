#include "modeseq/metrics.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

namespace modeseq {

using nlohmann::json;

void write_predictions(const std::vector<PredictionRecord>& preds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw dataset_error("cannot open '" + path + "' for writing");
  for (const PredictionRecord& p : preds) {
    json j;
    j["scenario_id"] = p.scenario_id;
    j["trajectories"] = json::array();
    for (const auto& traj : p.trajectories) {
      json tj = json::array();
      for (Vec2 pt : traj) tj.push_back(json::array({pt.x, pt.y}));
      j["trajectories"].push_back(std::move(tj));
    }
    j["confidences"] = p.confidences;
    j["agent_class"] = to_string(p.agent_class);
    out << j.dump() << "\n";
  }
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dataset_error("cannot open '" + path + "' for reading");
  std::vector<PredictionRecord> out;
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
    PredictionRecord p;
    try {
      p.scenario_id = j.at("scenario_id").get<int64_t>();
      for (const json& tj : j.at("trajectories")) {
        std::vector<Vec2> traj;
        for (const json& pt : tj) traj.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
        p.trajectories.push_back(std::move(traj));
      }
      p.confidences = j.at("confidences").get<std::vector<double>>();
      p.agent_class = agent_class_from_string(j.at("agent_class").get<std::string>());
    } catch (const json::exception& e) {
      throw dataset_error("line " + std::to_string(line_no) + ": bad prediction record (" +
                          std::string(e.what()) + ")");
    }
    if (p.confidences.size() != p.trajectories.size())
      throw dataset_error("line " + std::to_string(line_no) +
                          ": field 'confidences' does not match trajectory count");
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<EvalRecord> make_eval_records(const std::vector<PredictionRecord>& preds,
                                          const std::vector<Scenario>& scenarios) {
  std::unordered_map<int64_t, const Scenario*> by_id;
  for (const Scenario& sc : scenarios) by_id[sc.id] = &sc;
  std::vector<EvalRecord> out;
  out.reserve(preds.size());
  for (const PredictionRecord& p : preds) {
    auto it = by_id.find(p.scenario_id);
    if (it == by_id.end())
      throw dataset_error("prediction references unknown scenario id " +
                          std::to_string(p.scenario_id));
    EvalRecord r;
    r.pred = p;
    r.ground_truth = it->second->future.positions;
    r.focal_speed = it->second->focal_speed();
    r.focal_heading = it->second->focal_heading();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

MatchCriterion record_criterion(const EvalRecord& r, MatchFamily family, double step_duration) {
  MatchCriterion c;
  c.family = family;
  c.speed = r.focal_speed;
  c.heading = r.focal_heading;
  c.step_duration = step_duration;
  return c;
}

}  // namespace

double miss_rate(const std::vector<EvalRecord>& records, MatchFamily family,
                 double step_duration) {
  if (records.empty()) throw std::invalid_argument("miss_rate: no records");
  int64_t misses = 0;
  for (const EvalRecord& r : records) {
    MatchCriterion c = record_criterion(r, family, step_duration);
    bool hit = false;
    for (const auto& traj : r.pred.trajectories)
      if (is_match(traj, r.ground_truth, c)) {
        hit = true;
        break;
      }
    if (!hit) ++misses;
  }
  return static_cast<double>(misses) / static_cast<double>(records.size());
}

std::pair<double, double> min_displacement(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("min_displacement: no records");
  double ade_sum = 0.0, fde_sum = 0.0;
  for (const EvalRecord& r : records) {
    double best_ade = 1e300, best_fde = 1e300;
    for (const auto& traj : r.pred.trajectories) {
      best_ade = std::min(best_ade, average_displacement(traj, r.ground_truth));
      best_fde = std::min(best_fde, final_displacement(traj, r.ground_truth));
    }
    ade_sum += best_ade;
    fde_sum += best_fde;
  }
  double n = static_cast<double>(records.size());
  return {ade_sum / n, fde_sum / n};
}

double brier_min_fde(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw std::invalid_argument("brier_min_fde: no records");
  double sum = 0.0;
  for (const EvalRecord& r : records) {
    double best = 1e300;
    size_t best_mode = 0;
    for (size_t k = 0; k < r.pred.trajectories.size(); ++k) {
      double fde = final_displacement(r.pred.trajectories[k], r.ground_truth);
      if (fde < best) {
        best = fde;
        best_mode = k;
      }
    }
    double p = r.pred.confidences[best_mode];
    sum += best + (1.0 - p) * (1.0 - p);
  }
  return sum / static_cast<double>(records.size());
}

double average_precision(const ApInstance& inst, bool soft) {
  const int64_t n_records = static_cast<int64_t>(inst.records.size());
  if (n_records == 0) throw std::invalid_argument("average_precision: no records");

  struct Entry {
    double conf;
    bool matched;
    int64_t record;
  };
  std::vector<Entry> pool;
  for (size_t r = 0; r < inst.records.size(); ++r)
    for (const auto& [conf, matched] : inst.records[r])
      pool.push_back({conf, matched, static_cast<int64_t>(r)});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Entry& a, const Entry& b) { return a.conf > b.conf; });

  // P/R points at matching entries, keeping the last point of each plateau.
  std::vector<char> has_tp(static_cast<size_t>(n_records), 0);
  std::vector<std::pair<double, double>> points;  // (recall, precision)
  int64_t tp = 0, rank = 0;
  for (const Entry& e : pool) {
    bool is_tp = false;
    if (e.matched) {
      if (!has_tp[static_cast<size_t>(e.record)]) {
        has_tp[static_cast<size_t>(e.record)] = 1;
        is_tp = true;
      } else if (soft) {
        continue;  // duplicate match leaves the ranking entirely
      }
    }
    ++rank;
    if (is_tp) ++tp;
    if (e.matched) {
      double recall = static_cast<double>(tp) / static_cast<double>(n_records);
      double precision = static_cast<double>(tp) / static_cast<double>(rank);
      if (!points.empty() && points.back().first == recall)
        points.back().second = precision;
      else
        points.emplace_back(recall, precision);
    }
  }
  if (points.empty()) return 0.0;

  double ap = 0.0, envelope = 0.0;
  for (size_t i = points.size(); i-- > 0;) {
    envelope = std::max(envelope, points[i].second);
    double prev_recall = i > 0 ? points[i - 1].first : 0.0;
    ap += (points[i].first - prev_recall) * envelope;
  }
  return ap;
}

double mean_average_precision(const std::vector<EvalRecord>& records, MatchFamily family,
                              double step_duration, bool soft) {
  if (records.empty()) throw std::invalid_argument("mean_average_precision: no records");
  ApInstance inst;
  inst.records.resize(records.size());
  for (size_t r = 0; r < records.size(); ++r) {
    MatchCriterion c = record_criterion(records[r], family, step_duration);
    for (size_t k = 0; k < records[r].pred.trajectories.size(); ++k)
      inst.records[r].emplace_back(
          records[r].pred.confidences[k],
          is_match(records[r].pred.trajectories[k], records[r].ground_truth, c));
  }
  return average_precision(inst, soft);
}

MetricsReport evaluate_records(const std::vector<EvalRecord>& records, MatchFamily family,
                               double step_duration) {
  MetricsReport rep;
  rep.miss_rate = miss_rate(records, family, step_duration);
  rep.mean_ap = mean_average_precision(records, family, step_duration, false);
  rep.soft_mean_ap = mean_average_precision(records, family, step_duration, true);
  auto [ade, fde] = min_displacement(records);
  rep.min_ade = ade;
  rep.min_fde = fde;
  rep.brier_min_fde = brier_min_fde(records);
  return rep;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<std::pair<int, MetricsReport>>& rows_by_modes) {
  std::ofstream out(path);
  if (!out) throw dataset_error("cannot open '" + path + "' for writing");
  out << "modes,MR,mAP,soft_mAP,minADE,minFDE,b_minFDE\n";
  out << std::setprecision(17);
  for (const auto& [modes, r] : rows_by_modes)
    out << modes << "," << r.miss_rate << "," << r.mean_ap << "," << r.soft_mean_ap << ","
        << r.min_ade << "," << r.min_fde << "," << r.brier_min_fde << "\n";
}

std::string metrics_summary(const MetricsReport& r) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "MR " << r.miss_rate << "  mAP " << r.mean_ap << "  soft mAP " << r.soft_mean_ap
     << "  minADE " << r.min_ade << " m  minFDE " << r.min_fde << " m  b-minFDE "
     << r.brier_min_fde << " m";
  return os.str();
}

}  // namespace modeseq
