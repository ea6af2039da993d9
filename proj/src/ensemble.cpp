#include "modeseq/ensemble.hpp"

#include <algorithm>
#include <unordered_map>

namespace modeseq {

namespace {

struct Cluster {
  std::vector<std::vector<Vec2>> member_trajs;
  std::vector<double> member_confs;
  std::vector<Vec2> fused;
  double conf_sum = 0.0;

  void refresh() {
    size_t tf = member_trajs.front().size();
    fused.assign(tf, Vec2{});
    conf_sum = 0.0;
    for (double c : member_confs) conf_sum += c;
    for (size_t m = 0; m < member_trajs.size(); ++m) {
      double w = member_confs[m] / conf_sum;
      for (size_t s = 0; s < tf; ++s) fused[s] = fused[s] + w * member_trajs[m][s];
    }
  }
};

}  // namespace

PredictionRecord fuse(const std::vector<PredictionRecord>& per_model, const FusionConfig& cfg,
                      const MatchCriterion& base_criterion, FusionStats* stats) {
  if (per_model.empty()) throw std::invalid_argument("fuse: no model outputs");
  const int64_t n_models = static_cast<int64_t>(per_model.size());
  size_t horizon = 0;
  for (const PredictionRecord& p : per_model) {
    if (p.scenario_id != per_model.front().scenario_id)
      throw std::invalid_argument("fuse: records for different scenarios");
    for (const auto& traj : p.trajectories) {
      if (horizon == 0) horizon = traj.size();
      if (traj.size() != horizon) throw std::invalid_argument("fuse: inconsistent horizons");
    }
  }

  MatchCriterion crit = base_criterion;
  crit.threshold_scale = base_criterion.threshold_scale * cfg.factor(per_model.front().agent_class);

  struct Entry {
    double conf;
    int64_t model, mode;
  };
  std::vector<Entry> pool;
  for (int64_t m = 0; m < n_models; ++m)
    for (size_t k = 0; k < per_model[static_cast<size_t>(m)].trajectories.size(); ++k)
      pool.push_back({per_model[static_cast<size_t>(m)].confidences[k], m,
                      static_cast<int64_t>(k)});
  std::stable_sort(pool.begin(), pool.end(),
                   [](const Entry& a, const Entry& b) { return a.conf > b.conf; });

  std::vector<Cluster> clusters;
  for (const Entry& e : pool) {
    const auto& traj = per_model[static_cast<size_t>(e.model)].trajectories[static_cast<size_t>(e.mode)];
    Cluster* home = nullptr;
    for (Cluster& c : clusters)
      if (is_match(traj, c.fused, crit)) {
        home = &c;
        break;
      }
    if (!home) {
      clusters.emplace_back();
      home = &clusters.back();
    }
    home->member_trajs.push_back(traj);
    home->member_confs.push_back(e.conf);
    home->refresh();
  }

  if (stats)
    for (const Cluster& c : clusters)
      stats->cluster_sizes.push_back(static_cast<int>(c.member_trajs.size()));

  std::vector<int64_t> order(clusters.size());
  std::vector<double> fused_conf(clusters.size());
  for (size_t i = 0; i < clusters.size(); ++i) {
    order[i] = static_cast<int64_t>(i);
    fused_conf[i] = std::min(1.0, clusters[i].conf_sum / static_cast<double>(n_models));
  }
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return fused_conf[static_cast<size_t>(a)] > fused_conf[static_cast<size_t>(b)];
  });

  PredictionRecord out;
  out.scenario_id = per_model.front().scenario_id;
  out.agent_class = per_model.front().agent_class;
  int64_t keep = std::min<int64_t>(cfg.max_modes, static_cast<int64_t>(clusters.size()));
  for (int64_t i = 0; i < keep; ++i) {
    const Cluster& c = clusters[static_cast<size_t>(order[static_cast<size_t>(i)])];
    out.trajectories.push_back(c.fused);
    out.confidences.push_back(fused_conf[static_cast<size_t>(order[static_cast<size_t>(i)])]);
  }
  return out;
}

std::vector<PredictionRecord> fuse_predictions(
    const std::vector<std::vector<PredictionRecord>>& model_outputs, const FusionConfig& cfg,
    const std::vector<Scenario>& scenarios, double step_duration, FusionStats* stats) {
  if (model_outputs.empty()) throw std::invalid_argument("fuse_predictions: no inputs");
  const size_t n = model_outputs.front().size();
  for (const auto& preds : model_outputs) {
    if (preds.size() != n) throw std::invalid_argument("fuse_predictions: record count mismatch");
    for (size_t i = 0; i < n; ++i)
      if (preds[i].scenario_id != model_outputs.front()[i].scenario_id)
        throw dataset_error("scenario id mismatch across prediction files: id " +
                            std::to_string(preds[i].scenario_id));
  }
  std::unordered_map<int64_t, const Scenario*> by_id;
  for (const Scenario& sc : scenarios) by_id[sc.id] = &sc;

  std::vector<PredictionRecord> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    std::vector<PredictionRecord> group;
    group.reserve(model_outputs.size());
    for (const auto& preds : model_outputs) group.push_back(preds[i]);
    auto it = by_id.find(group.front().scenario_id);
    if (it == by_id.end())
      throw dataset_error("prediction references unknown scenario id " +
                          std::to_string(group.front().scenario_id));
    MatchCriterion c;
    c.family = MatchFamily::kVelocityAware;
    c.speed = it->second->focal_speed();
    c.heading = it->second->focal_heading();
    c.step_duration = step_duration;
    out.push_back(fuse(group, cfg, c, stats));
  }
  return out;
}

}  // namespace modeseq
