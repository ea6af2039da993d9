#include "modeseq/training.hpp"

#include <cmath>

#include "modeseq/metrics.hpp"
#include "modeseq/threadpool.hpp"

namespace modeseq {

double scale_factor(double speed) {
  if (speed < 0.0) throw std::invalid_argument("scale_factor: negative speed");
  if (speed < 1.4) return 0.5;
  if (speed < 11.0) return 0.5 + 0.5 * (speed - 1.4) / (11.0 - 1.4);
  return 1.0;
}

double linear_threshold(double tick) {
  if (tick <= 0.0) throw std::invalid_argument("linear_threshold: tick must be positive");
  return tick / 30.0;
}

std::pair<double, double> velocity_thresholds(double speed, double tick) {
  if (tick <= 0.0) throw std::invalid_argument("velocity_thresholds: tick must be positive");
  double base = tick <= 30.0 ? tick / 30.0 : 0.04 * tick - 0.2;
  double lat = scale_factor(speed) * base;
  return {lat, 2.0 * lat};
}

bool is_match(const std::vector<Vec2>& traj, const std::vector<Vec2>& gt,
              const MatchCriterion& c) {
  if (traj.size() != gt.size()) throw std::invalid_argument("is_match: length mismatch");
  double ch = std::cos(c.heading), sh = std::sin(c.heading);
  for (size_t i = 0; i < traj.size(); ++i) {
    double tick = static_cast<double>(i + 1) * c.step_duration * 10.0;
    Vec2 e = traj[i] - gt[i];
    if (c.family == MatchFamily::kLinear) {
      if (norm(e) > linear_threshold(tick) * c.threshold_scale) return false;
    } else {
      double lon = ch * e.x + sh * e.y;
      double lat = -sh * e.x + ch * e.y;
      auto [glat, glon] = velocity_thresholds(c.speed, tick);
      if (std::fabs(lat) > glat * c.threshold_scale || std::fabs(lon) > glon * c.threshold_scale)
        return false;
    }
  }
  return true;
}

double average_displacement(const std::vector<Vec2>& traj, const std::vector<Vec2>& gt) {
  if (traj.size() != gt.size() || traj.empty())
    throw std::invalid_argument("average_displacement: bad lengths");
  double s = 0.0;
  for (size_t i = 0; i < traj.size(); ++i) s += norm(traj[i] - gt[i]);
  return s / static_cast<double>(traj.size());
}

double final_displacement(const std::vector<Vec2>& traj, const std::vector<Vec2>& gt) {
  if (traj.size() != gt.size() || traj.empty())
    throw std::invalid_argument("final_displacement: bad lengths");
  return norm(traj.back() - gt.back());
}

LabelAssignment assign_labels(const std::vector<std::vector<Vec2>>& trajs,
                              const std::vector<Vec2>& gt, const MatchCriterion& c,
                              Strategy strategy, IgnoreVariant variant) {
  if (trajs.empty()) throw std::invalid_argument("assign_labels: no modes");
  const int k = static_cast<int>(trajs.size());
  LabelAssignment out;
  for (int i = 0; i < k; ++i)
    if (is_match(trajs[static_cast<size_t>(i)], gt, c)) out.match_set.push_back(i);

  int ade_argmin = 0;
  double best = average_displacement(trajs[0], gt);
  for (int i = 1; i < k; ++i) {
    double d = average_displacement(trajs[static_cast<size_t>(i)], gt);
    if (d < best) {
      best = d;
      ade_argmin = i;
    }
  }
  out.positive = (strategy == Strategy::kEmta && !out.match_set.empty()) ? out.match_set.front()
                                                                         : ade_argmin;
  out.labels.assign(static_cast<size_t>(k), ModeLabel::kNegative);
  out.labels[static_cast<size_t>(out.positive)] = ModeLabel::kPositive;
  if (variant == IgnoreVariant::kOtherMatches) {
    for (int i : out.match_set)
      if (i != out.positive) out.labels[static_cast<size_t>(i)] = ModeLabel::kIgnored;
  } else if (variant == IgnoreVariant::kEarlyMismatches) {
    for (int i = 0; i < out.positive; ++i) out.labels[static_cast<size_t>(i)] = ModeLabel::kIgnored;
  }
  return out;
}

Var regression_loss(Tape& t, const ModeVars& mv, int positive, const Array& target) {
  Var mu = t.slice_rows(mv.loc, positive, positive + 1);
  Var b = t.slice_rows(mv.scale, positive, positive + 1);
  Var err = t.abs(t.sub(mu, t.leaf(target)));
  Var nll = t.add(t.div(err, b), t.add_const(t.log(b), std::log(2.0)));
  return t.mean_all(nll);
}

Var confidence_loss(Tape& t, const ModeVars& mv, const std::vector<ModeLabel>& labels) {
  const int64_t k = static_cast<int64_t>(labels.size());
  Array pos_mask({k, 1}), neg_mask({k, 1});
  int64_t counted = 0;
  for (int64_t i = 0; i < k; ++i) {
    switch (labels[static_cast<size_t>(i)]) {
      case ModeLabel::kPositive:
        pos_mask.at(i, 0) = 1.0;
        ++counted;
        break;
      case ModeLabel::kNegative:
        neg_mask.at(i, 0) = 1.0;
        ++counted;
        break;
      case ModeLabel::kIgnored:
        break;
    }
  }
  Var p = mv.conf;
  Var z = mv.conf_logit;
  // focal terms from logits: log p = -softplus(-z), log(1-p) = -softplus(z)
  Var pos_term = t.mul(t.square(t.rsub_const(p, 1.0)), t.softplus(t.scale(z, -1.0)));
  Var neg_term = t.mul(t.square(p), t.softplus(z));
  Var combo = t.add(t.mul(pos_term, t.leaf(pos_mask)), t.mul(neg_term, t.leaf(neg_mask)));
  double inv = counted > 0 ? 1.0 / static_cast<double>(counted) : 0.0;
  return t.scale(t.sum_all(combo), inv);
}

MatchCriterion scenario_criterion(const Scenario& sc, MatchFamily family, double step_duration) {
  MatchCriterion c;
  c.family = family;
  c.speed = sc.focal_speed();
  c.heading = sc.focal_heading();
  c.step_duration = step_duration;
  return c;
}

Array ground_truth_target(const Scenario& sc, const FrameTransform& frame) {
  int64_t tf = static_cast<int64_t>(sc.future.positions.size());
  Array target({1, 2 * tf});
  for (int64_t i = 0; i < tf; ++i) {
    Vec2 l = frame.to_local(sc.future.positions[static_cast<size_t>(i)]);
    target.at(0, 2 * i) = l.x;
    target.at(0, 2 * i + 1) = l.y;
  }
  return target;
}

namespace {

std::vector<std::vector<Vec2>> local_trajectories(const Array& loc) {
  int64_t k = loc.shape[0];
  int64_t tf = loc.shape[1] / 2;
  std::vector<std::vector<Vec2>> out(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) {
    out[static_cast<size_t>(i)].resize(static_cast<size_t>(tf));
    for (int64_t s = 0; s < tf; ++s)
      out[static_cast<size_t>(i)][static_cast<size_t>(s)] = {loc.at(i, 2 * s),
                                                             loc.at(i, 2 * s + 1)};
  }
  return out;
}

std::vector<Vec2> local_ground_truth(const Array& target) {
  int64_t tf = target.shape[1] / 2;
  std::vector<Vec2> out(static_cast<size_t>(tf));
  for (int64_t s = 0; s < tf; ++s)
    out[static_cast<size_t>(s)] = {target.at(0, 2 * s), target.at(0, 2 * s + 1)};
  return out;
}

struct SampleResult {
  std::vector<Array> grads;
  double loss = 0.0, reg = 0.0, conf = 0.0;
};

SampleResult process_sample(const Model& model, const Scenario& sc, const TrainConfig& cfg,
                            int64_t epoch, int64_t sample_index) {
  Tape tape(true, mix_seed(cfg.seed, static_cast<uint64_t>(epoch) + 1,
                           static_cast<uint64_t>(sample_index)),
            cfg.dropout);
  ParamBinder pb(tape, model.store);
  ForwardVars fv = model_forward(pb, model, sc, cfg.modes, cfg.rearrange);
  Array target = ground_truth_target(sc, fv.scene.frame);
  std::vector<Vec2> gt = local_ground_truth(target);
  MatchCriterion crit;
  crit.family = cfg.match_family;
  crit.speed = sc.focal_speed();
  crit.heading = 0.0;  // trajectories and ground truth are in the focal frame
  crit.step_duration = cfg.match_step_duration;

  Var total;
  SampleResult res;
  for (const ModeVars& mv : fv.decode.layers) {
    LabelAssignment la =
        assign_labels(local_trajectories(tape.val(mv.loc)), gt, crit, cfg.strategy,
                      cfg.ignore_variant);
    Var reg = regression_loss(tape, mv, la.positive, target);
    Var conf = confidence_loss(tape, mv, la.labels);
    res.reg += tape.val(reg).at(0);
    res.conf += tape.val(conf).at(0);
    Var layer_loss = tape.add(reg, conf);
    total = total.valid() ? tape.add(total, layer_loss) : layer_loss;
  }
  res.loss = tape.val(total).at(0);
  tape.backward(total);
  res.grads = tape.take_param_grads(model.store.size());
  return res;
}

MetricsReport eval_metrics(const Model& model, const std::vector<Scenario>& eval_set,
                           const TrainConfig& cfg, int jobs) {
  std::vector<EvalRecord> records(eval_set.size());
  parallel_for(static_cast<int64_t>(eval_set.size()), jobs, [&](int64_t i) {
    const Scenario& sc = eval_set[static_cast<size_t>(i)];
    Prediction pred = predict(model, sc, cfg.modes, cfg.rearrange);
    EvalRecord& r = records[static_cast<size_t>(i)];
    r.pred.scenario_id = sc.id;
    r.pred.trajectories = std::move(pred.trajectories);
    r.pred.confidences = std::move(pred.confidences);
    r.pred.agent_class = sc.agent_class;
    r.ground_truth = sc.future.positions;
    r.focal_speed = sc.focal_speed();
    r.focal_heading = sc.focal_heading();
  });
  return evaluate_records(records, cfg.match_family, cfg.match_step_duration);
}

}  // namespace

void train(Model& model, const std::vector<Scenario>& train_set,
           const std::vector<Scenario>& eval_set, const TrainConfig& cfg, int jobs,
           TrainState& state, const std::function<void(const EpochStats&)>& on_epoch) {
  if (train_set.empty()) throw std::invalid_argument("train: empty dataset");
  for (const Scenario& sc : train_set)
    if (static_cast<int>(sc.future.positions.size()) != model.cfg.future_steps)
      throw std::invalid_argument("train: dataset horizon does not match the model");

  state.opt.base_lr = cfg.lr;
  state.opt.weight_decay = cfg.weight_decay;

  const int64_t n = static_cast<int64_t>(train_set.size());
  const int64_t batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = batches_per_epoch * cfg.epochs;

  for (int64_t epoch = state.next_epoch; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng shuffle_rng(mix_seed(cfg.seed, 0x65706f6368ULL, static_cast<uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    double epoch_loss = 0.0, epoch_reg = 0.0, epoch_conf = 0.0;
    int64_t batch_count = 0;
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      int64_t bsz = std::min<int64_t>(cfg.batch_size, n - start);
      int64_t batch_id = state.opt.step_count;
      std::vector<SampleResult> results(static_cast<size_t>(bsz));
      try {
        parallel_for(bsz, jobs, [&](int64_t i) {
          int64_t idx = order[static_cast<size_t>(start + i)];
          results[static_cast<size_t>(i)] = process_sample(
              model, train_set[static_cast<size_t>(idx)], cfg, epoch, idx);
        });
      } catch (const numeric_error& e) {
        throw numeric_error("batch " + std::to_string(batch_id) + ": " + e.what());
      }

      std::vector<Array> grads(model.store.size());
      double batch_loss = 0.0, batch_reg = 0.0, batch_conf = 0.0;
      for (const SampleResult& r : results) {
        batch_loss += r.loss;
        batch_reg += r.reg;
        batch_conf += r.conf;
        for (size_t p = 0; p < grads.size(); ++p) {
          if (r.grads[p].numel() == 0) continue;
          if (grads[p].numel() == 0) {
            grads[p] = r.grads[p];
          } else {
            for (int64_t j = 0; j < grads[p].numel(); ++j) grads[p].at(j) += r.grads[p].at(j);
          }
        }
      }
      double inv = 1.0 / static_cast<double>(bsz);
      for (Array& g : grads)
        for (double& v : g.data) v = round_real(v * inv);
      batch_loss *= inv;
      if (!std::isfinite(batch_loss))
        throw numeric_error("batch " + std::to_string(batch_id) + ": loss diverged");

      clip_global_norm(grads, 5.0);
      double lr = cosine_lr(state.opt.step_count, total_steps, cfg.lr);
      try {
        state.opt.step(model.store, grads, lr);
      } catch (const numeric_error& e) {
        throw numeric_error("batch " + std::to_string(batch_id) + ": " + e.what());
      }

      epoch_loss += batch_loss;
      epoch_reg += batch_reg * inv;
      epoch_conf += batch_conf * inv;
      ++batch_count;
    }

    EpochStats stats;
    stats.epoch = static_cast<int>(epoch);
    stats.train_loss = epoch_loss / static_cast<double>(batch_count);
    stats.reg_loss = epoch_reg / static_cast<double>(batch_count);
    stats.conf_loss = epoch_conf / static_cast<double>(batch_count);
    bool do_eval = !eval_set.empty() && cfg.eval_cadence > 0 &&
                   ((epoch + 1) % cfg.eval_cadence == 0 || epoch + 1 == cfg.epochs);
    if (do_eval) {
      stats.eval = eval_metrics(model, eval_set, cfg, jobs);
      stats.eval_fresh = true;
    }
    state.next_epoch = epoch + 1;
    if (on_epoch) on_epoch(stats);
  }
}

}  // namespace modeseq
