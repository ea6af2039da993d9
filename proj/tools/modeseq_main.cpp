#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <thread>

#include <CLI11.hpp>

#include "modeseq/checkpoint.hpp"
#include "modeseq/config.hpp"
#include "modeseq/ensemble.hpp"
#include "modeseq/metrics.hpp"
#include "modeseq/svgplot.hpp"
#include "modeseq/threadpool.hpp"

namespace fs = std::filesystem;
using namespace modeseq;

namespace {

struct usage_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void apply_precision(const std::string& p) {
  set_precision(p == "f64" ? Precision::f64 : Precision::f32);
}

int default_jobs() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

// ---------------------------------------------------------------- gen

int cmd_gen(int count, int branches, std::vector<double> priors, double speed, int neighbors,
            uint64_t seed, double noise, int history_steps, int future_steps, double step_dt,
            const std::string& out_path) {
  if (count < 0) throw usage_error("--count must be >= 0");
  if (branches < 1 || branches > 6) throw usage_error("--branches must be in 1..6");
  if (priors.empty()) {
    priors.assign(static_cast<size_t>(branches), 1.0 / static_cast<double>(branches));
    double rest = 1.0;
    for (size_t i = 0; i + 1 < priors.size(); ++i) rest -= priors[i];
    priors.back() = rest;
  }
  if (static_cast<int>(priors.size()) != branches)
    throw usage_error("--priors must list one probability per branch");
  double sum = 0.0;
  for (double p : priors) sum += p;
  if (std::fabs(sum - 1.0) > 1e-9) throw usage_error("--priors must sum to 1");

  ForkOptions opts;
  opts.history_steps = history_steps;
  opts.future_steps = future_steps;
  opts.step_dt = step_dt;
  opts.noise_sigma = noise;

  std::vector<Scenario> scenarios;
  scenarios.reserve(static_cast<size_t>(count));
  std::vector<int64_t> branch_counts(static_cast<size_t>(branches), 0);
  for (int i = 0; i < count; ++i) {
    Scenario sc = generate_fork_scenario(mix_seed(seed, static_cast<uint64_t>(i)), branches,
                                         priors, speed, neighbors, opts);
    sc.id = i;
    branch_counts[static_cast<size_t>(sc.latent_branch.index)] += 1;
    scenarios.push_back(std::move(sc));
  }
  write_dataset(scenarios, out_path);

  std::cout << "wrote " << count << " scenarios to " << out_path << "\n";
  if (count > 0) {
    std::cout << "branch frequencies:\n";
    for (int b = 0; b < branches; ++b)
      std::cout << "  branch " << b << ": "
                << static_cast<double>(branch_counts[static_cast<size_t>(b)]) /
                       static_cast<double>(count)
                << " (prior " << priors[static_cast<size_t>(b)] << ")\n";
  }
  return 0;
}

// ---------------------------------------------------------------- train

void write_log_header(std::ofstream& log, const RunConfig& cfg) {
  log << "# strategy=" << cfg.strategy << " ignore_variant=" << cfg.ignore_variant
      << " rearrange=" << (cfg.rearrange ? "true" : "false") << " seed=" << cfg.seed << "\n";
  log << "epoch,train_loss,reg_loss,conf_loss,MR,mAP,soft_mAP,minADE,minFDE,b_minFDE\n";
}

int cmd_train(const std::string& config_path, const std::string& resume_path, int jobs,
              const std::string& out_override, uint64_t seed_override, bool has_seed) {
  RunConfig cfg;
  if (!resume_path.empty() && config_path.empty()) {
    cfg = parse_config_text(read_checkpoint_config(resume_path));
  } else {
    cfg = parse_config_file(config_path);
  }
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (has_seed) cfg.seed = seed_override;
  cfg.validate();
  apply_precision(cfg.precision);

  if (cfg.train_dataset.empty() || !fs::exists(cfg.train_dataset))
    throw usage_error("train_dataset '" + cfg.train_dataset + "' does not exist");
  std::vector<Scenario> train_set = read_dataset(cfg.train_dataset);
  std::vector<Scenario> eval_set;
  if (!cfg.eval_dataset.empty()) {
    if (!fs::exists(cfg.eval_dataset))
      throw usage_error("eval_dataset '" + cfg.eval_dataset + "' does not exist");
    eval_set = read_dataset(cfg.eval_dataset);
  }

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream echo(fs::path(cfg.out_dir) / "config.echo");
    echo << config_echo(cfg);
  }

  Model model = build_model(cfg.model_config(), cfg.seed);
  TrainState state;
  bool resuming = !resume_path.empty();
  if (resuming) {
    LoadedCheckpoint lc = load_checkpoint(resume_path, model.store);
    state.opt = lc.opt;
    state.next_epoch = lc.epoch;
  }

  std::string log_path = (fs::path(cfg.out_dir) / "train_log.csv").string();
  std::ofstream log(log_path, resuming ? std::ios::app : std::ios::out);
  if (!resuming) write_log_header(log, cfg);

  std::string ckpt_path = (fs::path(cfg.out_dir) / "checkpoint.bin").string();
  MetricsReport last_eval;
  train(model, train_set, eval_set, cfg.train_config(), jobs, state,
        [&](const EpochStats& s) {
          if (s.eval_fresh) last_eval = s.eval;
          log << s.epoch << "," << std::setprecision(17) << s.train_loss << "," << s.reg_loss
              << "," << s.conf_loss << "," << last_eval.miss_rate << "," << last_eval.mean_ap
              << "," << last_eval.soft_mean_ap << "," << last_eval.min_ade << ","
              << last_eval.min_fde << "," << last_eval.brier_min_fde << "\n";
          log.flush();
          save_checkpoint(ckpt_path, model.store, state.opt, state.next_epoch,
                          config_echo(cfg));
          std::cout << "epoch " << s.epoch << " loss " << std::setprecision(8) << s.train_loss;
          if (s.eval_fresh) std::cout << "  [" << metrics_summary(s.eval) << "]";
          std::cout << "\n" << std::flush;
        });
  std::cout << "checkpoint: " << ckpt_path << "\nlog: " << log_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- eval

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path,
             std::vector<int> modes, bool rearrange_override, bool no_rearrange, int jobs,
             const std::string& out_dir) {
  if (!fs::exists(ckpt_path)) throw usage_error("checkpoint '" + ckpt_path + "' does not exist");
  if (!fs::exists(dataset_path)) throw usage_error("dataset '" + dataset_path + "' does not exist");
  RunConfig cfg = parse_config_text(read_checkpoint_config(ckpt_path));
  apply_precision(cfg.precision);
  Model model = build_model(cfg.model_config(), cfg.seed);
  load_checkpoint(ckpt_path, model.store);

  if (modes.empty()) modes = {cfg.K};
  for (int m : modes)
    if (m < 1) throw usage_error("--modes entries must be >= 1");
  bool rearrange = cfg.rearrange;
  if (no_rearrange) rearrange = false;
  if (rearrange_override) rearrange = true;

  std::vector<Scenario> scenarios = read_dataset(dataset_path);
  fs::create_directories(out_dir);

  MatchFamily family = match_family_from_string(cfg.match_family);
  std::vector<std::pair<int, MetricsReport>> rows;
  for (int m : modes) {
    std::vector<PredictionRecord> preds(scenarios.size());
    parallel_for(static_cast<int64_t>(scenarios.size()), jobs, [&](int64_t i) {
      const Scenario& sc = scenarios[static_cast<size_t>(i)];
      Prediction p = predict(model, sc, m, rearrange);
      preds[static_cast<size_t>(i)] = {sc.id, std::move(p.trajectories),
                                       std::move(p.confidences), sc.agent_class};
    });
    std::string pred_path =
        (fs::path(out_dir) / ("predictions_K" + std::to_string(m) + ".jsonl")).string();
    write_predictions(preds, pred_path);
    std::vector<EvalRecord> records = make_eval_records(preds, scenarios);
    MetricsReport rep = evaluate_records(records, family, cfg.match_step_duration);
    rows.emplace_back(m, rep);
    std::cout << "K'=" << m << "  " << metrics_summary(rep) << "\n";
  }

  std::string csv_path = (fs::path(out_dir) / "metrics.csv").string();
  write_metrics_csv(csv_path, rows);

  PlotSeries mr{"MR", {}, {}}, fde{"minFDE", {}, {}};
  for (const auto& [m, rep] : rows) {
    mr.x.push_back(m);
    mr.y.push_back(rep.miss_rate);
    fde.x.push_back(m);
    fde.y.push_back(rep.min_fde);
  }
  write_line_plot_svg((fs::path(out_dir) / "modes_sweep.svg").string(),
                      "metrics vs decoding steps", "decoding steps", {{mr}, {fde}});
  std::cout << "metrics: " << csv_path << "\n";
  return 0;
}

// ---------------------------------------------------------------- ensemble

int cmd_ensemble(const std::vector<std::string>& pred_paths, const std::string& dataset_path,
                 const std::string& classes_arg, int max_modes, double step_duration,
                 const std::string& out_path) {
  if (pred_paths.empty()) throw usage_error("need at least one prediction file");
  if (!fs::exists(dataset_path)) throw usage_error("dataset '" + dataset_path + "' does not exist");
  FusionConfig fc;
  fc.max_modes = max_modes;
  if (!classes_arg.empty()) {
    std::stringstream ss(classes_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      size_t eq = item.find('=');
      if (eq == std::string::npos) throw usage_error("--classes expects name=factor pairs");
      std::string name = item.substr(0, eq);
      double f = std::stod(item.substr(eq + 1));
      if (name == "vehicle") fc.vehicle_factor = f;
      else if (name == "pedestrian") fc.pedestrian_factor = f;
      else if (name == "cyclist") fc.cyclist_factor = f;
      else throw usage_error("--classes has unknown class '" + name + "'");
    }
  }

  std::vector<std::vector<PredictionRecord>> model_outputs;
  for (const std::string& p : pred_paths) {
    if (!fs::exists(p)) throw usage_error("prediction file '" + p + "' does not exist");
    model_outputs.push_back(read_predictions(p));
  }
  std::vector<Scenario> scenarios = read_dataset(dataset_path);

  FusionStats stats;
  std::vector<PredictionRecord> fused =
      fuse_predictions(model_outputs, fc, scenarios, step_duration, &stats);
  write_predictions(fused, out_path);

  std::map<int, int> hist;
  for (int s : stats.cluster_sizes) hist[s] += 1;
  std::cout << "fused " << model_outputs.size() << " model(s) over " << fused.size()
            << " scenarios -> " << out_path << "\ncluster sizes:\n";
  for (const auto& [size, count] : hist)
    std::cout << "  " << size << " member(s): " << count << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sequential mode decoding for multimodal trajectory prediction"};
  app.require_subcommand(1);

  uint64_t seed = 1;
  int jobs = default_jobs();
  std::string out;
  app.add_option("--seed", seed, "global seed");
  app.add_option("--jobs", jobs, "worker count");
  app.add_option("--out", out, "output directory or file");
  bool has_seed = false;
  app.callback([&] { has_seed = app.count("--seed") > 0; });

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic fork dataset");
  int g_count = 100, g_branches = 3, g_neighbors = 4, g_hist = 11, g_fut = 30;
  double g_speed = 12.0, g_noise = 0.15, g_dt = 0.5;
  std::vector<double> g_priors;
  gen->add_option("--count", g_count, "number of scenarios");
  gen->add_option("--branches", g_branches, "fork branch count (1..6)");
  gen->add_option("--priors", g_priors, "comma-separated branch priors")->delimiter(',');
  gen->add_option("--speed", g_speed, "approach speed, m/s");
  gen->add_option("--neighbors", g_neighbors, "neighbor agents");
  gen->add_option("--noise", g_noise, "future position noise sigma, m");
  gen->add_option("--history-steps", g_hist, "observed steps");
  gen->add_option("--future-steps", g_fut, "future steps");
  gen->add_option("--dt", g_dt, "seconds per step");

  // train
  auto* tr = app.add_subcommand("train", "train a model from a config file");
  std::string t_config, t_resume;
  tr->add_option("--config", t_config, "key = value config file");
  tr->add_option("--resume", t_resume, "checkpoint to resume from");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
  std::string e_ckpt, e_dataset;
  std::vector<int> e_modes;
  bool e_rearrange = false, e_no_rearrange = false;
  ev->add_option("checkpoint", e_ckpt, "checkpoint file")->required();
  ev->add_option("dataset", e_dataset, "dataset file")->required();
  ev->add_option("--modes", e_modes, "decoding step counts")->delimiter(',');
  ev->add_flag("--rearrange", e_rearrange, "force between-layer reordering on");
  ev->add_flag("--no-rearrange", e_no_rearrange, "disable between-layer reordering");

  // ensemble
  auto* en = app.add_subcommand("ensemble", "fuse prediction files");
  std::vector<std::string> n_preds;
  std::string n_dataset, n_classes;
  int n_max_modes = 6;
  double n_dt = 0.5;
  en->add_option("predictions", n_preds, "prediction files")->required();
  en->add_option("--dataset", n_dataset, "scenario dataset (criterion inputs)")->required();
  en->add_option("--classes", n_classes, "per-class factors, e.g. vehicle=1.5,cyclist=1.4");
  en->add_option("--max-modes", n_max_modes, "output mode cap");
  en->add_option("--dt", n_dt, "seconds per trajectory step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      std::string path = out.empty() ? "dataset.jsonl" : out;
      return cmd_gen(g_count, g_branches, g_priors, g_speed, g_neighbors, seed, g_noise, g_hist,
                     g_fut, g_dt, path);
    }
    if (tr->parsed()) {
      if (t_config.empty() && t_resume.empty())
        throw usage_error("train needs --config or --resume");
      return cmd_train(t_config, t_resume, jobs, out, seed, has_seed);
    }
    if (ev->parsed()) {
      std::string dir = out.empty() ? "eval_out" : out;
      return cmd_eval(e_ckpt, e_dataset, e_modes, e_rearrange, e_no_rearrange, jobs, dir);
    }
    if (en->parsed()) {
      std::string path = out.empty() ? "fused.jsonl" : out;
      return cmd_ensemble(n_preds, n_dataset, n_classes, n_max_modes, n_dt, path);
    }
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const dataset_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const checkpoint_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
