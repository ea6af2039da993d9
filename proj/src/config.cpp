#include "modeseq/config.hpp"

#include <fstream>
#include <sstream>

namespace modeseq {

Strategy strategy_from_string(const std::string& s) {
  if (s == "emta") return Strategy::kEmta;
  if (s == "wta") return Strategy::kWta;
  throw config_error("unknown strategy '" + s + "'");
}

IgnoreVariant ignore_variant_from_string(const std::string& s) {
  if (s == "none") return IgnoreVariant::kNone;
  if (s == "other_matches") return IgnoreVariant::kOtherMatches;
  if (s == "early_mismatches") return IgnoreVariant::kEarlyMismatches;
  throw config_error("unknown ignore_variant '" + s + "'");
}

MatchFamily match_family_from_string(const std::string& s) {
  if (s == "velocity_aware") return MatchFamily::kVelocityAware;
  if (s == "linear") return MatchFamily::kLinear;
  throw config_error("unknown match_family '" + s + "'");
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t;
  t.strategy = strategy_from_string(strategy);
  t.ignore_variant = ignore_variant_from_string(ignore_variant);
  t.rearrange = rearrange;
  t.modes = K;
  t.layers = L;
  t.dim = D;
  t.epochs = epochs;
  t.batch_size = batch_size;
  t.lr = lr;
  t.weight_decay = weight_decay;
  t.dropout = dropout;
  t.seed = seed;
  t.heads = heads;
  t.match_family = match_family_from_string(match_family);
  t.match_step_duration = match_step_duration;
  t.eval_cadence = eval_cadence;
  return t;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.dim = D;
  m.heads = heads;
  m.layer_count = L;
  m.modes = K;
  m.future_steps = future_steps;
  m.dropout = dropout;
  return m;
}

void RunConfig::validate() const {
  strategy_from_string(strategy);
  ignore_variant_from_string(ignore_variant);
  match_family_from_string(match_family);
  if (precision != "f32" && precision != "f64")
    throw config_error("precision must be f32 or f64");
  if (K < 1 || L < 1 || D < 1) throw config_error("K, L, D must be positive");
  if (heads < 1 || D % heads != 0) throw config_error("heads must divide D");
  if (epochs < 1 || batch_size < 1) throw config_error("epochs and batch_size must be positive");
  if (lr <= 0.0) throw config_error("lr must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw config_error("dropout must be in [0,1)");
  if (match_step_duration <= 0.0) throw config_error("match_step_duration must be positive");
  if (history_steps < 1 || future_steps < 1)
    throw config_error("history_steps and future_steps must be positive");
  for (int m : eval_modes)
    if (m < K) throw config_error("eval_modes entries must be >= K");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw config_error("key '" + key + "' expects true/false");
}

std::vector<int> parse_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    size_t eq = s.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(s.substr(0, eq));
    std::string val = trim(s.substr(eq + 1));
    try {
      if (key == "strategy") cfg.strategy = val;
      else if (key == "ignore_variant") cfg.ignore_variant = val;
      else if (key == "rearrange") cfg.rearrange = parse_bool(val, key);
      else if (key == "K") cfg.K = std::stoi(val);
      else if (key == "L") cfg.L = std::stoi(val);
      else if (key == "D") cfg.D = std::stoi(val);
      else if (key == "epochs") cfg.epochs = std::stoi(val);
      else if (key == "batch_size") cfg.batch_size = std::stoi(val);
      else if (key == "lr") cfg.lr = std::stod(val);
      else if (key == "weight_decay") cfg.weight_decay = std::stod(val);
      else if (key == "dropout") cfg.dropout = std::stod(val);
      else if (key == "seed") cfg.seed = std::stoull(val);
      else if (key == "heads") cfg.heads = std::stoi(val);
      else if (key == "match_family") cfg.match_family = val;
      else if (key == "match_step_duration") cfg.match_step_duration = std::stod(val);
      else if (key == "precision") cfg.precision = val;
      else if (key == "history_steps") cfg.history_steps = std::stoi(val);
      else if (key == "future_steps") cfg.future_steps = std::stoi(val);
      else if (key == "train_dataset") cfg.train_dataset = val;
      else if (key == "eval_dataset") cfg.eval_dataset = val;
      else if (key == "out_dir") cfg.out_dir = val;
      else if (key == "eval_cadence") cfg.eval_cadence = std::stoi(val);
      else if (key == "eval_modes") cfg.eval_modes = parse_int_list(val);
      else throw config_error("unknown config key '" + key + "'");
    } catch (const config_error&) {
      throw;
    } catch (const std::exception&) {
      throw config_error("config line " + std::to_string(line_no) + ": bad value for '" + key +
                         "'");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_echo(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "strategy = " << cfg.strategy << "\n";
  os << "ignore_variant = " << cfg.ignore_variant << "\n";
  os << "rearrange = " << (cfg.rearrange ? "true" : "false") << "\n";
  os << "K = " << cfg.K << "\n";
  os << "L = " << cfg.L << "\n";
  os << "D = " << cfg.D << "\n";
  os << "epochs = " << cfg.epochs << "\n";
  os << "batch_size = " << cfg.batch_size << "\n";
  os << "lr = " << cfg.lr << "\n";
  os << "weight_decay = " << cfg.weight_decay << "\n";
  os << "dropout = " << cfg.dropout << "\n";
  os << "seed = " << cfg.seed << "\n";
  os << "heads = " << cfg.heads << "\n";
  os << "match_family = " << cfg.match_family << "\n";
  os << "match_step_duration = " << cfg.match_step_duration << "\n";
  os << "precision = " << cfg.precision << "\n";
  os << "history_steps = " << cfg.history_steps << "\n";
  os << "future_steps = " << cfg.future_steps << "\n";
  os << "train_dataset = " << cfg.train_dataset << "\n";
  os << "eval_dataset = " << cfg.eval_dataset << "\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "eval_cadence = " << cfg.eval_cadence << "\n";
  os << "eval_modes = ";
  for (size_t i = 0; i < cfg.eval_modes.size(); ++i)
    os << (i ? "," : "") << cfg.eval_modes[i];
  os << "\n";
  return os.str();
}

}  // namespace modeseq
