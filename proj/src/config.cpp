#include "ts/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace ts {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

template <typename T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream is(v);
  T out;
  is >> out;
  if (is.fail() || !is.eof())
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "'");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  if (key == "model.kind") { variant_from_name(value); model_kind = value; }
  else if (key == "model.loss_mode") { loss_mode_from_name(value); model_loss_mode = value; }
  else if (key == "model.metric_hidden") metric_hidden = parse_num<int>(value, key);
  else if (key == "loss.lambda") loss_lambda = parse_num<double>(value, key);
  else if (key == "loss.beta") loss_beta = parse_num<double>(value, key);
  else if (key == "loss.q") loss_q = parse_num<double>(value, key);
  else if (key == "loss.normalize_features") loss_normalize_features = parse_bool(value, key);
  else if (key == "train.lr") train_lr = parse_num<double>(value, key);
  else if (key == "train.momentum") train_momentum = parse_num<double>(value, key);
  else if (key == "train.l2") train_l2 = parse_num<double>(value, key);
  else if (key == "train.batch_size") train_batch_size = parse_num<int>(value, key);
  else if (key == "train.epochs") train_epochs = parse_num<int>(value, key);
  else if (key == "train.seed") train_seed = parse_num<uint64_t>(value, key);
  else if (key == "data.dir") data_dir = value;
  else if (key == "data.synth_images") data_synth_images = parse_num<int>(value, key);
  else if (key == "data.synth_size") data_synth_size = parse_num<int>(value, key);
  else if (key == "data.synth_transform") { transform_from_name(value); data_synth_transform = value; }
  else if (key == "data.seed") data_seed = parse_num<uint64_t>(value, key);
  else throw ConfigError("unknown config key '" + key + "'");
}

std::string ExperimentConfig::get(const std::string& key) const {
  if (key == "model.kind") return model_kind;
  if (key == "model.loss_mode") return model_loss_mode;
  if (key == "model.metric_hidden") return std::to_string(metric_hidden);
  if (key == "loss.lambda") return fmt(loss_lambda);
  if (key == "loss.beta") return fmt(loss_beta);
  if (key == "loss.q") return fmt(loss_q);
  if (key == "loss.normalize_features") return loss_normalize_features ? "true" : "false";
  if (key == "train.lr") return fmt(train_lr);
  if (key == "train.momentum") return fmt(train_momentum);
  if (key == "train.l2") return fmt(train_l2);
  if (key == "train.batch_size") return std::to_string(train_batch_size);
  if (key == "train.epochs") return std::to_string(train_epochs);
  if (key == "train.seed") return std::to_string(train_seed);
  if (key == "data.dir") return data_dir;
  if (key == "data.synth_images") return std::to_string(data_synth_images);
  if (key == "data.synth_size") return std::to_string(data_synth_size);
  if (key == "data.synth_transform") return data_synth_transform;
  if (key == "data.seed") return std::to_string(data_seed);
  throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig ExperimentConfig::parse_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::parse_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_text(ss.str());
}

std::string ExperimentConfig::serialize() const {
  static const char* keys[] = {
      "model.kind",       "model.loss_mode", "model.metric_hidden",
      "loss.lambda",      "loss.beta",       "loss.q",
      "loss.normalize_features",
      "train.lr",         "train.momentum",  "train.l2",
      "train.batch_size", "train.epochs",    "train.seed",
      "data.dir",         "data.synth_images", "data.synth_size",
      "data.synth_transform", "data.seed"};
  std::ostringstream os;
  for (const char* k : keys) os << k << " = " << get(k) << "\n";
  return os.str();
}

void ExperimentConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open '" + path + "' for writing");
  f << serialize();
}

TrainConfig ExperimentConfig::train_config() const {
  TrainConfig cfg;
  cfg.lr = train_lr;
  cfg.momentum = train_momentum;
  cfg.l2 = train_l2;
  cfg.batch_size = train_batch_size;
  cfg.epochs = resolved_epochs();
  cfg.seed = train_seed;
  cfg.loss.lambda = loss_lambda;
  cfg.loss.beta = loss_beta;
  cfg.loss.q = loss_q;
  cfg.loss.normalize_features = loss_normalize_features;
  return cfg;
}

uint32_t ExperimentConfig::hash() const {
  uint32_t h = 2166136261u;
  for (unsigned char c : serialize()) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

}  // namespace ts
