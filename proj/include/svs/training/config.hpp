#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "svs/core/error.hpp"
#include "svs/model/config.hpp"

namespace svs::training {

// Run-level knobs plus the model architecture. Loadable from `key = value`
// text; unknown keys are rejected so typos fail loudly.
struct TrainConfig {
  model::ModelConfig model;
  std::string corpus_dir;
  std::string out_dir = "runs/default";
  double lr = 2e-4;
  int batch_size = 8;
  int max_steps = 2000;
  uint64_t seed = 1;
  bool use_adversarial = true;
  double lambda_adv = 0.1;
  int checkpoint_every = 500;
  int segment_cap = 256;
  int patches_per_item = 1;
  double grad_clip = 1.0;

  // The model carries the adversarial switch/weight so they travel inside
  // checkpoints; the training keys are the single source when parsing.
  model::ModelConfig model_config() const {
    model::ModelConfig m = model;
    m.use_adversarial = use_adversarial;
    m.adversarial_weight = lambda_adv;
    return m;
  }

  void validate() const {
    model_config().validate();
    if (lr <= 0) throw InvalidConfig("lr must be positive");
    if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
    if (max_steps < 1) throw InvalidConfig("max_steps must be >= 1");
    if (lambda_adv < 0) throw InvalidConfig("lambda_adv must be >= 0");
    if (checkpoint_every < 1) throw InvalidConfig("checkpoint_every must be >= 1");
    if (segment_cap < 32) throw InvalidConfig("segment_cap must be >= 32");
    if (patches_per_item < 0) throw InvalidConfig("patches_per_item must be >= 0");
    if (grad_clip <= 0) throw InvalidConfig("grad_clip must be positive");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_num(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw InvalidConfig("bad numeric value for " + key + ": '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidConfig("bad boolean value for " + key + ": '" + v + "'");
}

}  // namespace detail

inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  using detail::parse_bool;
  using detail::parse_num;
  auto as_int = [&](const std::string& v) { return static_cast<int>(parse_num(key, v)); };

  if (key == "channels") cfg.model.channels = as_int(value);
  else if (key == "embed_dim") cfg.model.embed_dim = as_int(value);
  else if (key == "n_mels") cfg.model.n_mels = as_int(value);
  else if (key == "n_linear_bins") cfg.model.n_linear_bins = as_int(value);
  else if (key == "time_upsample") cfg.model.time_upsample = as_int(value);
  else if (key == "phoneme_vocab") cfg.model.phoneme_vocab = as_int(value);
  else if (key == "pitch_vocab") cfg.model.pitch_vocab = as_int(value);
  else if (key == "n_conv_blocks") cfg.model.n_conv_blocks = as_int(value);
  else if (key == "corpus_dir") cfg.corpus_dir = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "lr") cfg.lr = parse_num(key, value);
  else if (key == "batch_size") cfg.batch_size = as_int(value);
  else if (key == "max_steps") cfg.max_steps = as_int(value);
  else if (key == "seed") cfg.seed = static_cast<uint64_t>(parse_num(key, value));
  else if (key == "use_adversarial") cfg.use_adversarial = parse_bool(key, value);
  else if (key == "lambda_adv") cfg.lambda_adv = parse_num(key, value);
  else if (key == "checkpoint_every") cfg.checkpoint_every = as_int(value);
  else if (key == "segment_cap") cfg.segment_cap = as_int(value);
  else if (key == "patches_per_item") cfg.patches_per_item = as_int(value);
  else if (key == "grad_clip") cfg.grad_clip = parse_num(key, value);
  else throw InvalidConfig("unknown config key: " + key);
}

// One `key = value` assignment, as accepted on a command line.
inline void apply_config_override(TrainConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw InvalidConfig("override must look like key=value: " + assignment);
  apply_config_entry(cfg, detail::trim(assignment.substr(0, eq)),
                     detail::trim(assignment.substr(eq + 1)));
}

inline TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidConfig("line " + std::to_string(lineno) + " is not key = value");
    apply_config_entry(cfg, detail::trim(line.substr(0, eq)),
                       detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline TrainConfig load_train_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace svs::training
