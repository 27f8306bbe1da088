#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "dlr/errors.hpp"
#include "dlr/io.hpp"
#include "dlr/routing.hpp"
#include "dlr/search.hpp"
#include "dlr/supervision.hpp"
#include "dlr/tasks.hpp"

namespace dlr {

// ============================================================================
// Pipeline configuration
// ============================================================================
//
// Line-based "key = value" file with one [section] per module; # starts a
// comment. Unknown keys are rejected. Flags override the file, the file
// overrides defaults; the effective configuration is echoed into every
// output directory so any artifact can be reproduced from scratch.

struct PipelineConfig {
  // [pipeline]
  std::uint64_t root_seed = 1;
  int workers = 1;
  std::string workdir = "out";

  // [backbone]
  std::string backbone_kind = "counter";  // counter | transformer
  int layers = 8;
  int dim = 0;  // 0: counter 2L+16, transformer 64
  int heads = 4;
  int ffn = 256;
  int vocab = 64;
  int max_seq = 64;

  // [tasks]
  int modulus = 40;
  std::string flag_mode = "mixed";  // mixed | fixed
  double corpus_scale = 1.0;        // train corpus: stratum bases x scale
  double eval_scale = 0.25;         // held-out corpus: stratum bases x scale

  // [search]
  SearchConfig search;

  // [routing]
  int windows = 8;
  int router_hidden = 128;
  std::string router_input = "prev";  // prev | first
  bool freq_bias_init = false;

  // [loss]
  LossConfig loss;

  // [train]
  TrainConfig train;

  // [pretrain]
  int pretrain_steps = 2000;
  int pretrain_batch = 8;
  double pretrain_lr = 1e-3;
  int pretrain_warmup = 100;
  double pretrain_target_loss = 0.0;  // 0 disables the threshold check

  // [eval]
  std::string ood_train_family = "D";  // --ood evaluates the other family

  // [sweep]
  double sweep_lo = -1.0;
  double sweep_hi = 1.0;
  int sweep_points = 21;

  void validate() const {
    if (workers < 1) throw ConfigError("pipeline.workers must be >= 1");
    if (backbone_kind != "counter" && backbone_kind != "transformer") {
      throw ConfigError("backbone.kind must be counter or transformer");
    }
    if (layers < 1) throw ConfigError("backbone.layers must be >= 1");
    if (modulus < 10 || vocab::size_for_modulus(modulus) > 256) {
      throw ConfigError("tasks.modulus out of range");
    }
    if (flag_mode != "mixed" && flag_mode != "fixed") {
      throw ConfigError("tasks.flag_mode must be mixed or fixed");
    }
    if (corpus_scale <= 0 || eval_scale <= 0) throw ConfigError("tasks scales must be > 0");
    if (router_input != "prev" && router_input != "first") {
      throw ConfigError("routing.input must be prev or first");
    }
    if (windows < 1) throw ConfigError("routing.windows must be >= 1");
    if (loss.mode != LossConfig::kFocal && loss.gamma != 0.0) {
      // mode implies gamma handling; nothing to reject here
    }
    if (sweep_points < 2 || sweep_lo < -1.0 || sweep_hi > 1.0 || sweep_lo >= sweep_hi) {
      throw ConfigError("sweep grid must satisfy -1 <= lo < hi <= 1 with >= 2 points");
    }
    search.validate();
    loss.validate();
    if (ood_train_family != "A" && ood_train_family != "D") {
      throw ConfigError("eval.ood_train_family must be A or D");
    }
  }

  TaskGenConfig task_gen_config() const {
    TaskGenConfig cfg;
    cfg.num_layers = layers;
    cfg.modulus = modulus;
    cfg.mode = flag_mode == "mixed" ? FlagMode::kMixed : FlagMode::kFixed;
    return cfg;
  }

  RouterInput router_input_mode() const {
    return router_input == "first" ? RouterInput::kFirstLayer : RouterInput::kPrevLayer;
  }

  std::vector<double> sweep_grid() const {
    std::vector<double> grid;
    for (int i = 0; i < sweep_points; ++i) {
      grid.push_back(sweep_lo + (sweep_hi - sweep_lo) * i / (sweep_points - 1));
    }
    return grid;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string unquote(std::string v) {
  if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') ||
                        (v.front() == '\'' && v.back() == '\''))) {
    return v.substr(1, v.size() - 2);
  }
  return v;
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long x = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects an integer, got '" + v + "'");
  }
}

inline double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on") return true;
  if (v == "false" || v == "0" || v == "off") return false;
  throw ConfigError("config: " + key + " expects a boolean, got '" + v + "'");
}

}  // namespace detail

inline void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                               const std::string& raw) {
  using detail::to_bool;
  using detail::to_double;
  using detail::to_int;
  const std::string v = detail::unquote(raw);

  if (key == "pipeline.seed") cfg.root_seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "pipeline.workers") cfg.workers = static_cast<int>(to_int(key, v));
  else if (key == "pipeline.workdir") cfg.workdir = v;
  else if (key == "backbone.kind") cfg.backbone_kind = v;
  else if (key == "backbone.layers") cfg.layers = static_cast<int>(to_int(key, v));
  else if (key == "backbone.dim") cfg.dim = static_cast<int>(to_int(key, v));
  else if (key == "backbone.heads") cfg.heads = static_cast<int>(to_int(key, v));
  else if (key == "backbone.ffn") cfg.ffn = static_cast<int>(to_int(key, v));
  else if (key == "backbone.vocab") cfg.vocab = static_cast<int>(to_int(key, v));
  else if (key == "backbone.max_seq") cfg.max_seq = static_cast<int>(to_int(key, v));
  else if (key == "tasks.modulus") cfg.modulus = static_cast<int>(to_int(key, v));
  else if (key == "tasks.flag_mode") cfg.flag_mode = v;
  else if (key == "tasks.corpus_scale") cfg.corpus_scale = to_double(key, v);
  else if (key == "tasks.eval_scale") cfg.eval_scale = to_double(key, v);
  else if (key == "search.simulations") cfg.search.simulations = static_cast<int>(to_int(key, v));
  else if (key == "search.c") cfg.search.exploration = to_double(key, v);
  else if (key == "search.lambda") cfg.search.length_penalty = to_double(key, v);
  else if (key == "search.p_rand") cfg.search.p_rand = to_double(key, v);
  else if (key == "routing.windows") cfg.windows = static_cast<int>(to_int(key, v));
  else if (key == "routing.hidden") cfg.router_hidden = static_cast<int>(to_int(key, v));
  else if (key == "routing.input") cfg.router_input = v;
  else if (key == "routing.freq_bias_init") cfg.freq_bias_init = to_bool(key, v);
  else if (key == "loss.mode") {
    if (v == "focal") cfg.loss.mode = LossConfig::kFocal;
    else if (v == "weighted-ce") cfg.loss.mode = LossConfig::kWeightedCE;
    else if (v == "plain-ce") cfg.loss.mode = LossConfig::kPlainCE;
    else throw ConfigError("config: loss.mode must be focal, weighted-ce or plain-ce");
  }
  else if (key == "loss.gamma") cfg.loss.gamma = to_double(key, v);
  else if (key == "loss.beta") cfg.loss.beta = to_double(key, v);
  else if (key == "train.lr_max") cfg.train.lr_max = to_double(key, v);
  else if (key == "train.weight_decay") cfg.train.weight_decay = to_double(key, v);
  else if (key == "train.warmup") cfg.train.warmup = static_cast<int>(to_int(key, v));
  else if (key == "train.epochs") cfg.train.epochs = static_cast<int>(to_int(key, v));
  else if (key == "train.batch") cfg.train.batch = static_cast<int>(to_int(key, v));
  else if (key == "train.val_fraction") cfg.train.val_fraction = to_double(key, v);
  else if (key == "train.teacher_forcing") cfg.train.teacher_forcing = to_bool(key, v);
  else if (key == "pretrain.steps") cfg.pretrain_steps = static_cast<int>(to_int(key, v));
  else if (key == "pretrain.batch") cfg.pretrain_batch = static_cast<int>(to_int(key, v));
  else if (key == "pretrain.lr_max") cfg.pretrain_lr = to_double(key, v);
  else if (key == "pretrain.warmup") cfg.pretrain_warmup = static_cast<int>(to_int(key, v));
  else if (key == "pretrain.target_loss") cfg.pretrain_target_loss = to_double(key, v);
  else if (key == "eval.ood_train_family") cfg.ood_train_family = v;
  else if (key == "sweep.lo") cfg.sweep_lo = to_double(key, v);
  else if (key == "sweep.hi") cfg.sweep_hi = to_double(key, v);
  else if (key == "sweep.points") cfg.sweep_points = static_cast<int>(to_int(key, v));
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("config line " + std::to_string(line_no) + ": unterminated section");
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (section.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) + ": key outside a section");
    }
    apply_config_entry(cfg, section + "." + key, value);
  }
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  return parse_config_text(read_text_file(path));
}

// Full effective-value dump; parsing it back reproduces the configuration.
// The working directory is deliberately omitted: it names where artifacts
// live, not what they are.
inline std::string config_echo(const PipelineConfig& c) {
  std::ostringstream os;
  os << "[pipeline]\n";
  os << "seed = " << c.root_seed << "\n";
  os << "workers = " << c.workers << "\n";
  os << "\n[backbone]\n";
  os << "kind = " << c.backbone_kind << "\n";
  os << "layers = " << c.layers << "\n";
  os << "dim = " << c.dim << "\n";
  os << "heads = " << c.heads << "\n";
  os << "ffn = " << c.ffn << "\n";
  os << "vocab = " << c.vocab << "\n";
  os << "max_seq = " << c.max_seq << "\n";
  os << "\n[tasks]\n";
  os << "modulus = " << c.modulus << "\n";
  os << "flag_mode = " << c.flag_mode << "\n";
  os << "corpus_scale = " << fmt(c.corpus_scale) << "\n";
  os << "eval_scale = " << fmt(c.eval_scale) << "\n";
  os << "\n[search]\n";
  os << "simulations = " << c.search.simulations << "\n";
  os << "c = " << fmt(c.search.exploration) << "\n";
  os << "lambda = " << fmt(c.search.length_penalty) << "\n";
  os << "p_rand = " << fmt(c.search.p_rand) << "\n";
  os << "\n[routing]\n";
  os << "windows = " << c.windows << "\n";
  os << "hidden = " << c.router_hidden << "\n";
  os << "input = " << c.router_input << "\n";
  os << "freq_bias_init = " << (c.freq_bias_init ? "true" : "false") << "\n";
  os << "\n[loss]\n";
  os << "mode = "
     << (c.loss.mode == LossConfig::kFocal
             ? "focal"
             : c.loss.mode == LossConfig::kWeightedCE ? "weighted-ce" : "plain-ce")
     << "\n";
  os << "gamma = " << fmt(c.loss.gamma) << "\n";
  os << "beta = " << fmt(c.loss.beta) << "\n";
  os << "\n[train]\n";
  os << "lr_max = " << fmt(c.train.lr_max) << "\n";
  os << "weight_decay = " << fmt(c.train.weight_decay) << "\n";
  os << "warmup = " << c.train.warmup << "\n";
  os << "epochs = " << c.train.epochs << "\n";
  os << "batch = " << c.train.batch << "\n";
  os << "val_fraction = " << fmt(c.train.val_fraction) << "\n";
  os << "teacher_forcing = " << (c.train.teacher_forcing ? "true" : "false") << "\n";
  os << "\n[pretrain]\n";
  os << "steps = " << c.pretrain_steps << "\n";
  os << "batch = " << c.pretrain_batch << "\n";
  os << "lr_max = " << fmt(c.pretrain_lr) << "\n";
  os << "warmup = " << c.pretrain_warmup << "\n";
  os << "target_loss = " << fmt(c.pretrain_target_loss) << "\n";
  os << "\n[eval]\n";
  os << "ood_train_family = " << c.ood_train_family << "\n";
  os << "\n[sweep]\n";
  os << "lo = " << fmt(c.sweep_lo) << "\n";
  os << "hi = " << fmt(c.sweep_hi) << "\n";
  os << "points = " << c.sweep_points << "\n";
  return os.str();
}

}  // namespace dlr
