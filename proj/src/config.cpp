// Copyright 2026 The promptlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "promptlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <functional>
#include <sstream>
#include <type_traits>

#include "promptlab/checkpoint.hpp"

namespace promptlab {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected, const std::string& got) {
  throw ConfigError("config." + key + ": expected " + expected + ", got '" + got + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    bad_value(key, "a boolean", text);
  } else if constexpr (std::is_same_v<T, double>) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(text, &pos);
      if (pos != text.size()) bad_value(key, "a number", text);
      return v;
    } catch (const std::logic_error&) {
      bad_value(key, "a number", text);
    }
  } else if constexpr (std::is_integral_v<T>) {
    T v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
      bad_value(key, "a non-negative integer", text);
    }
    return v;
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (text.empty()) bad_value(key, "a non-empty string", text);
    return text;
  } else if constexpr (std::is_same_v<T, Precision>) {
    if (text == "f32") return Precision::kF32;
    if (text == "f64") return Precision::kF64;
    bad_value(key, "f32 or f64", text);
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_value<double>(key, trim(item)));
    if (out.empty()) bad_value(key, "a comma-separated list of numbers", text);
    return out;
  }
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, double>) {
    return format_double(v);
  } else if constexpr (std::is_integral_v<T>) {
    return std::to_string(v);
  } else if constexpr (std::is_same_v<T, std::string>) {
    return v;
  } else if constexpr (std::is_same_v<T, Precision>) {
    return to_string(v);
  } else if constexpr (std::is_same_v<T, std::vector<double>>) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s;
  }
}

struct Field {
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename Access>
Field field(std::string key, Access access) {
  return Field{
      key,
      [key, access](ExperimentConfig& c, const std::string& text) {
        auto& ref = access(c);
        ref = parse_value<std::remove_reference_t<decltype(ref)>>(key, text);
      },
      [access](const ExperimentConfig& c) {
        auto& ref = access(const_cast<ExperimentConfig&>(c));
        return format_value(ref);
      }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      field("seed", [](ExperimentConfig& c) -> auto& { return c.seed; }),
      field("corpus_seed", [](ExperimentConfig& c) -> auto& { return c.corpus_seed; }),
      field("precision", [](ExperimentConfig& c) -> auto& { return c.precision; }),
      // corpus
      field("vocab", [](ExperimentConfig& c) -> auto& { return c.synth.vocab; }),
      field("feature_dim", [](ExperimentConfig& c) -> auto& { return c.synth.feature_dim; }),
      field("template_len", [](ExperimentConfig& c) -> auto& { return c.synth.template_len; }),
      field("min_tokens", [](ExperimentConfig& c) -> auto& { return c.synth.min_tokens; }),
      field("max_tokens", [](ExperimentConfig& c) -> auto& { return c.synth.max_tokens; }),
      field("jitter_sigma", [](ExperimentConfig& c) -> auto& { return c.synth.jitter_sigma; }),
      field("other_jitter_sigma", [](ExperimentConfig& c) -> auto& { return c.synth.other_jitter_sigma; }),
      field("length_jitter", [](ExperimentConfig& c) -> auto& { return c.synth.length_jitter; }),
      field("template_scale", [](ExperimentConfig& c) -> auto& { return c.synth.template_scale; }),
      field("template_min_distance", [](ExperimentConfig& c) -> auto& { return c.synth.template_min_distance; }),
      field("n_train", [](ExperimentConfig& c) -> auto& { return c.synth.n_train; }),
      field("n_eval", [](ExperimentConfig& c) -> auto& { return c.synth.n_eval; }),
      field("corrupt_prob", [](ExperimentConfig& c) -> auto& { return c.synth.corrupt_prob; }),
      field("snr_min_db", [](ExperimentConfig& c) -> auto& { return c.synth.snr_min_db; }),
      field("snr_max_db", [](ExperimentConfig& c) -> auto& { return c.synth.snr_max_db; }),
      field("type_a_subtypes", [](ExperimentConfig& c) -> auto& { return c.synth.type_a_subtypes; }),
      field("type_b_subtypes", [](ExperimentConfig& c) -> auto& { return c.synth.type_b_subtypes; }),
      field("ood_subtypes", [](ExperimentConfig& c) -> auto& { return c.synth.ood_subtypes; }),
      field("train_streams", [](ExperimentConfig& c) -> auto& { return c.synth.train_streams; }),
      field("eval_streams", [](ExperimentConfig& c) -> auto& { return c.synth.eval_streams; }),
      field("clip_frames", [](ExperimentConfig& c) -> auto& { return c.synth.clip_frames; }),
      field("noise_floor", [](ExperimentConfig& c) -> auto& { return c.synth.noise_floor; }),
      // encoder
      field("layers", [](ExperimentConfig& c) -> auto& { return c.encoder.layers; }),
      field("d_model", [](ExperimentConfig& c) -> auto& { return c.encoder.d_model; }),
      field("heads", [](ExperimentConfig& c) -> auto& { return c.encoder.heads; }),
      field("ffn", [](ExperimentConfig& c) -> auto& { return c.encoder.ffn; }),
      // pretraining
      field("pretrain_lr", [](ExperimentConfig& c) -> auto& { return c.pretrain_lr; }),
      field("pretrain_steps", [](ExperimentConfig& c) -> auto& { return c.pretrain_steps; }),
      field("pretrain_batch", [](ExperimentConfig& c) -> auto& { return c.pretrain_batch; }),
      field("pretrain_warmup", [](ExperimentConfig& c) -> auto& { return c.pretrain_warmup; }),
      field("pretrain_wer_threshold", [](ExperimentConfig& c) -> auto& { return c.pretrain_wer_threshold; }),
      // prompt tuning
      field("lr", [](ExperimentConfig& c) -> auto& { return c.lr; }),
      field("lr_grid", [](ExperimentConfig& c) -> auto& { return c.lr_grid; }),
      field("grid_search", [](ExperimentConfig& c) -> auto& { return c.grid_search; }),
      field("steps", [](ExperimentConfig& c) -> auto& { return c.steps; }),
      field("batch", [](ExperimentConfig& c) -> auto& { return c.batch; }),
      field("warmup", [](ExperimentConfig& c) -> auto& { return c.warmup; }),
      field("optimizer", [](ExperimentConfig& c) -> auto& { return c.optimizer; }),
      field("grad_clip", [](ExperimentConfig& c) -> auto& { return c.grad_clip; }),
      field("prompts", [](ExperimentConfig& c) -> auto& { return c.prompts; }),
      field("large_prompts", [](ExperimentConfig& c) -> auto& { return c.large_prompts; }),
      field("head_layers", [](ExperimentConfig& c) -> auto& { return c.head_layers; }),
      field("eval_interval", [](ExperimentConfig& c) -> auto& { return c.eval_interval; }),
      field("eval_subset", [](ExperimentConfig& c) -> auto& { return c.eval_subset; }),
      field("init_stats_utterances", [](ExperimentConfig& c) -> auto& { return c.init_stats_utterances; }),
      // analyses
      field("seeds", [](ExperimentConfig& c) -> auto& { return c.seeds; }),
      field("probe_bootstrap", [](ExperimentConfig& c) -> auto& { return c.probe_bootstrap; }),
      field("probe_train_fraction", [](ExperimentConfig& c) -> auto& { return c.probe_train_fraction; }),
      field("pool_include_prompts", [](ExperimentConfig& c) -> auto& { return c.pool_include_prompts; }),
      field("clusters_small", [](ExperimentConfig& c) -> auto& { return c.clusters_small; }),
      field("clusters_large", [](ExperimentConfig& c) -> auto& { return c.clusters_large; }),
      // adaptation
      field("ood_family", [](ExperimentConfig& c) -> auto& { return c.ood_family; }),
      field("ood_clips", [](ExperimentConfig& c) -> auto& { return c.ood_clips; }),
      field("raw_bias", [](ExperimentConfig& c) -> auto& { return c.raw_bias; }),
      field("bias_with_prompts", [](ExperimentConfig& c) -> auto& { return c.bias_with_prompts; }),
  };
  return kFields;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& msg) {
    throw ConfigError("config." + key + ": " + msg);
  };
  if (encoder.feature_dim != synth.feature_dim) fail("feature_dim", "encoder and corpus disagree");
  if (encoder.d_model == 0 || encoder.heads == 0 || encoder.d_model % encoder.heads != 0) {
    fail("heads", "must divide d_model");
  }
  if (encoder.layers == 0) fail("layers", "must be positive");
  try {
    synth.validate();
  } catch (const ContractError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!(lr > 0)) fail("lr", "must be positive");
  if (!(pretrain_lr > 0)) fail("pretrain_lr", "must be positive");
  for (double g : lr_grid) {
    if (!(g > 0)) fail("lr_grid", "entries must be positive");
  }
  if (grid_search) {
    const auto [lo, hi] = std::minmax_element(lr_grid.begin(), lr_grid.end());
    if (lr < *lo || lr > *hi) fail("lr", "must lie within the lr_grid range when grid_search is on");
  }
  if (batch == 0) fail("batch", "must be positive");
  if (pretrain_batch == 0) fail("pretrain_batch", "must be positive");
  if (optimizer != "adam" && optimizer != "momentum") fail("optimizer", "must be adam or momentum");
  if (head_layers != 1 && head_layers != 2) fail("head_layers", "must be 1 or 2");
  if (eval_interval == 0) fail("eval_interval", "must be positive");
  if (seeds == 0) fail("seeds", "must be positive");
  if (probe_bootstrap == 0) fail("probe_bootstrap", "must be positive");
  if (!(probe_train_fraction > 0 && probe_train_fraction < 1)) fail("probe_train_fraction", "must be in (0,1)");
  if (clusters_small == 0 || clusters_large == 0) fail("clusters_small", "cluster counts must be positive");
  if (ood_clips == 0) fail("ood_clips", "must be positive");
  try {
    parse_noise_family(ood_family);
  } catch (const ContractError&) {
    fail("ood_family", "must be typeA, typeB or ood");
  }
}

std::string ExperimentConfig::to_text() const {
  std::string out = std::string("schema = ") + kConfigSchema + "\n";
  for (const auto& f : fields()) out += f.key + " = " + f.get(*this) + "\n";
  return out;
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_text()); }

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("config." + key + ": unknown key");
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  bool schema_seen = false;
  std::vector<std::string> seen;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config: line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) {
      throw ConfigError("config." + key + ": duplicate key (line " + std::to_string(lineno) + ")");
    }
    seen.push_back(key);
    if (key == "schema") {
      if (value != kConfigSchema) {
        throw ConfigError("config.schema: unsupported schema '" + value + "' (expected " +
                          kConfigSchema + ")");
      }
      schema_seen = true;
      continue;
    }
    set_config_value(cfg, key, value);
  }
  if (!schema_seen) throw ConfigError(std::string("config.schema: missing (expected ") + kConfigSchema + ")");
  cfg.encoder.feature_dim = cfg.synth.feature_dim;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_config(read_file(path));
}

}  // namespace promptlab
