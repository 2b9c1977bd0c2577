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

#include "promptlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptlab/pipeline.hpp"
#include "promptlab/report.hpp"

namespace promptlab {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Raised for missing or unreadable inputs; maps to kExitRuntime.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a run completes but an acceptance check fails.
class AssertionFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Flags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed, corpus_seed;
  std::optional<std::string> precision;
  std::string out_dir = "out";
  bool quiet = false;

  std::string checkpoint, backbone, baseline, partition, manifest, name = "tuned", ood_family;
  std::optional<std::size_t> prompts, clusters, n_clips;
  bool raw = false;
};

struct Context {
  ExperimentConfig cfg;
  fs::path out_dir;
  fs::path cache_dir;
  std::ostream& out;
  bool quiet = false;

  void log(const std::string& msg) const {
    if (!quiet) out << msg << "\n" << std::flush;
  }
  LogFn logger() const {
    return [this](const std::string& m) { log(m); };
  }
};

ExperimentConfig resolve_config(const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? ExperimentConfig{} : load_config(f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.corpus_seed) cfg.corpus_seed = *f.corpus_seed;
  if (f.precision) set_config_value(cfg, "precision", *f.precision);
  cfg.encoder.feature_dim = cfg.synth.feature_dim;
  cfg.validate();
  return cfg;
}

std::map<std::string, std::string> bundle_meta(const Context& ctx, std::uint64_t seed) {
  return {{"seed", std::to_string(seed)},
          {"corpus_seed", std::to_string(ctx.cfg.corpus_seed)},
          {"config_hash", ctx.cfg.hash()}};
}

ModelBundle load_bundle(const Context& ctx, const std::string& path, bool need_head) {
  if (path.empty()) throw ConfigError("--checkpoint is required");
  if (!fs::exists(path)) throw InputError("checkpoint not found: " + path);
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(path);
  } catch (const CheckpointError& e) {
    throw InputError(path + ": " + e.what());
  }
  if (ckpt.precision != ctx.cfg.precision) {
    throw ConfigError("checkpoint " + path + " is " + to_string(ckpt.precision) + " but the run is " +
                      to_string(ctx.cfg.precision));
  }
  const auto it = ckpt.meta.find("corpus_seed");
  if (it != ckpt.meta.end() && it->second != std::to_string(ctx.cfg.corpus_seed)) {
    throw ConfigError("checkpoint " + path + " was trained on corpus seed " + it->second +
                      ", the run uses " + std::to_string(ctx.cfg.corpus_seed));
  }
  auto bundle = bundle_from_checkpoint(ckpt);
  if (need_head && !bundle.head) throw InputError("checkpoint has no decoder head: " + path);
  return bundle;
}

std::string save_bundle(const Context& ctx, const std::string& file, const ModelBundle& bundle,
                        std::uint64_t seed) {
  fs::create_directories(ctx.out_dir);
  const auto path = ctx.out_dir / file;
  save_checkpoint(path, make_checkpoint(bundle, bundle_meta(ctx, seed)));
  return file + " " + sha256_hex(read_file(path));
}

std::vector<std::string> input_hashes(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (!p.empty()) out.push_back(fs::path(p).filename().string() + " " + sha256_hex(read_file(p)));
  }
  return out;
}

void write_outputs(const Context& ctx, const std::string& command, const std::vector<const CsvTable*>& tables,
                   const json& summary, const std::vector<std::string>& checkpoints) {
  fs::create_directories(ctx.out_dir);
  for (const auto* t : tables) {
    t->write(ctx.out_dir / (t->artifact() + ".csv"));
    ctx.log("wrote " + (ctx.out_dir / (t->artifact() + ".csv")).string());
  }
  write_file_atomic(ctx.out_dir / (command + ".summary.json"), summary.dump(2) + "\n");
  write_run_metadata(ctx.out_dir, command, ctx.cfg, checkpoints);
}

json wer_summary(const WerTable& table) {
  json out = json::object();
  for (const auto& r : table) out[r.arm][r.split] = r.wer;
  return out;
}

PromptPartition partition_for(const Context& ctx, const Flags& f, const ModelBundle& b, const Corpus& corpus) {
  const auto m = b.prompts.count();
  if (!f.partition.empty()) {
    if (!fs::exists(f.partition)) throw InputError("partition file not found: " + f.partition);
    const auto j = json::parse(read_file(f.partition));
    PromptPartition p;
    for (std::size_t id : j.at("set1_content")) p.set1_content.push_back(id - 1);
    for (std::size_t id : j.at("set2_noise")) p.set2_noise.push_back(id - 1);
    p.validate(m);
    return p;
  }
  ctx.log("deriving partition from single-prompt ablation");
  const auto ablation = ablate_single_prompts(b.encoder, b.prompts, *b.head, test_sets(corpus));
  return derive_partition(ablation, b.prompts, f.clusters.value_or(ctx.cfg.clusters_small), ctx.cfg.seed);
}

json partition_json(const PromptPartition& p) {
  auto ids = [](const std::vector<std::size_t>& v) {
    std::vector<std::size_t> out;
    for (auto i : v) out.push_back(i + 1);
    return out;
  };
  return {{"set1_content", ids(p.set1_content)}, {"set2_noise", ids(p.set2_noise)}};
}

EncoderModel backbone_for(const Context& ctx, const Flags& f, const Corpus& corpus) {
  if (!f.backbone.empty()) return load_bundle(ctx, f.backbone, false).encoder;
  return obtain_backbone(corpus, ctx.cfg, ctx.cache_dir, ctx.logger());
}

// Subcommands -------------------------------------------------------------

int cmd_corpus(const Context& ctx) {
  const auto corpus = build_corpus(ctx.cfg);
  write_corpus(corpus, ctx.out_dir / "corpus");
  ctx.log("wrote corpus to " + (ctx.out_dir / "corpus").string());
  write_run_metadata(ctx.out_dir, "corpus", ctx.cfg, {});
  return kExitOk;
}

int cmd_pretrain(const Context& ctx) {
  const auto corpus = build_corpus(ctx.cfg);
  ctx.log("pretraining backbone for " + std::to_string(ctx.cfg.pretrain_steps) + " steps");
  auto pre = pretrain_backbone(corpus, ctx.cfg);
  pre.record.config_text = ctx.cfg.to_text();
  pre.record.checkpoint = "backbone.plck";
  const auto hash = save_bundle(ctx, "backbone.plck", {pre.encoder, PromptMatrix(ctx.cfg.encoder.d_model), std::nullopt},
                                ctx.cfg.seed);
  write_file_atomic(ctx.out_dir / "pretrain.jsonl", pre.record.to_jsonl());
  json summary = {{"dev_clean_wer", pre.dev_clean_wer},
                  {"threshold", ctx.cfg.pretrain_wer_threshold},
                  {"encoder_hash", pre.encoder.content_hash()},
                  {"parameters", pre.encoder.parameter_count()}};
  write_outputs(ctx, "pretrain", {}, summary, {hash});
  ctx.out << "dev_clean_wer " << fmt(pre.dev_clean_wer) << "\n";
  return kExitOk;
}

int cmd_prompt_tune(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto encoder = backbone_for(ctx, f, corpus);
  const auto m = f.prompts.value_or(ctx.cfg.prompts);
  auto options = tune_options(ctx.cfg, m, ctx.cfg.seed);
  if (ctx.cfg.grid_search) {
    const auto grid = grid_search_lr(encoder, corpus, ctx.cfg.lr_grid, options);
    ctx.log("grid search selected lr " + fmt(grid.best_lr));
    options.lr = grid.best_lr;
  }
  ctx.log("tuning m=" + std::to_string(m) + " for " + std::to_string(options.steps) + " steps");
  auto r = prompt_tune(encoder, corpus, options);
  r.record.config_text = ctx.cfg.to_text();
  r.record.checkpoint = f.name + ".plck";
  const auto hash = save_bundle(ctx, f.name + ".plck", {encoder, r.prompts, r.head}, ctx.cfg.seed);
  write_file_atomic(ctx.out_dir / (f.name + ".jsonl"), r.record.to_jsonl());
  const std::size_t prompt_params = r.prompts.count() * r.prompts.dim();
  const std::size_t head_params = r.head.parameter_count();
  json summary = {{"prompts", m},
                  {"lr", options.lr},
                  {"final_dev_noisy_wer", r.record.evals.empty() ? 0.0 : r.record.evals.back().wer},
                  {"prompt_parameters", prompt_params},
                  {"head_parameters", head_params},
                  {"trainable_parameters", prompt_params + head_params},
                  {"encoder_hash_before", r.record.encoder_hash_before},
                  {"encoder_hash_after", r.record.encoder_hash_after}};
  write_outputs(ctx, "prompt-tune", {}, summary, {hash});
  ctx.out << "trainable_parameters " << prompt_params + head_params << " (prompts " << prompt_params << ", head "
          << head_params << ")\n";
  if (r.record.encoder_hash_before != r.record.encoder_hash_after) {
    throw AssertionFailure("frozen encoder changed during tuning");
  }
  return kExitOk;
}

int cmd_grid_lr(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto encoder = backbone_for(ctx, f, corpus);
  const auto m = f.prompts.value_or(ctx.cfg.prompts);
  const auto grid = grid_search_lr(encoder, corpus, ctx.cfg.lr_grid, tune_options(ctx.cfg, m, ctx.cfg.seed));
  CsvTable csv("grid_lr", {"prompts", "seed", "lr", "dev_clean_wer", "selected"});
  for (const auto& [lr, wer] : grid.dev_clean_wer) {
    csv.add_row({fmt_int(m), fmt(ctx.cfg.seed), fmt(lr), fmt(wer), lr == grid.best_lr ? "1" : "0"});
  }
  write_outputs(ctx, "grid-lr", {&csv}, {{"best_lr", grid.best_lr}}, input_hashes({f.backbone}));
  ctx.out << "best_lr " << fmt(grid.best_lr) << "\n";
  return kExitOk;
}

int cmd_eval(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  const auto table = eval_arm(b.encoder, b.prompts, *b.head, "eval", test_sets(corpus));
  auto csv = wer_csv("eval", true);
  append_wer_rows(csv, table, fmt(ctx.cfg.seed), fmt_int(b.prompts.count()));
  write_outputs(ctx, "eval", {&csv}, wer_summary(table), input_hashes({f.checkpoint}));
  return kExitOk;
}

int cmd_attack(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  const auto table = attack_random_prompts(b.encoder, b.prompts, *b.head, test_sets(corpus), ctx.cfg.seed);
  auto csv = wer_csv("table1_analog", true);
  append_wer_rows(csv, table, fmt(ctx.cfg.seed), fmt_int(b.prompts.count()));
  write_outputs(ctx, "attack", {&csv}, wer_summary(table), input_hashes({f.checkpoint}));
  bool ok = true;
  for (const auto& split : {"test_clean", "test_other", "test_noisy"}) {
    ok = ok && find_row(table, "random", split).wer > find_row(table, "tuned", split).wer;
  }
  if (!ok) throw AssertionFailure("random prompts did not raise WER on every split");
  return kExitOk;
}

int cmd_remove(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  const auto table = remove_all_prompts_eval(b.encoder, b.prompts, *b.head, test_sets(corpus));
  auto csv = wer_csv("table3_analog", true);
  append_wer_rows(csv, table, fmt(ctx.cfg.seed), fmt_int(b.prompts.count()));
  write_outputs(ctx, "remove-prompts", {&csv}, wer_summary(table), input_hashes({f.checkpoint}));
  return kExitOk;
}

int cmd_ablate(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  const auto rep = ablate_single_prompts(b.encoder, b.prompts, *b.head, test_sets(corpus));
  CsvTable csv("fig4_analog", {"prompts", "seed", "prompt_id", "split", "wer", "delta", "loss_delta"});
  json summary = json::object();
  for (std::size_t k = 0; k < rep.splits.size(); ++k) summary["full_wer"][rep.splits[k]] = rep.full_wer[k];
  for (const auto& row : rep.rows) {
    for (std::size_t k = 0; k < rep.splits.size(); ++k) {
      csv.add_row({fmt_int(b.prompts.count()), fmt(ctx.cfg.seed), fmt_int(row.prompt_id), rep.splits[k],
                   fmt(row.wer[k]), fmt(row.delta[k]), fmt(row.loss_delta[k])});
    }
  }
  write_outputs(ctx, "ablate", {&csv}, summary, input_hashes({f.checkpoint}));
  return kExitOk;
}

int cmd_partition(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  Flags derived = f;
  derived.partition.clear();
  const auto p = partition_for(ctx, derived, b, corpus);
  CsvTable csv("partition", {"prompts", "seed", "set1_content", "set2_noise"});
  csv.add_row({fmt_int(b.prompts.count()), fmt(ctx.cfg.seed), format_ids(p.set1_content), format_ids(p.set2_noise)});
  const auto pj = partition_json(p);
  write_file_atomic(ctx.out_dir / "partition.json", pj.dump(2) + "\n");
  write_outputs(ctx, "partition", {&csv}, pj, input_hashes({f.checkpoint}));
  ctx.out << "set1_content " << format_ids(p.set1_content) << "\nset2_noise " << format_ids(p.set2_noise) << "\n";
  return kExitOk;
}

int cmd_subsets(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  const auto p = partition_for(ctx, f, b, corpus);
  const auto table = eval_prompt_subsets(b.encoder, b.prompts, *b.head, p, test_sets(corpus));
  auto csv = wer_csv("table2_analog", true);
  append_wer_rows(csv, table, fmt(ctx.cfg.seed), fmt_int(b.prompts.count()));
  auto summary = wer_summary(table);
  summary["partition"] = partition_json(p);
  write_outputs(ctx, "subsets", {&csv}, summary, input_hashes({f.checkpoint, f.partition}));
  return kExitOk;
}

int cmd_project(const Context& ctx, const Flags& f) {
  const auto b = load_bundle(ctx, f.checkpoint, false);
  std::optional<PromptPartition> p;
  if (!f.partition.empty()) {
    const auto corpus = build_corpus(ctx.cfg);
    p = partition_for(ctx, f, b, corpus);
  }
  const auto proj = project_prompts_2d(b.prompts);
  CsvTable csv("fig3_analog", {"prompts", "seed", "prompt_id", "pc1", "pc2", "set"});
  for (std::size_t i = 0; i < proj.coords.size(); ++i) {
    std::string set = "na";
    if (p) {
      set = std::count(p->set1_content.begin(), p->set1_content.end(), i) ? "set1" : "set2";
    }
    csv.add_row({fmt_int(b.prompts.count()), fmt(ctx.cfg.seed), fmt_int(i + 1), fmt(proj.coords[i][0]),
                 fmt(proj.coords[i][1]), set});
  }
  json summary = {{"eigenvalues", proj.eigenvalues}};
  write_outputs(ctx, "project", {&csv}, summary, input_hashes({f.checkpoint, f.partition}));
  return kExitOk;
}

int cmd_probe(const Context& ctx, const Flags& f) {
  const auto corpus = build_corpus(ctx.cfg);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  const auto p = partition_for(ctx, f, b, corpus);
  const std::vector<std::pair<std::string, PromptMatrix>> arms = {
      {"baseline", PromptMatrix(b.prompts.dim())},
      {"full", b.prompts},
      {"set1_only", b.prompts.select(p.set1_content)},
      {"set2_only", b.prompts.select(p.set2_noise)}};
  CsvTable fig2("fig2_analog", {"arm", "seed", "bootstrap", "accuracy"});
  CsvTable fig5("fig5_analog", {"arm", "seed", "bootstrap", "accuracy"});
  json summary = json::object();
  for (const auto& [arm, prompts] : arms) {
    const auto pooled = pooled_features(b.encoder, prompts, corpus.test_noisy, ctx.cfg.pool_include_prompts);
    const auto rep = noise_probe(pooled, arm, ctx.cfg.probe_train_fraction, ctx.cfg.probe_bootstrap, ctx.cfg.seed);
    auto& csv = (arm == "baseline" || arm == "full") ? fig2 : fig5;
    for (std::size_t i = 0; i < rep.accuracies.size(); ++i) {
      csv.add_row({arm, fmt(ctx.cfg.seed), fmt_int(i), fmt(rep.accuracies[i])});
    }
    summary[arm] = rep.median();
  }
  write_outputs(ctx, "probe", {&fig2, &fig5}, summary, input_hashes({f.checkpoint, f.partition}));
  return kExitOk;
}

int cmd_adapt(const Context& ctx, const Flags& f) {
  const SynthWorld world(ctx.cfg.synth, ctx.cfg.corpus_seed);
  const auto corpus = generate_corpus(world, ctx.cfg.corpus_seed);
  const auto b = load_bundle(ctx, f.checkpoint, true);
  if (f.baseline.empty()) throw ConfigError("--baseline is required");
  const auto base = load_bundle(ctx, f.baseline, true);
  const auto p = partition_for(ctx, f, b, corpus);
  const auto family = parse_noise_family(f.ood_family.empty() ? ctx.cfg.ood_family : f.ood_family);
  const auto bias = extract_noise_bias(b.encoder, b.prompts, bias_clips(world, family),
                                       {.n_samples = f.n_clips.value_or(ctx.cfg.ood_clips),
                                        .raw = f.raw || ctx.cfg.raw_bias,
                                        .with_prompts = ctx.cfg.bias_with_prompts,
                                        .max_frames = ctx.cfg.synth.max_frames()});
  const auto table = zero_shot_adapt_eval(b.encoder, b.prompts, *b.head, *base.head, p, bias, ood_sets(corpus));
  auto csv = wer_csv("table4_analog", true);
  append_wer_rows(csv, table, fmt(ctx.cfg.seed), fmt_int(b.prompts.count()));
  fs::create_directories(ctx.out_dir);
  write_file_atomic(ctx.out_dir / "noise_bias.json", bias.to_json());
  auto summary = wer_summary(table);
  summary["partition"] = partition_json(p);
  write_outputs(ctx, "adapt", {&csv}, summary, input_hashes({f.checkpoint, f.baseline, f.partition}));
  return kExitOk;
}

int cmd_validate(const Context& ctx, const std::string& path) {
  if (path.empty()) throw ConfigError("validate-checkpoint needs a path");
  if (!fs::exists(path)) throw InputError("checkpoint not found: " + path);
  const auto rep = validate_checkpoint(path);
  if (!rep.ok) {
    ctx.out << "INVALID " << path << ": " << rep.message << "\n";
    return kExitRuntime;
  }
  ctx.out << "OK version " << rep.version << " precision " << rep.precision << "\n"
          << "layers " << rep.layers << " d_model " << rep.d_model << " heads " << rep.heads << " prompts "
          << rep.prompts << " vocab " << rep.vocab << "\n"
          << "prompt_parameters " << rep.prompt_parameters << "\n"
          << "head_parameters " << rep.head_parameters << "\n"
          << "trainable_parameters " << rep.trainable_parameters() << "\n"
          << "frozen_parameters " << rep.frozen_parameters << "\n"
          << "frozen_hash " << rep.frozen_hash << "\n";
  for (const auto& line : rep.tensor_table) ctx.out << "  " << line << "\n";
  return kExitOk;
}

int cmd_reproduce(const Context& ctx) {
  const auto result = reproduce_all(ctx.cfg, ctx.out_dir, ctx.cache_dir, ctx.logger());
  bool ok = true;
  for (const auto& c : ordering_checks(result)) {
    const char* tag = c.passed ? "PASS" : (c.informational ? "INFO" : "FAIL");
    ctx.out << tag << " " << c.name << " (" << c.detail << ")\n";
    ok = ok && (c.passed || c.informational);
  }
  if (!ok) throw AssertionFailure("at least one ordering check failed");
  return kExitOk;
}

int cmd_run_manifest(const Context& ctx, const std::string& path, std::ostream& err) {
  if (!fs::exists(path)) throw InputError("manifest not found: " + path);
  const auto manifest = parse_manifest(read_file(path));
  for (const auto& step : manifest.steps) {
    const auto args = step_arguments(step);
    ctx.log("manifest line " + std::to_string(step.line) + ": " + step.subcommand);
    const int code = run_cli(args, ctx.out, err);
    if (code != kExitOk) {
      err << "manifest line " << step.line << " (" << step.subcommand << ") exited with " << code << "\n";
      return code;
    }
  }
  return kExitOk;
}

const std::set<std::string>& checkpoint_subcommands() {
  static const std::set<std::string> s = {"eval",    "attack",  "remove-prompts", "ablate", "partition",
                                          "subsets", "project", "probe",          "adapt"};
  return s;
}

const std::set<std::string>& known_subcommands() {
  static const std::set<std::string> s = {
      "corpus", "pretrain", "prompt-tune", "grid-lr", "eval",  "attack", "remove-prompts",
      "ablate", "partition", "subsets",    "project", "probe", "adapt",  "reproduce-all"};
  return s;
}

}  // namespace

// Manifest ---------------------------------------------------------------------

std::optional<fs::path> produced_checkpoint(const ManifestStep& step) {
  if (step.subcommand == "pretrain") return step.out_dir / "backbone.plck";
  if (step.subcommand == "prompt-tune") {
    const auto it = step.options.find("name");
    return step.out_dir / ((it == step.options.end() ? std::string("tuned") : it->second) + ".plck");
  }
  return std::nullopt;
}

ExperimentManifest parse_manifest(const std::string& text) {
  ExperimentManifest manifest;
  std::set<fs::path> outputs, produced;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto where = "manifest line " + std::to_string(lineno) + ": ";
    if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
    std::istringstream words(line);
    ManifestStep step;
    step.line = lineno;
    if (!(words >> step.subcommand)) continue;
    if (!known_subcommands().count(step.subcommand)) {
      throw ConfigError(where + "unknown subcommand '" + step.subcommand + "'");
    }
    std::string word;
    while (words >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError(where + "expected key=value, got '" + word + "'");
      const auto key = word.substr(0, eq), value = word.substr(eq + 1);
      if (key == "out") {
        step.out_dir = value;
      } else if (key == "in" || key == "baseline") {
        step.options[key] = value;
        step.inputs.emplace_back(value);
      } else if (key == "config") {
        step.config = value;
      } else if (key == "seed") {
        try {
          step.seed = std::stoull(value);
        } catch (const std::exception&) {
          throw ConfigError(where + "seed must be an integer");
        }
      } else {
        step.options[key] = value;
      }
    }
    if (step.out_dir.empty()) throw ConfigError(where + "missing out=");
    if (!outputs.insert(step.out_dir.lexically_normal()).second) {
      throw ConfigError(where + "output path " + step.out_dir.string() + " is used by an earlier step");
    }
    for (const auto& input : step.inputs) {
      if (!produced.count(input.lexically_normal()) && !fs::exists(input)) {
        throw ConfigError(where + "dangling checkpoint reference " + input.string());
      }
    }
    if (checkpoint_subcommands().count(step.subcommand) && !step.options.count("in")) {
      throw ConfigError(where + step.subcommand + " needs in=<checkpoint>");
    }
    if (const auto p = produced_checkpoint(step)) produced.insert(p->lexically_normal());
    manifest.steps.push_back(std::move(step));
  }
  if (manifest.steps.empty()) throw ConfigError("manifest has no steps");
  return manifest;
}

std::vector<std::string> step_arguments(const ManifestStep& step) {
  std::vector<std::string> args;
  if (step.config) args.insert(args.end(), {"--config", *step.config});
  if (step.seed) args.insert(args.end(), {"--seed", std::to_string(*step.seed)});
  args.insert(args.end(), {"--out-dir", step.out_dir.string(), step.subcommand});
  for (const auto& [key, value] : step.options) {
    if (key == "in") {
      const bool backbone = step.subcommand == "prompt-tune" || step.subcommand == "grid-lr";
      args.insert(args.end(), {backbone ? "--backbone" : "--checkpoint", value});
    } else if (key == "raw") {
      if (value == "true" || value == "1") args.push_back("--raw");
    } else {
      args.insert(args.end(), {"--" + key, value});
    }
  }
  return args;
}

// Entry point ------------------------------------------------------------------

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"promptlab: soft prompt tuning experiments on a synthetic speech task", "promptlab"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--config", f.config, "Config file (key = value, schema promptlab-config/1)");
  app.add_option("--set", f.overrides, "Override a config key, key=value (repeatable)");
  app.add_option("--seed", f.seed, "Root seed");
  app.add_option("--corpus-seed", f.corpus_seed, "Corpus seed");
  app.add_option("--precision", f.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"}));
  app.add_option("--out-dir", f.out_dir, "Output directory")->capture_default_str();
  app.add_flag("--quiet", f.quiet, "Suppress progress lines");

  auto* corpus = app.add_subcommand("corpus", "Write the corpus manifest and features");
  auto* pretrain = app.add_subcommand("pretrain", "Pretrain the backbone on clean speech");
  auto* tune = app.add_subcommand("prompt-tune", "Tune soft prompts and a decoder head");
  auto* grid = app.add_subcommand("grid-lr", "Pick the learning rate by dev-clean WER");
  for (auto* sub : {tune, grid}) {
    sub->add_option("--backbone", f.backbone, "Backbone checkpoint (default: cached pretraining)");
    sub->add_option("--prompts", f.prompts, "Number of prompts m");
  }
  tune->add_option("--name", f.name, "Output checkpoint stem")->capture_default_str();

  auto add_ckpt = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--checkpoint", f.checkpoint, "Tuned checkpoint")->required();
    return sub;
  };
  auto* eval = add_ckpt("eval", "WER on the test splits");
  auto* attack = add_ckpt("attack", "Replace prompts with random vectors");
  auto* remove = add_ckpt("remove-prompts", "Drop every prompt at inference");
  auto* ablate = add_ckpt("ablate", "Drop one prompt at a time");
  auto* partition = add_ckpt("partition", "Split prompts into content and noise sets");
  partition->add_option("--clusters", f.clusters, "Cluster count");
  auto* subsets = add_ckpt("subsets", "Evaluate with each prompt set alone");
  auto* project = add_ckpt("project", "2-D projection of the prompts");
  auto* probe = add_ckpt("probe", "Noise-type probes on pooled encoder outputs");
  auto* adapt = add_ckpt("adapt", "Zero-shot shift of the noise prompts toward an unseen noise");
  for (auto* sub : {subsets, project, probe, adapt}) {
    sub->add_option("--partition", f.partition, "partition.json from the partition subcommand");
    sub->add_option("--clusters", f.clusters, "Cluster count when deriving the partition");
  }
  adapt->add_option("--baseline", f.baseline, "Promptless (m=0) checkpoint")->required();
  adapt->add_option("--ood-family", f.ood_family, "Noise family of the bias clips (typeA, typeB, ood)");
  adapt->add_option("--n-clips", f.n_clips, "Number of bias clips");
  adapt->add_flag("--raw", f.raw, "Skip RMS normalization of the bias vector");

  std::string validate_path;
  auto* validate = app.add_subcommand("validate-checkpoint", "Check a checkpoint container");
  validate->add_option("path", validate_path, "Checkpoint file")->required();
  auto* reproduce = app.add_subcommand("reproduce-all", "Run every experiment and write all tables");
  auto* manifest = app.add_subcommand("run-manifest", "Run the steps of a manifest file");
  manifest->add_option("path", f.manifest, "Manifest file")->required();

  std::vector<std::string> argv_store = {"promptlab"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    const char* cache = std::getenv(kCacheEnv);
    Context ctx{resolve_config(f), f.out_dir, cache ? fs::path(cache) : fs::path(), out, f.quiet};
    PrecisionScope precision_scope(ctx.cfg.precision);
    if (validate->parsed()) return cmd_validate(ctx, validate_path);
    if (corpus->parsed()) return cmd_corpus(ctx);
    if (pretrain->parsed()) return cmd_pretrain(ctx);
    if (tune->parsed()) return cmd_prompt_tune(ctx, f);
    if (grid->parsed()) return cmd_grid_lr(ctx, f);
    if (eval->parsed()) return cmd_eval(ctx, f);
    if (attack->parsed()) return cmd_attack(ctx, f);
    if (remove->parsed()) return cmd_remove(ctx, f);
    if (ablate->parsed()) return cmd_ablate(ctx, f);
    if (partition->parsed()) return cmd_partition(ctx, f);
    if (subsets->parsed()) return cmd_subsets(ctx, f);
    if (project->parsed()) return cmd_project(ctx, f);
    if (probe->parsed()) return cmd_probe(ctx, f);
    if (adapt->parsed()) return cmd_adapt(ctx, f);
    if (reproduce->parsed()) return cmd_reproduce(ctx);
    if (manifest->parsed()) return cmd_run_manifest(ctx, f.manifest, err);
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const AssertionFailure& e) {
    err << "assertion failed: " << e.what() << "\n";
    return kExitAssertion;
  } catch (const TrainingFailure& e) {
    err << "training failed at step " << e.step() << ": " << e.what() << "\n";
    return kExitAssertion;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

}  // namespace promptlab
