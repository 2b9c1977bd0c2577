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

#include "promptlab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "promptlab/random.hpp"
#include "promptlab/report.hpp"

namespace promptlab {

namespace {

using json = nlohmann::ordered_json;

constexpr std::uint64_t kTrainingSeedStream = 0x5345'4544;
constexpr std::uint64_t kKMeansStream = 0x4b4d;
constexpr std::uint64_t kProbeSeedStream = 0x5052;

void say(const LogFn& log, const std::string& msg) {
  if (log) log(msg);
}

// Keys of the config that do not influence the pretrained backbone.
const std::set<std::string>& tuning_only_keys() {
  static const std::set<std::string> keys = {
      "lr",        "lr_grid",        "grid_search",  "steps",
      "batch",     "warmup",         "optimizer",    "prompts",
      "large_prompts", "head_layers", "eval_interval", "eval_subset",
      "init_stats_utterances", "seeds", "probe_bootstrap", "probe_train_fraction",
      "pool_include_prompts", "clusters_small", "clusters_large", "ood_family",
      "ood_clips", "raw_bias", "bias_with_prompts"};
  return keys;
}

std::vector<double> column(const std::vector<SeedResult>& seeds,
                           const std::function<const WerTable&(const SeedResult&)>& table,
                           const std::string& arm, const std::string& split) {
  std::vector<double> out;
  for (const auto& s : seeds) out.push_back(find_row(table(s), arm, split).wer);
  return out;
}

std::vector<double> pooled_accuracies(const std::vector<SeedResult>& seeds, const std::string& arm) {
  std::vector<double> out;
  for (const auto& s : seeds) {
    for (const auto& p : s.probes) {
      if (p.arm == arm) out.insert(out.end(), p.accuracies.begin(), p.accuracies.end());
    }
  }
  return out;
}

std::string cmp_detail(const std::string& lhs_name, double lhs, const char* op, const std::string& rhs_name,
                       double rhs) {
  return lhs_name + "=" + fmt(lhs) + " " + op + " " + rhs_name + "=" + fmt(rhs);
}

std::string file_hash(const std::filesystem::path& p) { return sha256_hex(read_file(p)); }

std::string iso_time_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json wer_medians(const std::vector<SeedResult>& seeds,
                 const std::function<const WerTable&(const SeedResult&)>& table) {
  json out = json::object();
  if (seeds.empty()) return out;
  for (const auto& row : table(seeds.front())) {
    out[row.arm][row.split] = median(column(seeds, table, row.arm, row.split));
  }
  return out;
}

}  // namespace

std::string backbone_cache_key(const ExperimentConfig& cfg) {
  std::istringstream in(cfg.to_text());
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto key = line.substr(0, line.find(" = "));
    if (!tuning_only_keys().count(key)) kept += line + "\n";
  }
  return sha256_hex(kept);
}

Corpus build_corpus(const ExperimentConfig& cfg) {
  const SynthWorld world(cfg.synth, cfg.corpus_seed);
  return generate_corpus(world, cfg.corpus_seed);
}

EncoderModel obtain_backbone(const Corpus& corpus, const ExperimentConfig& cfg,
                             const std::filesystem::path& cache_dir, const LogFn& log,
                             double* dev_clean_wer) {
  const auto key = backbone_cache_key(cfg);
  std::filesystem::path cached;
  if (!cache_dir.empty()) {
    cached = cache_dir / ("backbone-" + key.substr(0, 16) + ".plck");
    if (std::filesystem::exists(cached)) {
      const auto ckpt = load_checkpoint(cached);
      const auto it = ckpt.meta.find("cache_key");
      if (it != ckpt.meta.end() && it->second == key) {
        say(log, "backbone: loaded " + cached.string());
        if (dev_clean_wer) dev_clean_wer[0] = std::stod(ckpt.meta.at("dev_clean_wer"));
        return bundle_from_checkpoint(ckpt).encoder;
      }
    }
  }
  say(log, "backbone: pretraining for " + std::to_string(cfg.pretrain_steps) + " steps");
  auto pre = pretrain_backbone(corpus, cfg);
  say(log, "backbone: dev-clean WER " + fmt(pre.dev_clean_wer));
  if (dev_clean_wer) dev_clean_wer[0] = pre.dev_clean_wer;
  if (!cached.empty()) {
    std::filesystem::create_directories(cache_dir);
    ModelBundle bundle{pre.encoder, PromptMatrix(cfg.encoder.d_model), std::nullopt};
    save_checkpoint(cached, make_checkpoint(bundle, {{"cache_key", key},
                                                     {"dev_clean_wer", fmt(pre.dev_clean_wer)}}));
  }
  return std::move(pre.encoder);
}

std::uint64_t training_seed(std::uint64_t root, std::size_t s) {
  return derive_seed(root, {kTrainingSeedStream, s});
}

std::vector<EvalSet> test_sets(const Corpus& corpus) {
  return {{"test_clean", corpus.test_clean}, {"test_other", corpus.test_other}, {"test_noisy", corpus.test_noisy}};
}

std::vector<EvalSet> ood_sets(const Corpus& corpus) {
  return {{"dev_ood_noisy", corpus.dev_ood_noisy}, {"test_ood_noisy", corpus.test_ood_noisy}};
}

std::vector<NoiseClip> bias_clips(const SynthWorld& world, NoiseFamily family) {
  auto clips = world.clips(family, ClipSplit::kTrain);
  std::stable_sort(clips.begin(), clips.end(), [](const NoiseClip& a, const NoiseClip& b) {
    return std::tie(a.stream, a.subtype) < std::tie(b.stream, b.subtype);
  });
  return clips;
}

SeedResult run_seed(const EncoderModel& encoder, const Corpus& corpus, const SynthWorld& world,
                    const ExperimentConfig& cfg, std::uint64_t seed, const LogFn& log) {
  SeedResult r;
  r.seed = seed;
  const auto sets = test_sets(corpus);
  const auto ood = ood_sets(corpus);
  const auto tag = "seed " + std::to_string(seed) + ": ";

  say(log, tag + "tuning baseline arm (m=0)");
  r.baseline = prompt_tune(encoder, corpus, tune_options(cfg, 0, seed));
  say(log, tag + "tuning prompts (m=" + std::to_string(cfg.prompts) + ")");
  r.tuned = prompt_tune(encoder, corpus, tune_options(cfg, cfg.prompts, seed));

  say(log, tag + "evaluating");
  r.baseline_wer = eval_arm(encoder, r.baseline.prompts, r.baseline.head, "baseline", sets);
  r.table1 = attack_random_prompts(encoder, r.tuned.prompts, r.tuned.head, sets, seed);
  for (const auto& row : r.table1) {
    if (row.arm == "tuned") r.table3.push_back(row);
  }
  const auto removed = eval_arm(encoder, r.tuned.prompts.select({}), r.tuned.head, "removed", sets);
  r.table3.insert(r.table3.end(), removed.begin(), removed.end());

  say(log, tag + "single-prompt ablation");
  r.ablation = ablate_single_prompts(encoder, r.tuned.prompts, r.tuned.head, sets);
  r.partition = derive_partition(r.ablation, r.tuned.prompts, cfg.clusters_small,
                                 derive_seed(seed, {kKMeansStream}));
  r.table2 = eval_prompt_subsets(encoder, r.tuned.prompts, r.tuned.head, r.partition, sets);
  try {
    r.projection = project_prompts_2d(r.tuned.prompts);
  } catch (const DegenerateGeometryError& e) {
    say(log, tag + e.what());
  }

  say(log, tag + "noise probes");
  const auto probe_seed = derive_seed(seed, {kProbeSeedStream});
  const std::vector<std::pair<std::string, PromptMatrix>> probe_arms = {
      {"baseline", PromptMatrix(encoder.config().d_model)},
      {"full", r.tuned.prompts},
      {"set1_only", r.tuned.prompts.select(r.partition.set1_content)},
      {"set2_only", r.tuned.prompts.select(r.partition.set2_noise)}};
  for (const auto& [arm, prompts] : probe_arms) {
    const auto pooled = pooled_features(encoder, prompts, corpus.test_noisy, cfg.pool_include_prompts);
    r.probes.push_back(noise_probe(pooled, arm, cfg.probe_train_fraction, cfg.probe_bootstrap, probe_seed));
  }

  say(log, tag + "zero-shot adaptation");
  const auto clips = bias_clips(world, parse_noise_family(cfg.ood_family));
  r.bias = extract_noise_bias(encoder, r.tuned.prompts, clips,
                              {.n_samples = cfg.ood_clips, .raw = cfg.raw_bias,
                               .with_prompts = cfg.bias_with_prompts, .max_frames = cfg.synth.max_frames()});
  r.table4 = zero_shot_adapt_eval(encoder, r.tuned.prompts, r.tuned.head, r.baseline.head, r.partition,
                                  r.bias, ood);
  {
    const std::vector<double> ones(encoder.config().d_model, 1.0);
    const auto identity = shift_noise_prompts(r.tuned.prompts, r.partition, ones);
    const std::vector<EvalSet> test_ood = {ood.back()};
    const auto a = eval_arm(encoder, identity, r.tuned.head, "identity", test_ood).front();
    const auto& v = find_row(r.table4, "vanilla", "test_ood_noisy");
    r.identity_shift_exact = identity.values().same_values(r.tuned.prompts.values()) && a.edits == v.edits &&
                             a.ref_tokens == v.ref_tokens && a.mean_loss == v.mean_loss;
  }
  return r;
}

std::vector<OrderingCheck> ordering_checks(const PipelineResult& result) {
  std::vector<OrderingCheck> out;
  const auto& seeds = result.seeds;
  if (seeds.empty()) return out;
  const auto t1 = [](const SeedResult& s) -> const WerTable& { return s.table1; };
  const auto t2 = [](const SeedResult& s) -> const WerTable& { return s.table2; };
  const auto t3 = [](const SeedResult& s) -> const WerTable& { return s.table3; };
  const auto t4 = [](const SeedResult& s) -> const WerTable& { return s.table4; };
  const auto base = [](const SeedResult& s) -> const WerTable& { return s.baseline_wer; };

  {
    const double tuned = median(column(seeds, t1, "tuned", "test_noisy"));
    const double b = median(column(seeds, base, "baseline", "test_noisy"));
    out.push_back({"table1.tuned_below_baseline", tuned < b, false,
                   cmp_detail("tuned", tuned, "<", "baseline", b)});
  }
  for (const auto& split : {"test_clean", "test_other", "test_noisy"}) {
    const double rnd = median(column(seeds, t1, "random", split));
    const double tuned = median(column(seeds, t1, "tuned", split));
    out.push_back({std::string("table1.random_above_tuned.") + split, rnd > tuned, false,
                   cmp_detail("random", rnd, ">", "tuned", tuned)});
  }
  for (const auto& split : {"test_clean", "test_other", "test_noisy"}) {
    const double rem = median(column(seeds, t3, "removed", split));
    const double tuned = median(column(seeds, t3, "tuned", split));
    out.push_back({std::string("table3.removed_not_below_tuned.") + split, rem >= tuned, false,
                   cmp_detail("removed", rem, ">=", "tuned", tuned)});
  }
  for (const auto& split : {"test_clean", "test_other", "test_noisy"}) {
    const double rem = median(column(seeds, t3, "removed", split));
    const double b = median(column(seeds, base, "baseline", split));
    out.push_back({std::string("table3.removed_not_above_baseline.") + split, rem <= b, true,
                   cmp_detail("removed", rem, "<=", "baseline", b)});
  }
  {
    const double full = median(pooled_accuracies(seeds, "full"));
    const double b = median(pooled_accuracies(seeds, "baseline"));
    out.push_back({"fig2.probe_full_above_baseline", full > b, false, cmp_detail("full", full, ">", "baseline", b)});
  }
  {
    std::vector<double> drop_set2, drop_set1;
    for (const auto& s : seeds) {
      const double full = find_row(s.table2, "full", "test_clean").wer;
      drop_set2.push_back(find_row(s.table2, "set1_only", "test_clean").wer - full);
      drop_set1.push_back(find_row(s.table2, "set2_only", "test_clean").wer - full);
    }
    const double d2 = median(drop_set2), d1 = median(drop_set1);
    out.push_back({"table2.drop_noise_set_hurts_clean_less", d2 <= d1, false,
                   cmp_detail("drop_set2", d2, "<=", "drop_set1", d1)});
    (void)t2;
  }
  {
    const double a2 = median(pooled_accuracies(seeds, "set2_only"));
    const double a1 = median(pooled_accuracies(seeds, "set1_only"));
    out.push_back({"fig5.probe_set2_above_set1", a2 > a1, false, cmp_detail("set2_only", a2, ">", "set1_only", a1)});
  }
  {
    const double sh = median(column(seeds, t4, "shifted", "test_ood_noisy"));
    const double va = median(column(seeds, t4, "vanilla", "test_ood_noisy"));
    const double b = median(column(seeds, t4, "baseline", "test_ood_noisy"));
    out.push_back({"table4.shifted_not_above_vanilla", sh <= va, false, cmp_detail("shifted", sh, "<=", "vanilla", va)});
    out.push_back({"table4.vanilla_below_baseline", va < b, false, cmp_detail("vanilla", va, "<", "baseline", b)});
    bool exact = true;
    for (const auto& s : seeds) exact = exact && s.identity_shift_exact;
    out.push_back({"table4.identity_shift_exact", exact, false, exact ? "bit-exact on every seed" : "mismatch"});
  }
  return out;
}

PipelineResult reproduce_all(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                             const std::filesystem::path& cache_dir, const LogFn& log) {
  cfg.validate();
  PrecisionScope precision_scope(cfg.precision);
  std::filesystem::create_directories(out_dir / "checkpoints");
  std::filesystem::create_directories(out_dir / "records");

  say(log, "corpus: generating (seed " + std::to_string(cfg.corpus_seed) + ")");
  const SynthWorld world(cfg.synth, cfg.corpus_seed);
  const Corpus corpus = generate_corpus(world, cfg.corpus_seed);

  PipelineResult result;
  EncoderModel encoder = obtain_backbone(corpus, cfg, cache_dir, log, &result.pretrain_dev_clean_wer);
  result.encoder_hash = encoder.content_hash();
  std::vector<std::string> ckpt_hashes;
  auto save = [&](const std::string& name, const ModelBundle& bundle, const std::map<std::string, std::string>& meta) {
    const auto path = out_dir / "checkpoints" / name;
    save_checkpoint(path, make_checkpoint(bundle, meta));
    ckpt_hashes.push_back(name + " " + file_hash(path));
    return path;
  };
  save("backbone.plck", {encoder, PromptMatrix(cfg.encoder.d_model), std::nullopt}, {});

  for (std::size_t s = 0; s < cfg.seeds; ++s) {
    const auto seed = training_seed(cfg.seed, s);
    auto r = run_seed(encoder, corpus, world, cfg, seed, log);
    const auto stem = "seed" + std::to_string(s);
    r.baseline.record.config_text = r.tuned.record.config_text = cfg.to_text();
    r.baseline.record.checkpoint =
        save(stem + "_baseline.plck", {encoder, r.baseline.prompts, r.baseline.head}, {{"seed", std::to_string(seed)}})
            .filename()
            .string();
    r.tuned.record.checkpoint =
        save(stem + "_m" + std::to_string(cfg.prompts) + ".plck", {encoder, r.tuned.prompts, r.tuned.head},
             {{"seed", std::to_string(seed)}})
            .filename()
            .string();
    write_file_atomic(out_dir / "records" / (stem + "_baseline.jsonl"), r.baseline.record.to_jsonl());
    write_file_atomic(out_dir / "records" / (stem + "_m" + std::to_string(cfg.prompts) + ".jsonl"),
                      r.tuned.record.to_jsonl());
    write_file_atomic(out_dir / ("noise_bias_" + stem + ".json"), r.bias.to_json());
    result.seeds.push_back(std::move(r));
  }

  if (cfg.large_prompts > 0) {
    LargeResult lr;
    lr.seed = training_seed(cfg.seed, 0);
    say(log, "large prompts: tuning m=" + std::to_string(cfg.large_prompts));
    lr.tuned = prompt_tune(encoder, corpus, tune_options(cfg, cfg.large_prompts, lr.seed));
    const auto sets = test_sets(corpus);
    lr.table1 = attack_random_prompts(encoder, lr.tuned.prompts, lr.tuned.head, sets, lr.seed);
    const std::vector<EvalSet> clean = {sets.front()};
    lr.ablation = ablate_single_prompts(encoder, lr.tuned.prompts, lr.tuned.head, clean);
    lr.partition = derive_partition(lr.ablation, lr.tuned.prompts, cfg.clusters_large,
                                    derive_seed(lr.seed, {kKMeansStream}));
    try {
      lr.projection = project_prompts_2d(lr.tuned.prompts);
    } catch (const DegenerateGeometryError& e) {
      say(log, std::string("large prompts: ") + e.what());
    }
    lr.tuned.record.config_text = cfg.to_text();
    lr.tuned.record.checkpoint = save("seed0_m" + std::to_string(cfg.large_prompts) + ".plck",
                                      {encoder, lr.tuned.prompts, lr.tuned.head}, {{"seed", std::to_string(lr.seed)}})
                                     .filename()
                                     .string();
    write_file_atomic(out_dir / "records" / ("seed0_m" + std::to_string(cfg.large_prompts) + ".jsonl"),
                      lr.tuned.record.to_jsonl());
    result.large = std::move(lr);
  }

  // Tables ------------------------------------------------------------------
  say(log, "writing reports to " + out_dir.string());
  const auto m_str = std::to_string(cfg.prompts);
  CsvTable table1 = wer_csv("table1_analog", true);
  CsvTable table2 = wer_csv("table2_analog", true);
  CsvTable table3 = wer_csv("table3_analog", true);
  CsvTable table4 = wer_csv("table4_analog", true);
  CsvTable fig2("fig2_analog", {"arm", "seed", "bootstrap", "accuracy"});
  CsvTable fig3("fig3_analog", {"prompts", "seed", "prompt_id", "pc1", "pc2", "set"});
  CsvTable fig4("fig4_analog", {"prompts", "seed", "prompt_id", "split", "wer", "delta", "loss_delta"});
  CsvTable fig5("fig5_analog", {"arm", "seed", "bootstrap", "accuracy"});
  CsvTable partition("partition", {"prompts", "seed", "set1_content", "set2_noise"});

  for (const auto& r : result.seeds) {
    const auto seed = fmt(r.seed);
    append_wer_rows(table1, r.baseline_wer, seed, "0");
    append_wer_rows(table1, r.table1, seed, m_str);
    append_wer_rows(table2, r.table2, seed, m_str);
    append_wer_rows(table3, r.baseline_wer, seed, "0");
    append_wer_rows(table3, r.table3, seed, m_str);
    append_wer_rows(table4, r.table4, seed, m_str);
    for (const auto& p : r.probes) {
      auto& csv = (p.arm == "baseline" || p.arm == "full") ? fig2 : fig5;
      for (std::size_t b = 0; b < p.accuracies.size(); ++b) {
        csv.add_row({p.arm, seed, fmt_int(b), fmt(p.accuracies[b])});
      }
    }
    for (const auto& row : r.ablation.rows) {
      for (std::size_t k = 0; k < r.ablation.splits.size(); ++k) {
        fig4.add_row({m_str, seed, fmt_int(row.prompt_id), r.ablation.splits[k], fmt(row.wer[k]), fmt(row.delta[k]),
                      fmt(row.loss_delta[k])});
      }
    }
    auto set_of = [&](const PromptPartition& part, std::size_t i) {
      return std::find(part.set1_content.begin(), part.set1_content.end(), i) != part.set1_content.end() ? "set1"
                                                                                                          : "set2";
    };
    if (r.projection) {
      for (std::size_t i = 0; i < r.projection->coords.size(); ++i) {
        fig3.add_row({m_str, seed, fmt_int(i + 1), fmt(r.projection->coords[i][0]), fmt(r.projection->coords[i][1]),
                      set_of(r.partition, i)});
      }
    }
    partition.add_row({m_str, seed, format_ids(r.partition.set1_content), format_ids(r.partition.set2_noise)});
  }
  if (result.large) {
    const auto& lr = *result.large;
    const auto seed = fmt(lr.seed);
    const auto ms = std::to_string(cfg.large_prompts);
    append_wer_rows(table1, lr.table1, seed, ms);
    for (const auto& row : lr.ablation.rows) {
      fig4.add_row({ms, seed, fmt_int(row.prompt_id), lr.ablation.splits[0], fmt(row.wer[0]), fmt(row.delta[0]),
                    fmt(row.loss_delta[0])});
    }
    if (lr.projection) {
      for (std::size_t i = 0; i < lr.projection->coords.size(); ++i) {
        const bool in1 = std::find(lr.partition.set1_content.begin(), lr.partition.set1_content.end(), i) !=
                         lr.partition.set1_content.end();
        fig3.add_row({ms, seed, fmt_int(i + 1), fmt(lr.projection->coords[i][0]), fmt(lr.projection->coords[i][1]),
                      in1 ? "set1" : "set2"});
      }
    }
    partition.add_row({ms, seed, format_ids(lr.partition.set1_content), format_ids(lr.partition.set2_noise)});
  }
  for (const auto* t : {&table1, &table2, &table3, &table4, &fig2, &fig3, &fig4, &fig5, &partition}) {
    t->write(out_dir / (t->artifact() + ".csv"));
  }

  // Summary -------------------------------------------------------------------
  json summary;
  summary["encoder_hash"] = result.encoder_hash;
  summary["pretrain_dev_clean_wer"] = result.pretrain_dev_clean_wer;
  summary["seeds"] = result.seeds.size();
  if (!result.seeds.empty()) {
    const auto& seeds = result.seeds;
    json t1 = wer_medians(seeds, [](const SeedResult& s) -> const WerTable& { return s.table1; });
    t1["baseline"] = wer_medians(seeds, [](const SeedResult& s) -> const WerTable& { return s.baseline_wer; })["baseline"];
    summary["table1_analog"] = t1;
    summary["table2_analog"] = wer_medians(seeds, [](const SeedResult& s) -> const WerTable& { return s.table2; });
    summary["table3_analog"] = wer_medians(seeds, [](const SeedResult& s) -> const WerTable& { return s.table3; });
    summary["table4_analog"] = wer_medians(seeds, [](const SeedResult& s) -> const WerTable& { return s.table4; });
    json probes = json::object();
    for (const auto& arm : {"baseline", "full", "set1_only", "set2_only"}) {
      probes[arm] = median(pooled_accuracies(seeds, arm));
    }
    summary["fig2_analog"] = {{"baseline", probes["baseline"]}, {"full", probes["full"]}};
    summary["fig5_analog"] = {{"full", probes["full"]}, {"set1_only", probes["set1_only"]},
                              {"set2_only", probes["set2_only"]}};
    json f4 = json::object();
    for (std::size_t k = 0; k < seeds.front().ablation.splits.size(); ++k) {
      std::vector<double> deltas;
      for (const auto& s : seeds) {
        for (const auto& row : s.ablation.rows) deltas.push_back(row.delta[k]);
      }
      f4[seeds.front().ablation.splits[k]] = {{"median_delta", median(deltas)},
                                              {"max_delta", *std::max_element(deltas.begin(), deltas.end())}};
    }
    summary["fig4_analog"] = f4;
    json parts = json::array();
    for (const auto& s : seeds) {
      parts.push_back({{"seed", s.seed}, {"set1_content", format_ids(s.partition.set1_content)},
                       {"set2_noise", format_ids(s.partition.set2_noise)}});
    }
    summary["fig3_analog"] = parts;
    json checks = json::array();
    for (const auto& c : ordering_checks(result)) {
      checks.push_back({{"name", c.name}, {"passed", c.passed}, {"informational", c.informational},
                        {"detail", c.detail}});
    }
    summary["checks"] = checks;
  }
  write_file_atomic(out_dir / "summary.json", summary.dump(2) + "\n");
  write_run_metadata(out_dir, "reproduce-all", cfg, ckpt_hashes);
  return result;
}

void write_run_metadata(const std::filesystem::path& out_dir, const std::string& command,
                        const ExperimentConfig& cfg, const std::vector<std::string>& checkpoint_hashes) {
  json meta = {{"command", command},
               {"tool_version", kToolVersion},
               {"created_utc", iso_time_utc()},
               {"config_hash", cfg.hash()},
               {"seed", cfg.seed},
               {"corpus_seed", cfg.corpus_seed},
               {"precision", to_string(cfg.precision)},
               {"checkpoints", checkpoint_hashes},
               {"notes",
                {{"bias_normalization", cfg.raw_bias ? "raw" : "rms"},
                 {"bias_with_prompts", cfg.bias_with_prompts},
                 {"pool_include_prompts", cfg.pool_include_prompts}}}};
  std::filesystem::create_directories(out_dir);
  write_file_atomic(out_dir / "run_metadata.json", meta.dump(2) + "\n");
}

}  // namespace promptlab
