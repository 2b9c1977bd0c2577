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

#include "promptlab/synth.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>
#include <utility>

#include "promptlab/checkpoint.hpp"

namespace promptlab {

namespace {

constexpr std::uint64_t kTemplateTag = 0x54'4d'50'4c;
constexpr std::uint64_t kProfileTag = 0x50'52'4f'46;
constexpr std::uint64_t kClipTag = 0x43'4c'49'50;
constexpr std::uint64_t kUtteranceTag = 0x55'54'54'52;

double l2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

// Smooth positive spectral profile normalized to unit mean square.
std::vector<double> spectral_profile(std::size_t dims, Rng& rng) {
  std::vector<double> g(dims, 0.15);
  for (int bump = 0; bump < 2; ++bump) {
    const double center = uniform(rng, 0.0, static_cast<double>(dims));
    const double width = uniform(rng, 2.0, 7.0);
    const double height = uniform(rng, 0.5, 1.5);
    for (std::size_t j = 0; j < dims; ++j) {
      const double z = (static_cast<double>(j) - center) / width;
      g[j] += height * std::exp(-0.5 * z * z);
    }
  }
  const double rms = std::sqrt(mean_square(g));
  for (auto& v : g) v /= rms;
  return g;
}

}  // namespace

std::string to_string(NoiseFamily f) {
  switch (f) {
    case NoiseFamily::kTypeA: return "typeA";
    case NoiseFamily::kTypeB: return "typeB";
    case NoiseFamily::kOod: return "ood";
  }
  return "?";
}

NoiseFamily parse_noise_family(const std::string& s) {
  if (s == "typeA") return NoiseFamily::kTypeA;
  if (s == "typeB") return NoiseFamily::kTypeB;
  if (s == "ood" || s == "office") return NoiseFamily::kOod;
  throw ContractError("unknown noise family '" + s + "'");
}

std::string to_string(ClipSplit s) { return s == ClipSplit::kTrain ? "train" : "eval"; }

std::string to_string(SplitId s) {
  switch (s) {
    case SplitId::kTrain: return "train";
    case SplitId::kDevClean: return "dev_clean";
    case SplitId::kDevNoisy: return "dev_noisy";
    case SplitId::kTestClean: return "test_clean";
    case SplitId::kTestOther: return "test_other";
    case SplitId::kTestNoisy: return "test_noisy";
    case SplitId::kDevOodNoisy: return "dev_ood_noisy";
    case SplitId::kTestOodNoisy: return "test_ood_noisy";
  }
  return "?";
}

void SynthConfig::validate() const {
  if (vocab == 0 || feature_dim == 0 || template_len < 2) {
    throw ContractError("synth: vocab, feature_dim must be positive and template_len >= 2");
  }
  if (min_tokens == 0 || min_tokens > max_tokens) throw ContractError("synth: invalid token range");
  if (jitter_sigma < 0 || other_jitter_sigma < 0) throw ContractError("synth: negative jitter");
  if (!(noise_floor >= 0)) throw ContractError("synth: noise_floor must be non-negative");
  if (!(template_scale > 0)) throw ContractError("synth: template_scale must be positive");
  if (corrupt_prob < 0 || corrupt_prob > 1) throw ContractError("synth: corrupt_prob outside [0,1]");
  if (snr_min_db > snr_max_db) throw ContractError("synth: snr_min_db > snr_max_db");
  if (type_a_subtypes == 0 || type_b_subtypes == 0 || ood_subtypes == 0) {
    throw ContractError("synth: every noise family needs at least one subtype");
  }
  if (train_streams == 0 || eval_streams == 0) throw ContractError("synth: stream counts must be positive");
  if (clip_frames < max_frames()) {
    throw ContractError("synth: clip_frames must cover the longest utterance (" +
                        std::to_string(max_frames()) + " frames)");
  }
}

std::size_t SynthConfig::max_frames() const {
  return max_tokens * (template_len + (length_jitter ? 1 : 0));
}

double mean_square(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s / static_cast<double>(v.size());
}

MixResult mix_at_snr(const Tensor& clean, const Tensor& noise, double snr_db, Rng& rng) {
  if (clean.rank() != 2 || noise.rank() != 2 || clean.cols() != noise.cols()) {
    throw DimensionError("mix_at_snr: clean " + shape_string(clean.shape()) + " and noise " +
                         shape_string(noise.shape()) + " disagree");
  }
  const auto t_len = clean.rows(), f = clean.cols();
  if (noise.rows() < t_len) {
    throw ContractError("mix_at_snr: noise has " + std::to_string(noise.rows()) +
                        " frames, utterance needs " + std::to_string(t_len));
  }
  const double p_clean = mean_square(clean.data());
  if (!(p_clean > 0.0)) throw ContractError("mix_at_snr: clean signal has zero power");
  MixResult res;
  res.offset = static_cast<std::size_t>(uniform_int(rng, 0, noise.rows() - t_len));
  const auto crop = noise.data().subspan(res.offset * f, t_len * f);
  const double p_noise = mean_square(crop);
  if (!(p_noise > 0.0)) throw ContractError("mix_at_snr: noise crop has zero power");
  res.alpha = std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> mixed(t_len * f);
  const auto cd = clean.data();
  for (std::size_t i = 0; i < mixed.size(); ++i) mixed[i] = cd[i] + res.alpha * crop[i];
  res.mixed = Tensor(clean.shape(), std::move(mixed));
  return res;
}

double measured_snr_db(const Tensor& clean, const Tensor& mixed) {
  std::vector<double> diff(clean.numel());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = mixed.at(i) - clean.at(i);
  return 10.0 * std::log10(mean_square(clean.data()) / mean_square(diff));
}

std::string NoiseClip::id() const {
  return to_string(family) + "-" + std::to_string(subtype) + "-" + to_string(split) + "-" +
         std::to_string(stream);
}

// ---------------------------------------------------------------------------
// SynthWorld

SynthWorld::SynthWorld(SynthConfig config, std::uint64_t seed) : config_(config), seed_(seed) {
  config_.validate();
  const auto L = config_.template_len, f = config_.feature_dim;
  for (std::size_t tok = 0; tok < config_.vocab; ++tok) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (attempt > 1000) throw ContractError("synth: cannot satisfy template distance floor");
      auto rng = make_rng(seed_, {kTemplateTag, tok, attempt});
      std::vector<double> v(L * f);
      for (auto& x : v) x = normal(rng, 0.0, config_.template_scale);
      bool ok = true;
      for (const auto& other : templates_) {
        if (l2_distance(v, other.pattern.data()) < config_.template_min_distance * config_.template_scale) {
          ok = false;
          break;
        }
      }
      if (ok) {
        templates_.push_back({static_cast<int>(tok), Tensor({L, f}, std::move(v))});
        break;
      }
    }
  }

  const auto n_sub = config_.type_a_subtypes + config_.type_b_subtypes + config_.ood_subtypes;
  for (std::size_t s = 0; s < n_sub; ++s) {
    auto rng = make_rng(seed_, {kProfileTag, s});
    SubtypeProfile p;
    p.gain = spectral_profile(f, rng);
    p.ar_coeff = uniform(rng, 0.6, 0.95);
    p.period = static_cast<std::size_t>(uniform_int(rng, 8, 24));
    p.duty = uniform(rng, 0.3, 0.6);
    p.click_rate = uniform(rng, 0.05, 0.15);
    p.click_decay = uniform(rng, 0.3, 0.7);
    profiles_.push_back(std::move(p));
  }
}

Utterance SynthWorld::synth_utterance(const TokenSequence& tokens, std::uint64_t seed,
                                      double sigma) const {
  if (tokens.empty() || tokens.size() > config_.max_tokens) {
    throw ContractError("synth_utterance: token count " + std::to_string(tokens.size()) +
                        " outside [1," + std::to_string(config_.max_tokens) + "]");
  }
  const auto L = config_.template_len, f = config_.feature_dim;
  auto rng = make_rng(seed, {0x4a49'5454});
  std::vector<double> frames;
  for (int tok : tokens) {
    if (tok < 0 || static_cast<std::size_t>(tok) >= config_.vocab) {
      throw ContractError("synth_utterance: unknown token id " + std::to_string(tok));
    }
    std::size_t len = L;
    if (config_.length_jitter) len = L - 1 + static_cast<std::size_t>(uniform_int(rng, 0, 2));
    const auto pattern = templates_[static_cast<std::size_t>(tok)].pattern.data();
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t src = j * L / len;  // nearest-frame time stretch
      for (std::size_t k = 0; k < f; ++k) {
        double v = pattern[src * f + k];
        if (sigma > 0.0) v += normal(rng, 0.0, sigma);
        frames.push_back(v);
      }
    }
  }
  Utterance u;
  u.seed = seed;
  u.tokens = tokens;
  const auto t_len = frames.size() / f;
  u.clean = Tensor({t_len, f}, std::move(frames));
  u.mixed = u.clean;
  return u;
}

std::vector<int> SynthWorld::subtypes(NoiseFamily family) const {
  std::size_t begin = 0, count = 0;
  switch (family) {
    case NoiseFamily::kTypeA:
      count = config_.type_a_subtypes;
      break;
    case NoiseFamily::kTypeB:
      begin = config_.type_a_subtypes;
      count = config_.type_b_subtypes;
      break;
    case NoiseFamily::kOod:
      begin = config_.type_a_subtypes + config_.type_b_subtypes;
      count = config_.ood_subtypes;
      break;
  }
  std::vector<int> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<int>(begin + i));
  return out;
}

NoiseFamily SynthWorld::family_of(int subtype) const {
  const auto s = static_cast<std::size_t>(subtype);
  if (s < config_.type_a_subtypes) return NoiseFamily::kTypeA;
  if (s < config_.type_a_subtypes + config_.type_b_subtypes) return NoiseFamily::kTypeB;
  if (s < profiles_.size()) return NoiseFamily::kOod;
  throw ContractError("unknown noise subtype " + std::to_string(subtype));
}

std::size_t SynthWorld::streams(ClipSplit split) const {
  return split == ClipSplit::kTrain ? config_.train_streams : config_.eval_streams;
}

NoiseClip SynthWorld::make_clip(int subtype, int stream, ClipSplit split) const {
  const auto family = family_of(subtype);
  if (stream < 0 || static_cast<std::size_t>(stream) >= streams(split)) {
    throw ContractError("noise stream " + std::to_string(stream) + " out of range");
  }
  const auto& p = profiles_[static_cast<std::size_t>(subtype)];
  const auto n = config_.clip_frames, f = config_.feature_dim;
  auto rng = make_rng(seed_, {kClipTag, static_cast<std::uint64_t>(subtype),
                              static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(stream)});
  std::vector<double> v(n * f, 0.0);
  switch (family) {
    case NoiseFamily::kTypeA: {
      // Stationary AR(1) per dimension, shaped by the subtype spectrum.
      const double a = p.ar_coeff, innov = std::sqrt(1.0 - a * a);
      std::vector<double> state(f);
      for (auto& s : state) s = normal(rng);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t k = 0; k < f; ++k) {
          state[k] = a * state[k] + innov * normal(rng);
          v[t * f + k] = p.gain[k] * (config_.noise_floor + state[k]);
        }
      }
      break;
    }
    case NoiseFamily::kTypeB: {
      // White noise gated by a periodic burst envelope.
      const auto phase = static_cast<std::size_t>(uniform_int(rng, 0, p.period - 1));
      const auto on = static_cast<std::size_t>(std::max(1.0, std::round(p.duty * static_cast<double>(p.period))));
      for (std::size_t t = 0; t < n; ++t) {
        const double env = ((t + phase) % p.period) < on ? 1.0 : 0.15;
        for (std::size_t k = 0; k < f; ++k) v[t * f + k] = env * p.gain[k] * (config_.noise_floor + normal(rng));
      }
      break;
    }
    case NoiseFamily::kOod: {
      // Sparse decaying clicks over a weak white floor.
      double level = 0.0;
      for (std::size_t t = 0; t < n; ++t) {
        level *= p.click_decay;
        if (uniform(rng, 0.0, 1.0) < p.click_rate) level += uniform(rng, 3.0, 5.0);
        for (std::size_t k = 0; k < f; ++k) {
          v[t * f + k] = 0.1 * normal(rng) + level * p.gain[k] * normal(rng, 1.0, 0.2);
        }
      }
      break;
    }
  }
  NoiseClip clip;
  clip.family = family;
  clip.subtype = subtype;
  clip.stream = stream;
  clip.split = split;
  clip.frames = Tensor({n, f}, std::move(v));
  return clip;
}

std::vector<NoiseClip> SynthWorld::clips(NoiseFamily family, ClipSplit split) const {
  std::vector<NoiseClip> out;
  for (int s : subtypes(family)) {
    for (std::size_t k = 0; k < streams(split); ++k) out.push_back(make_clip(s, static_cast<int>(k), split));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus

const std::vector<Utterance>& Corpus::split(SplitId id) const {
  switch (id) {
    case SplitId::kTrain: return train;
    case SplitId::kDevClean: return dev_clean;
    case SplitId::kDevNoisy: return dev_noisy;
    case SplitId::kTestClean: return test_clean;
    case SplitId::kTestOther: return test_other;
    case SplitId::kTestNoisy: return test_noisy;
    case SplitId::kDevOodNoisy: return dev_ood_noisy;
    case SplitId::kTestOodNoisy: return test_ood_noisy;
  }
  throw ContractError("unknown split");
}

std::vector<Utterance>& Corpus::split(SplitId id) {
  return const_cast<std::vector<Utterance>&>(std::as_const(*this).split(id));
}

std::vector<SplitId> Corpus::all_splits() {
  return {SplitId::kTrain,     SplitId::kDevClean,  SplitId::kDevNoisy,    SplitId::kTestClean,
          SplitId::kTestOther, SplitId::kTestNoisy, SplitId::kDevOodNoisy, SplitId::kTestOodNoisy};
}

Corpus generate_corpus(const SynthWorld& world, std::uint64_t seed) {
  const auto& cfg = world.config();
  // Clip banks, indexed by subtype then stream.
  std::vector<std::vector<NoiseClip>> train_bank, eval_bank;
  const auto n_sub = cfg.type_a_subtypes + cfg.type_b_subtypes + cfg.ood_subtypes;
  for (std::size_t s = 0; s < n_sub; ++s) {
    auto& tb = train_bank.emplace_back();
    for (std::size_t k = 0; k < cfg.train_streams; ++k) {
      tb.push_back(world.make_clip(static_cast<int>(s), static_cast<int>(k), ClipSplit::kTrain));
    }
    auto& eb = eval_bank.emplace_back();
    for (std::size_t k = 0; k < cfg.eval_streams; ++k) {
      eb.push_back(world.make_clip(static_cast<int>(s), static_cast<int>(k), ClipSplit::kEval));
    }
  }
  std::vector<int> in_domain = world.subtypes(NoiseFamily::kTypeA);
  for (int s : world.subtypes(NoiseFamily::kTypeB)) in_domain.push_back(s);
  const auto ood = world.subtypes(NoiseFamily::kOod);

  struct Plan {
    double sigma;
    double corrupt_prob;
    const std::vector<int>* pool;
    ClipSplit clip_split;
  };
  auto plan_for = [&](SplitId id) -> Plan {
    switch (id) {
      case SplitId::kTrain: return {cfg.jitter_sigma, cfg.corrupt_prob, &in_domain, ClipSplit::kTrain};
      case SplitId::kDevClean:
      case SplitId::kTestClean: return {cfg.jitter_sigma, 0.0, nullptr, ClipSplit::kEval};
      case SplitId::kTestOther: return {cfg.other_jitter_sigma, 0.0, nullptr, ClipSplit::kEval};
      case SplitId::kDevNoisy:
      case SplitId::kTestNoisy: return {cfg.jitter_sigma, 1.0, &in_domain, ClipSplit::kEval};
      // OOD dev mixes use the OOD train-split streams, test mixes the eval
      // streams; neither ever enters training.
      case SplitId::kDevOodNoisy: return {cfg.jitter_sigma, 1.0, &ood, ClipSplit::kTrain};
      case SplitId::kTestOodNoisy: return {cfg.jitter_sigma, 1.0, &ood, ClipSplit::kEval};
    }
    throw ContractError("unknown split");
  };

  Corpus corpus;
  corpus.seed = seed;
  for (SplitId id : Corpus::all_splits()) {
    const auto plan = plan_for(id);
    const std::size_t count = id == SplitId::kTrain ? cfg.n_train : cfg.n_eval;
    auto& out = corpus.split(id);
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      const auto useed = derive_seed(seed, {kUtteranceTag, static_cast<std::uint64_t>(id), i});
      auto rng = Rng(useed);
      const auto n_tok = static_cast<std::size_t>(uniform_int(rng, cfg.min_tokens, cfg.max_tokens));
      TokenSequence tokens(n_tok);
      for (auto& t : tokens) t = static_cast<int>(uniform_int(rng, 0, cfg.vocab - 1));
      Utterance u = world.synth_utterance(tokens, useed, plan.sigma);
      u.id = to_string(id) + "-" + std::to_string(i);
      const bool corrupt = plan.pool && uniform(rng, 0.0, 1.0) < plan.corrupt_prob;
      if (corrupt) {
        const auto& pool = *plan.pool;
        const int subtype = pool[uniform_int(rng, 0, pool.size() - 1)];
        const auto& bank = plan.clip_split == ClipSplit::kTrain ? train_bank : eval_bank;
        const auto& streams = bank[static_cast<std::size_t>(subtype)];
        const auto stream = uniform_int(rng, 0, streams.size() - 1);
        const double snr = uniform(rng, cfg.snr_min_db, cfg.snr_max_db);
        const auto mix = mix_at_snr(u.clean, streams[stream].frames, snr, rng);
        u.mixed = mix.mixed;
        u.noise = NoiseMeta{world.family_of(subtype), subtype, static_cast<int>(stream),
                            plan.clip_split, snr, mix.alpha, mix.offset};
      }
      out.push_back(std::move(u));
    }
  }
  return corpus;
}

std::string manifest_text(const Corpus& corpus) {
  std::ostringstream os;
  os << "# promptlab corpus manifest v1 seed=" << corpus.seed << "\n";
  os << "# split\tid\tseed\ttokens\tfamily\tsubtype\tstream\tsnr_db\talpha\toffset\n";
  os << std::setprecision(17);
  for (SplitId id : Corpus::all_splits()) {
    for (const auto& u : corpus.split(id)) {
      os << to_string(id) << '\t' << u.id << '\t' << u.seed << '\t';
      for (std::size_t i = 0; i < u.tokens.size(); ++i) os << (i ? "," : "") << u.tokens[i];
      if (u.noise) {
        const auto& n = *u.noise;
        os << '\t' << to_string(n.family) << '\t' << n.subtype << '\t' << n.stream << '\t' << n.snr_db
           << '\t' << n.alpha << '\t' << n.offset;
      } else {
        os << "\tclean\t-\t-\t-\t-\t-";
      }
      os << '\n';
    }
  }
  return os.str();
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  write_file_atomic(dir / "manifest.tsv", manifest_text(corpus));
  Checkpoint blob;
  blob.precision = Precision::kF64;
  blob.meta["kind"] = "corpus-features";
  blob.meta["seed"] = std::to_string(corpus.seed);
  for (SplitId id : Corpus::all_splits()) {
    for (const auto& u : corpus.split(id)) {
      blob.tensors.push_back({to_string(id) + "/" + u.id + "/clean", u.clean, false, false});
      blob.tensors.push_back({to_string(id) + "/" + u.id + "/mixed", u.mixed, false, false});
    }
  }
  save_checkpoint(dir / "features.plck", blob);
}

}  // namespace promptlab
