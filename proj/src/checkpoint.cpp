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

#include "promptlab/checkpoint.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>

namespace promptlab {

namespace {

static_assert(std::endian::native == std::endian::little, "container I/O assumes little-endian");

constexpr char kMagic[4] = {'P', 'L', 'C', 'K'};
constexpr char kEndMagic[4] = {'K', 'C', 'L', 'P'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

std::string to_hex(const unsigned char* bytes, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s(2 * n, '0');
  for (std::size_t i = 0; i < n; ++i) {
    s[2 * i] = kDigits[bytes[i] >> 4];
    s[2 * i + 1] = kDigits[bytes[i] & 0xf];
  }
  return s;
}

std::string from_hex(std::string_view hex) {
  std::string out(hex.size() / 2, '\0');
  auto nib = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    const int hi = nib(hex[2 * i]), lo = nib(hex[2 * i + 1]);
    if (hi < 0 || lo < 0) throw CheckpointError("invalid hex digest");
    out[i] = static_cast<char>(hi * 16 + lo);
  }
  return out;
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  void need(std::size_t n, const std::string& section) {
    if (pos_ + n > bytes_.size()) {
      std::string msg = "checkpoint truncated in section '" + section + "'";
      msg += last_tensor_.empty() ? " (no tensor read yet)"
                                  : " (last readable tensor: '" + last_tensor_ + "')";
      throw CheckpointError(msg);
    }
  }

  template <typename T>
  T get(const std::string& section) {
    need(sizeof(T), section);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n, const std::string& section) {
    need(n, section);
    auto v = bytes_.substr(pos_, n);
    pos_ += n;
    return v;
  }

  std::string get_string(const std::string& section) {
    const auto n = get<std::uint32_t>(section);
    return std::string(take(n, section));
  }

  bool at_end() const { return pos_ == bytes_.size(); }
  void set_last_tensor(std::string name) { last_tensor_ = std::move(name); }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
  std::string last_tensor_;
};

std::size_t meta_size(const std::map<std::string, std::string>& meta, const std::string& key) {
  auto it = meta.find(key);
  if (it == meta.end()) throw CheckpointError("checkpoint metadata missing key '" + key + "'");
  try {
    return static_cast<std::size_t>(std::stoull(it->second));
  } catch (const std::exception&) {
    throw CheckpointError("checkpoint metadata '" + key + "' is not an integer");
  }
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw std::runtime_error("sha256: digest failed");
  }
  return to_hex(digest, len);
}

std::string hash_tensors(const std::vector<NamedTensor>& tensors) {
  std::vector<const NamedTensor*> order;
  for (const auto& t : tensors) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->first < b->first; });
  std::string buf;
  for (const auto* nt : order) {
    put_string(buf, nt->first);
    put<std::uint8_t>(buf, static_cast<std::uint8_t>(nt->second.rank()));
    for (auto e : nt->second.shape()) put<std::uint64_t>(buf, e);
    for (double v : nt->second.data()) put<double>(buf, v);
  }
  return sha256_hex(buf);
}

std::string frozen_hash(const Checkpoint& ckpt) {
  std::vector<NamedTensor> frozen;
  for (const auto& t : ckpt.tensors) {
    if (t.frozen) frozen.emplace_back(t.name, t.value);
  }
  return hash_tensors(frozen);
}

const CheckpointTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<NamedTensor> Checkpoint::with_prefix(std::string_view prefix) const {
  std::vector<NamedTensor> out;
  for (const auto& t : tensors) {
    if (t.name.starts_with(prefix)) out.emplace_back(t.name, t.value);
  }
  return out;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out;
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  const bool f32 = ckpt.precision == Precision::kF32;
  put<std::uint8_t>(out, f32 ? 0 : 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    put_string(out, k);
    put_string(out, v);
  }
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    put_string(out, t.name);
    put<std::uint8_t>(out, static_cast<std::uint8_t>((t.trainable ? 1 : 0) | (t.frozen ? 2 : 0)));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(t.value.rank()));
    for (auto e : t.value.shape()) put<std::uint64_t>(out, e);
    for (double v : t.value.data()) {
      if (f32) {
        const auto fv = static_cast<float>(v);
        if (static_cast<double>(fv) != v) {
          throw CheckpointError("tensor '" + t.name + "' holds values not representable in f32");
        }
        put<float>(out, fv);
      } else {
        put<double>(out, v);
      }
    }
  }
  const auto digest = from_hex(frozen_hash(ckpt));
  out.append(digest);
  out.append(kEndMagic, 4);
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  Reader r(bytes);
  Checkpoint ckpt;
  if (r.take(4, "header") != std::string_view(kMagic, 4)) {
    throw CheckpointError("not a checkpoint container (bad magic in section 'header')");
  }
  const auto version = r.get<std::uint32_t>("header");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported container version " + std::to_string(version) +
                          " in section 'header'");
  }
  const auto prec = r.get<std::uint8_t>("header");
  if (prec > 1) throw CheckpointError("invalid precision tag in section 'header'");
  ckpt.precision = prec == 0 ? Precision::kF32 : Precision::kF64;
  const auto n_meta = r.get<std::uint32_t>("metadata");
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.get_string("metadata");
    auto v = r.get_string("metadata");
    ckpt.meta.emplace(std::move(k), std::move(v));
  }
  const auto n_tensors = r.get<std::uint32_t>("tensor table");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    CheckpointTensor t;
    t.name = r.get_string("tensor table");
    const std::string section = "tensor '" + t.name + "'";
    const auto flags = r.get<std::uint8_t>(section);
    t.trainable = flags & 1;
    t.frozen = flags & 2;
    const auto rank = r.get<std::uint8_t>(section);
    if (rank == 0) throw CheckpointError(section + " has rank 0");
    Shape shape(rank);
    for (auto& e : shape) {
      e = r.get<std::uint64_t>(section);
      if (e == 0 || e > (1ULL << 32)) throw CheckpointError(section + " has an invalid extent");
    }
    const auto n = shape_numel(shape);
    std::vector<double> data(n);
    const std::size_t width = ckpt.precision == Precision::kF32 ? 4 : 8;
    r.need(n * width, section);
    for (auto& v : data) {
      v = ckpt.precision == Precision::kF32 ? static_cast<double>(r.get<float>(section))
                                            : r.get<double>(section);
    }
    try {
      t.value = Tensor(std::move(shape), std::move(data));
    } catch (const std::exception& e) {
      throw CheckpointError(section + ": " + e.what());
    }
    r.set_last_tensor(t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  const auto digest = r.take(32, "frozen hash");
  if (r.take(4, "trailer") != std::string_view(kEndMagic, 4)) {
    throw CheckpointError("bad end marker in section 'trailer'");
  }
  if (!r.at_end()) throw CheckpointError("trailing bytes after section 'trailer'");
  ckpt.frozen_hash = to_hex(reinterpret_cast<const unsigned char*>(digest.data()), digest.size());
  const auto recomputed = frozen_hash(ckpt);
  if (recomputed != ckpt.frozen_hash) {
    throw CheckpointError("frozen-weight hash mismatch in section 'frozen hash' (stored " +
                          ckpt.frozen_hash + ", computed " + recomputed + ")");
  }
  return ckpt;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  namespace fs = std::filesystem;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::random_device rd;
  auto tmp = path;
  tmp += ".tmp." + std::to_string(rd());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw CheckpointError("checkpoint not found: " + path.string());
  return parse_checkpoint(read_file(path));
}

Checkpoint make_checkpoint(const ModelBundle& bundle,
                           const std::map<std::string, std::string>& extra_meta) {
  Checkpoint ckpt;
  ckpt.precision = precision();
  const auto& cfg = bundle.encoder.config();
  ckpt.meta = extra_meta;
  ckpt.meta["encoder.layers"] = std::to_string(cfg.layers);
  ckpt.meta["encoder.d_model"] = std::to_string(cfg.d_model);
  ckpt.meta["encoder.heads"] = std::to_string(cfg.heads);
  ckpt.meta["encoder.ffn"] = std::to_string(cfg.ffn);
  ckpt.meta["encoder.feature_dim"] = std::to_string(cfg.feature_dim);
  ckpt.meta["encoder.frozen"] = bundle.encoder.frozen() ? "1" : "0";
  ckpt.meta["prompts.count"] = std::to_string(bundle.prompts.count());
  for (auto& [name, t] : bundle.encoder.named_tensors()) {
    ckpt.tensors.push_back({name, t, false, true});
  }
  if (!bundle.prompts.empty()) ckpt.tensors.push_back({"prompts", bundle.prompts.values(), true, false});
  if (bundle.head) {
    ckpt.meta["head.layers"] = std::to_string(bundle.head->layers());
    ckpt.meta["head.vocab"] = std::to_string(bundle.head->vocab());
    for (auto& [name, t] : bundle.head->named_tensors()) ckpt.tensors.push_back({name, t, true, false});
  }
  ckpt.frozen_hash = frozen_hash(ckpt);
  return ckpt;
}

ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt) {
  EncoderConfig cfg;
  cfg.layers = meta_size(ckpt.meta, "encoder.layers");
  cfg.d_model = meta_size(ckpt.meta, "encoder.d_model");
  cfg.heads = meta_size(ckpt.meta, "encoder.heads");
  cfg.ffn = meta_size(ckpt.meta, "encoder.ffn");
  cfg.feature_dim = meta_size(ckpt.meta, "encoder.feature_dim");
  ModelBundle b;
  try {
    b.encoder = EncoderModel::from_tensors(cfg, ckpt.with_prefix("encoder."), true);
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(std::string("encoder section: ") + e.what());
  }
  const auto m = meta_size(ckpt.meta, "prompts.count");
  b.prompts = PromptMatrix(cfg.d_model);
  if (m > 0) {
    const auto* p = ckpt.find("prompts");
    if (!p) throw CheckpointError("prompts section: tensor 'prompts' missing");
    if (p->value.shape() != Shape{m, cfg.d_model}) {
      throw CheckpointError("prompts section: expected " + shape_string({m, cfg.d_model}) + ", got " +
                            shape_string(p->value.shape()));
    }
    b.prompts = PromptMatrix(p->value);
  }
  if (ckpt.meta.count("head.layers")) {
    try {
      b.head = DecoderHead::from_tensors(cfg.d_model, meta_size(ckpt.meta, "head.vocab"),
                                         meta_size(ckpt.meta, "head.layers"), ckpt.with_prefix("head."));
    } catch (const std::invalid_argument& e) {
      throw CheckpointError(std::string("head section: ") + e.what());
    }
  }
  return b;
}

CheckpointReport validate_checkpoint(const std::filesystem::path& path) {
  CheckpointReport rep;
  Checkpoint ckpt;
  try {
    ckpt = load_checkpoint(path);
  } catch (const CheckpointError& e) {
    rep.message = e.what();
    return rep;
  }
  rep.version = kCheckpointVersion;
  rep.precision = to_string(ckpt.precision);
  rep.frozen_hash = ckpt.frozen_hash;
  for (const auto& t : ckpt.tensors) rep.tensor_table.push_back(t.name + " " + shape_string(t.value.shape()));
  try {
    const auto b = bundle_from_checkpoint(ckpt);
    const auto& cfg = b.encoder.config();
    rep.layers = cfg.layers;
    rep.d_model = cfg.d_model;
    rep.heads = cfg.heads;
    rep.prompts = b.prompts.count();
    rep.prompt_parameters = b.prompts.count() * b.prompts.dim();
    rep.head_parameters = b.head ? b.head->parameter_count() : 0;
    rep.vocab = b.head ? b.head->vocab() : 0;
    rep.frozen_parameters = b.encoder.parameter_count();
    if (b.encoder.content_hash() != ckpt.frozen_hash) {
      rep.message = "encoder content hash does not match stored frozen hash";
      return rep;
    }
  } catch (const std::exception& e) {
    rep.message = e.what();
    return rep;
  }
  rep.ok = true;
  rep.message = "OK";
  return rep;
}

}  // namespace promptlab
