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

// Versioned tensor container. Byte layout (all integers little-endian):
//
//   magic        4 bytes  "PLCK"
//   version      u32      currently 1
//   precision    u8       0 = f32 payloads, 1 = f64 payloads
//   meta_count   u32
//   meta entry   u32 key_len, key bytes, u32 value_len, value bytes
//   tensor_count u32
//   tensor entry u32 name_len, name bytes, u8 flags, u8 rank,
//                u64 extent[rank], payload (numel values, row-major,
//                IEEE-754 in the container precision)
//   frozen_hash  32 bytes  SHA-256 of the frozen tensors (see hash_tensors)
//   end magic    4 bytes  "KCLP"
//
// flags bit 0: trainable, bit 1: frozen (covered by frozen_hash).

#ifndef PROMPTLAB_CHECKPOINT_HPP_
#define PROMPTLAB_CHECKPOINT_HPP_

#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "promptlab/ctc.hpp"
#include "promptlab/encoder.hpp"
#include "promptlab/tensor.hpp"

namespace promptlab {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Tensor value;
  bool trainable = false;
  bool frozen = false;
};

struct Checkpoint {
  Precision precision = Precision::kF32;
  std::map<std::string, std::string> meta;
  std::vector<CheckpointTensor> tensors;
  /// Hex SHA-256 of the frozen tensors; filled by save/load.
  std::string frozen_hash;

  const CheckpointTensor* find(std::string_view name) const;
  std::vector<NamedTensor> with_prefix(std::string_view prefix) const;
};

std::string sha256_hex(std::string_view bytes);

/// SHA-256 over (name, shape, values as f64 bytes) for each tensor, in name
/// order. Independent of the order of the input list.
std::string hash_tensors(const std::vector<NamedTensor>& tensors);

/// Hash of the tensors flagged frozen.
std::string frozen_hash(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Parses a container. Throws CheckpointError naming the failing section
/// (and the last tensor read) on corrupt or truncated input.
Checkpoint parse_checkpoint(std::string_view bytes);

/// Atomic write: temp file in the same directory, then rename.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes text atomically (temp + rename).
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

// Model bundles --------------------------------------------------------------

/// A frozen encoder with optional prompts and decoder head.
struct ModelBundle {
  EncoderModel encoder;
  PromptMatrix prompts;
  std::optional<DecoderHead> head;
};

Checkpoint make_checkpoint(const ModelBundle& bundle,
                           const std::map<std::string, std::string>& extra_meta = {});
ModelBundle bundle_from_checkpoint(const Checkpoint& ckpt);

struct CheckpointReport {
  bool ok = false;
  std::uint32_t version = 0;
  std::string precision;
  std::size_t layers = 0, d_model = 0, heads = 0, prompts = 0, vocab = 0;
  std::size_t prompt_parameters = 0, head_parameters = 0, frozen_parameters = 0;
  std::size_t trainable_parameters() const { return prompt_parameters + head_parameters; }
  std::string frozen_hash;
  std::vector<std::string> tensor_table;  // "name shape" lines
  std::string message;
};

/// Validates a checkpoint file: container version, shape table against the
/// hyperparameters and the frozen-weight hash.
CheckpointReport validate_checkpoint(const std::filesystem::path& path);

}  // namespace promptlab

#endif  // PROMPTLAB_CHECKPOINT_HPP_
