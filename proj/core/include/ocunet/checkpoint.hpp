#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ocunet/kv.hpp"
#include "ocunet/model.hpp"
#include "ocunet/optimizer.hpp"

namespace ocunet {

/// Self-describing binary snapshot: magic "OCUN", format version, the model
/// config plus metadata as a UTF-8 key-value document, a named tensor index,
/// a little-endian float32 payload, and a trailing CRC-32 over everything
/// before it.
struct Checkpoint {
  enum class Kind : std::uint8_t { parameter = 0, buffer = 1, adam_m = 2, adam_v = 3 };

  struct Entry {
    std::string name;
    Kind kind = Kind::parameter;
    Shape shape;
    std::vector<float> values;
  };

  KvDoc meta;  // model.* keys plus train.* bookkeeping
  std::vector<Entry> tensors;

  ModelConfig model_config() const;
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

/// Captures the model parameters and buffers (and optimizer moments when an
/// optimizer is given) into a checkpoint.
Checkpoint snapshot_model(const OCUNet<float>& model, const Adam<float>* optimizer = nullptr);

/// Writes checkpoint tensors back into a built model; name or shape mismatch
/// raises a descriptive error.
void restore_model(OCUNet<float>& model, const Checkpoint& checkpoint,
                   Adam<float>* optimizer = nullptr);

/// Builds the architecture described by the checkpoint and loads its weights.
OCUNet<float> model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace ocunet
