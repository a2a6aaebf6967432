#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "preformer/model.hpp"

namespace preformer {

// Binary layout, all integers and floats little-endian:
//
//   "PFMRCKPT"                  8-byte magic
//   u32 version                 currently 1
//   u32 field_count             then per field:
//     u16 name_len, name bytes, u8 type (0 int64, 1 float64, 2 bool, 3 string)
//     payload (i64 | f64 | u8 | u32 len + bytes)
//   u32 tensor_count            then per tensor:
//     u16 name_len, name bytes, u32 ndim (always 2), u64 dims[ndim],
//     f64 values[prod(dims)] row-major
//   u32 crc32                   over every preceding byte
//
// Fields named "model.*" carry every ModelConfig member; any other fields
// are free-form metadata.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Packs a model's parameters plus `extra` tensors (e.g. normalizer stats).
Checkpoint make_checkpoint(const Preformer& model, std::map<std::string, std::string> metadata = {},
                           std::vector<std::pair<std::string, Matrix>> extra = {});
/// Rebuilds the model; every named parameter must be present with its shape.
Preformer model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace preformer
