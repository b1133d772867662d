#pragma once

#include <cstdint>
#include <string>

#include "biasbench/model.hpp"

namespace bb {

// Binary model checkpoint: magic "BBCK", u16 version, the model config, a
// named tensor table (u16 name length, u8 ndim, u32 dims, raw little-endian
// f32 data), and a trailing FNV-1a 64-bit digest over everything before it.
// Loading verifies magic, version, digest, and tensor names/shapes, and
// reproduces forward outputs bit-exactly.
void save_checkpoint(const std::string& path, const PolicyModel& model);
PolicyModel load_checkpoint(const std::string& path);

std::string checkpoint_bytes(const PolicyModel& model);
PolicyModel checkpoint_from_bytes(const std::string& bytes, const std::string& origin = "<memory>");

std::uint64_t fnv1a64(const void* data, std::size_t n);

}  // namespace bb
