// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mobo/numerics/tensor.hpp"

namespace mobo::trainer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary layout, all integers little-endian:
///   "MOBO" | u32 version | u64 len, config text | u64 stage | u64 step |
///   u64 len, rng state text | u32 crc32 of the header fields after version |
///   u64 tensor count | tensors...
/// Each tensor: u32 name length, name, u8 dtype (1 = f64), u8 rank,
/// u64 dims[rank], f64 payload, u32 crc32 over the record up to the crc.
struct CheckpointData {
  std::string config;
  std::uint64_t stage = 0;  // stage index in progress (== stage count when done)
  std::uint64_t step = 0;   // steps completed within that stage
  std::string rng_state;
  NamedTensors tensors;
};

std::vector<unsigned char> encode_checkpoint(const CheckpointData& ck);
/// FormatError for a wrong magic or version; IntegrityError naming the byte
/// offset for truncation, trailing bytes or a checksum mismatch.
CheckpointData decode_checkpoint(const std::vector<unsigned char>& bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const CheckpointData& ck);
/// IoError if the file cannot be read, plus the decode errors.
CheckpointData load_checkpoint(const std::filesystem::path& path);

/// zlib CRC-32 of a byte range.
std::uint32_t crc32_of(const unsigned char* data, std::size_t n);

}  // namespace mobo::trainer
