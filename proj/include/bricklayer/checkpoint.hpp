#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include "bricklayer/config.hpp"
#include "bricklayer/trainer.hpp"

namespace bricklayer {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "BRKLCKPT", u32 version, then tagged sections (4-byte tag, u64
// length, payload), then a u64 FNV-1a checksum over every preceding byte.
// All integers and doubles are little-endian.
std::string encode_checkpoint(const RunConfig& cfg, const ProtocolRunner& runner);

struct LoadedCheckpoint {
  RunConfig config;
  std::unique_ptr<ProtocolRunner> runner;
};

// Throws VersionMismatch for a foreign format version and CorruptFile for
// truncation, bad checksum or malformed sections.
LoadedCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::string& path, const RunConfig& cfg, const ProtocolRunner& runner);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace bricklayer
