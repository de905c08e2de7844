#pragma once

#include <filesystem>
#include <string>

#include "smm/trainer.hpp"

namespace smm {

// Binary layout, all integers little-endian:
//   "SMMCKPT\0" | u32 version | u32 scalar bytes | u32 section count
//   per section: u32 name length, name, u64 payload length, payload
//   u32 CRC-32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const TrainerState& state);
TrainerState decode_checkpoint(const std::string& bytes);

// Writes to a temporary file and renames, so a failed run never leaves a
// half-written checkpoint behind.
void save_checkpoint(const TrainerState& state, const std::filesystem::path& path);
TrainerState load_checkpoint(const std::filesystem::path& path);

// Text forms of the architecture descriptors stored in a checkpoint.
std::string to_text(const ScoreArch& arch);
std::string to_text(const GeneratorArch& arch);
ScoreArch parse_score_arch(const std::string& text);
GeneratorArch parse_generator_arch(const std::string& text);

}  // namespace smm
