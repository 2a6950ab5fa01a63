#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nexusflow/trainer.hpp"

namespace nexusflow {

inline constexpr const char* kCheckpointFormat = "nexusflow-checkpoint";
inline constexpr int kCheckpointVersion = 1;

/// Line 1: JSON header (format tag, version, layer structure, tensor count,
/// checksum). Then one CSV line per parameter tensor in collect_params order.
std::string save_checkpoint(const MtlModel& model);
/// Rebuilds the model from the header. Wrong tag/version or a checksum
/// mismatch raise ErrorKind::Version; malformed content ErrorKind::Schema.
MtlModel load_checkpoint(const std::string& text);

void write_checkpoint(const std::filesystem::path& path, const MtlModel& model);
MtlModel read_checkpoint(const std::filesystem::path& path);

// FNV-1a over the tensor section.
std::uint64_t checkpoint_checksum(const std::string& body);

}  // namespace nexusflow
