#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "openvision/params.hpp"

namespace openvision {

// Container layout (little-endian):
//   "OVCK" | u16 version | u32 len + config text | u64 tensor count
//   count x { u32 len + name | u8 flags (bit0 decay, bit1 trainable) | u32 rank | rank x i64 dims | f32 data }
struct Checkpoint {
  std::string config_text;
  ParameterStore<float> params;
};

inline constexpr std::uint16_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace openvision
