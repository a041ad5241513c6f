#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "openvision/error.hpp"
#include "openvision/records.hpp"

namespace openvision {

// Shard layout (all integers little-endian):
//   "OVSH" | u16 version | u64 record count
//   count x { u32 payload length | payload }
//   u32 CRC-32 of every preceding byte
// payload = u64 id | u32 len + png | u32 len + original | u32 len + synthetic | u32 len + meta
inline constexpr char kShardMagic[4] = {'O', 'V', 'S', 'H'};
inline constexpr std::uint16_t kShardVersion = 1;

enum class ShardFault { bad_magic, bad_version, truncated, checksum_mismatch, count_mismatch, malformed };

const char* to_string(ShardFault fault);

class ShardError : public Error {
 public:
  ShardError(ShardFault fault, const std::string& message);
  ShardFault fault() const noexcept { return fault_; }

 private:
  ShardFault fault_;
};

std::vector<std::uint8_t> serialize_shard(std::span<const CaptionedImage> records);
std::vector<CaptionedImage> parse_shard(std::span<const std::uint8_t> bytes);

void write_shard(const std::filesystem::path& path, std::span<const CaptionedImage> records);
std::vector<CaptionedImage> read_shard(const std::filesystem::path& path);

// Streams records one at a time; memory is bounded by the largest record. The
// checksum is verified when the last record has been consumed, so next() throws
// on corruption before reporting end-of-shard.
class ShardReader {
 public:
  explicit ShardReader(const std::filesystem::path& path);
  explicit ShardReader(std::unique_ptr<std::istream> stream);

  std::uint64_t declared_count() const noexcept { return count_; }
  std::optional<CaptionedImage> next();

 private:
  void read_exact(void* dst, std::size_t n);
  void read_header();

  std::unique_ptr<std::istream> in_;
  std::uint32_t crc_ = 0;
  std::uint64_t count_ = 0;
  std::uint64_t consumed_ = 0;
  bool finished_ = false;
};

// Reads a directory of <stem>.png + <stem>.txt (original caption) and optional
// <stem>.syn.txt (synthetic caption) triples, ordered by stem.
std::vector<CaptionedImage> import_directory(const std::filesystem::path& dir);

// A shard file, a directory of *.ovsh shards (concatenated in name order), or
// an image + caption directory.
std::vector<CaptionedImage> load_records(const std::filesystem::path& path);

}  // namespace openvision
