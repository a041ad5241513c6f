#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace openvision {

// One training record: PNG-encoded RGB image plus the original and synthetic captions.
struct CaptionedImage {
  std::uint64_t id = 0;
  std::vector<std::uint8_t> png;
  std::string caption_original;
  std::string caption_synthetic;  // may be empty for imported data
  std::string meta;               // probe layout; empty for imported data

  friend bool operator==(const CaptionedImage&, const CaptionedImage&) = default;
};

}  // namespace openvision
