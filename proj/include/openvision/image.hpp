#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "openvision/tensor.hpp"

namespace openvision {

// RGB image, row-major HWC, channel values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  friend bool operator==(const Image&, const Image&) = default;
};

// 8-bit RGB PNG; values are rounded to the nearest of 256 levels.
std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(std::span<const std::uint8_t> bytes);
Image load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& image);

// Bilinear resampling with half-pixel centers; output clamped to [0, 1].
Image resize_bilinear(const Image& image, int height, int width);
// Square resize; target must be >= 8.
Image resize(const Image& image, int target);
Image flip_horizontal(const Image& image);
// Crop rows [y, y+h) and cols [x, x+w); out-of-range pixels read as `pad`.
Image crop(const Image& image, int y, int x, int h, int w, float pad = 0.0f);

// Batch of equally sized images as [N x H x W x 3].
template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images);

}  // namespace openvision
