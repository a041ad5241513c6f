#include "openvision/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

namespace openvision {

std::vector<std::uint8_t> encode_png(const Image& image) {
  require(image.height > 0 && image.width > 0, ErrorKind::data, "cannot encode an empty image");
  std::vector<std::uint8_t> raw(image.pixels.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    raw[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  require(png_image_write_to_memory(&png, nullptr, &size, 0, raw.data(), 0, nullptr) != 0,
          ErrorKind::data, std::string("png size query failed: ") + png.message);
  std::vector<std::uint8_t> out(size);
  require(png_image_write_to_memory(&png, out.data(), &size, 0, raw.data(), 0, nullptr) != 0,
          ErrorKind::data, std::string("png encode failed: ") + png.message);
  out.resize(size);
  return out;
}

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  if (png_image_begin_read_from_memory(&png, bytes.data(), bytes.size()) == 0) {
    fail(ErrorKind::data, std::string("png decode failed: ") + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> raw(PNG_IMAGE_SIZE(png));
  if (png_image_finish_read(&png, nullptr, raw.data(), 0, nullptr) == 0) {
    png_image_free(&png);
    fail(ErrorKind::data, std::string("png decode failed: ") + png.message);
  }
  Image image(static_cast<int>(png.height), static_cast<int>(png.width));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    image.pixels[i] = static_cast<float>(raw[i]) / 255.0f;
  }
  return image;
}

Image load_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorKind::io, "cannot open image '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

void save_png(const std::filesystem::path& path, const Image& image) {
  const auto bytes = encode_png(image);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(out.good(), ErrorKind::io, "cannot write image '" + path.string() + "'");
}

Image resize_bilinear(const Image& image, int height, int width) {
  require(image.height > 0 && image.width > 0, ErrorKind::data, "cannot resize an empty image");
  require(height >= 1 && width >= 1, ErrorKind::config, "resize target must be positive");
  if (height == image.height && width == image.width) {
    return image;
  }
  Image out(height, width);
  const double sy = static_cast<double>(image.height) / height;
  const double sx = static_cast<double>(image.width) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, image.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1.0 - wx) + image.at(y0, x1, c) * wx;
        const double bottom = image.at(y1, x0, c) * (1.0 - wx) + image.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(std::clamp(top * (1.0 - wy) + bottom * wy, 0.0, 1.0));
      }
    }
  }
  return out;
}

Image resize(const Image& image, int target) {
  require(target >= 8, ErrorKind::config, "resize target must be >= 8 px");
  return resize_bilinear(image, target, target);
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
      }
    }
  }
  return out;
}

Image crop(const Image& image, int y, int x, int h, int w, float pad) {
  Image out(h, w, pad);
  for (int r = 0; r < h; ++r) {
    const int sy = y + r;
    if (sy < 0 || sy >= image.height) {
      continue;
    }
    for (int c = 0; c < w; ++c) {
      const int sx = x + c;
      if (sx < 0 || sx >= image.width) {
        continue;
      }
      for (int ch = 0; ch < 3; ++ch) {
        out.at(r, c, ch) = image.at(sy, sx, ch);
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> images_to_tensor(std::span<const Image> images) {
  require(!images.empty(), ErrorKind::data, "empty image batch");
  const int h = images.front().height;
  const int w = images.front().width;
  Tensor<T> out({static_cast<std::int64_t>(images.size()), h, w, 3});
  std::size_t offset = 0;
  for (const auto& img : images) {
    require(img.height == h && img.width == w, ErrorKind::dimension,
            "image batch has mixed sizes");
    std::copy(img.pixels.begin(), img.pixels.end(), out.ptr() + offset);
    offset += img.pixels.size();
  }
  return out;
}

template Tensor<float> images_to_tensor<float>(std::span<const Image>);
template Tensor<double> images_to_tensor<double>(std::span<const Image>);

}  // namespace openvision
