#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <unordered_map>
#include <vector>

#include "openvision/image.hpp"
#include "openvision/objectives.hpp"
#include "openvision/records.hpp"

namespace openvision {

// Decoded-image cache over a record list. Holds at most `capacity` images and
// evicts the oldest insertion first.
class ImageCache {
 public:
  ImageCache(std::span<const CaptionedImage> records, std::size_t capacity);

  const Image& get(std::size_t index);
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t cached() const noexcept { return images_.size(); }

 private:
  std::span<const CaptionedImage> records_;
  std::size_t capacity_;
  std::unordered_map<std::size_t, Image> images_;
  std::deque<std::size_t> order_;
};

// Gathers the indexed records at `resolution` (bilinear resize when the stored
// image differs), optionally flipped horizontally.
template <typename T>
TrainBatch<T> make_train_batch(ImageCache& cache, std::span<const CaptionedImage> records,
                               std::span<const std::int64_t> indices, int resolution,
                               bool flip = false);

template <typename T>
TrainBatch<T> make_train_batch(std::span<const CaptionedImage> records, int resolution);

}  // namespace openvision
