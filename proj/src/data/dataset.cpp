#include "openvision/dataset.hpp"

namespace openvision {

ImageCache::ImageCache(std::span<const CaptionedImage> records, std::size_t capacity)
    : records_(records), capacity_(std::max<std::size_t>(capacity, 1)) {}

const Image& ImageCache::get(std::size_t index) {
  require(index < records_.size(), ErrorKind::data, "record index out of range");
  if (auto it = images_.find(index); it != images_.end()) {
    return it->second;
  }
  if (images_.size() >= capacity_) {
    images_.erase(order_.front());
    order_.pop_front();
  }
  order_.push_back(index);
  return images_.emplace(index, decode_png(records_[index].png)).first->second;
}

template <typename T>
TrainBatch<T> make_train_batch(ImageCache& cache, std::span<const CaptionedImage> records,
                               std::span<const std::int64_t> indices, int resolution, bool flip) {
  require(!indices.empty(), ErrorKind::data, "empty batch");
  std::vector<Image> images;
  images.reserve(indices.size());
  TrainBatch<T> batch;
  for (auto idx : indices) {
    const auto i = static_cast<std::size_t>(idx);
    const Image& src = cache.get(i);
    Image img = (src.height == resolution && src.width == resolution) ? src : resize(src, resolution);
    if (flip) {
      img = flip_horizontal(img);
    }
    images.push_back(std::move(img));
    batch.original.push_back(records[i].caption_original);
    batch.synthetic.push_back(records[i].caption_synthetic);
  }
  batch.images = images_to_tensor<T>(images);
  return batch;
}

template <typename T>
TrainBatch<T> make_train_batch(std::span<const CaptionedImage> records, int resolution) {
  ImageCache cache(records, records.size());
  std::vector<std::int64_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = static_cast<std::int64_t>(i);
  }
  return make_train_batch<T>(cache, records, all, resolution);
}

template TrainBatch<float> make_train_batch(ImageCache&, std::span<const CaptionedImage>,
                                            std::span<const std::int64_t>, int, bool);
template TrainBatch<double> make_train_batch(ImageCache&, std::span<const CaptionedImage>,
                                             std::span<const std::int64_t>, int, bool);
template TrainBatch<float> make_train_batch(std::span<const CaptionedImage>, int);
template TrainBatch<double> make_train_batch(std::span<const CaptionedImage>, int);

}  // namespace openvision
