#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "openvision/grad_check.hpp"
#include "openvision/graph.hpp"
#include "openvision/model.hpp"

namespace openvision {

// image_emb [N x d]; caption_emb [N*K x d] with the captions of image j in rows j*K .. j*K+K-1.
template <typename T>
struct ContrastiveBatch {
  Tensor<T> image_emb;
  Tensor<T> caption_emb;
  std::int64_t captions_per_image = 1;
  T temperature = T(1);
};

inline constexpr double kUnitNormTolerance = 1e-5;

// Symmetric multi-positive InfoNCE. Image->text: each image's softmax runs over
// all N*K captions and its loss is the mean over its K positives. Text->image:
// each caption's softmax runs over the N images. The result is the mean of the
// two direction means.
template <typename T>
T multi_positive_contrastive(const ContrastiveBatch<T>& batch);

// Fused graph form on already-normalized embeddings. log_scale is the learnable
// log inverse temperature [1]; it is clamped at log(kMaxLogitScale), where its
// gradient is zero.
template <typename T>
Var multi_positive_contrastive(Graph<T>& graph, Var image_emb, Var caption_emb, Var log_scale,
                               std::int64_t captions_per_image);

enum class CaptionSource { synthetic, original, both };
const char* to_string(CaptionSource source);
CaptionSource parse_caption_source(std::string_view text);

struct LossToggles {
  bool use_decoder = true;
  CaptionSource caption_source = CaptionSource::both;
  double lambda_caption = 1.0;
  friend bool operator==(const LossToggles&, const LossToggles&) = default;
};

struct LossBreakdown {
  double contrastive = 0.0;
  double captioning = 0.0;
  double total = 0.0;
  double lambda_caption = 0.0;
  std::int64_t caption_tokens = 0;  // contributing decoder targets
};

template <typename T>
struct TrainBatch {
  Tensor<T> images;  // [N x H x W x 3]
  std::vector<std::string> original;
  std::vector<std::string> synthetic;
};

template <typename T>
struct LossVars {
  Var total;
  Var contrastive;
  Var captioning;  // invalid when the decoder is off
  LossBreakdown breakdown;
};

// Contrastive term over the captions chosen by caption_source plus the
// lambda-weighted captioning term; total is formed in T arithmetic so
// total == contrastive + T(lambda) * captioning holds exactly.
template <typename T>
LossVars<T> total_loss(Binder<T>& bind, const ModelConfig& config, const Tokenizer& tokenizer,
                       const TrainBatch<T>& batch, const LossToggles& toggles);

// Finite-difference check of total_loss in f64 on `batch` probe images rendered
// at the model resolution, with parameters initialized from `seed`.
GradReport two_tower_grad_check(const ModelConfig& model, const LossToggles& toggles, int batch,
                                std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace openvision
