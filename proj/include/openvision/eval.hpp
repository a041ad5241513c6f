#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "openvision/image.hpp"
#include "openvision/model.hpp"
#include "openvision/records.hpp"

namespace openvision {

enum class Direction { image_to_text, text_to_image };
const char* to_string(Direction direction);

struct RetrievalResult {
  Direction direction = Direction::image_to_text;
  std::map<int, double> recall_at;
};

struct RetrievalReport {
  RetrievalResult image_to_text{Direction::image_to_text, {}};
  RetrievalResult text_to_image{Direction::text_to_image, {}};
};

// Row i of each matrix is a matched pair. A query's rank counts the candidates
// scoring strictly higher plus equal-scoring candidates at a lower index.
// Rows must be unit-norm; k larger than the corpus is a config error.
RetrievalReport retrieval_recall(const Tensor<float>& image_embs, const Tensor<float>& caption_embs,
                                 std::span<const int> ks);

struct ZeroShotResult {
  double accuracy = 0.0;
  std::vector<double> per_class;           // NaN for classes without images
  std::vector<std::int64_t> class_counts;
  std::vector<int> predictions;
};

// Class scores are cosine similarities; argmax ties go to the lowest class index.
ZeroShotResult zero_shot_from_embeddings(const Tensor<float>& image_embs,
                                         const Tensor<float>& class_embs,
                                         std::span<const int> labels);

// "{}" in each template is replaced by the class name.
std::vector<std::string> fill_templates(const std::string& classname,
                                        std::span<const std::string> templates);

// Unit-norm embeddings, computed in chunks of `chunk` rows.
Tensor<float> embed_images(const ParameterStore<float>& params, const VisionConfig& config,
                           std::span<const Image> images, int chunk = 64);
Tensor<float> embed_texts(const ParameterStore<float>& params, const TextConfig& config,
                          std::span<const std::string> texts, int chunk = 64);
// Normalized mean of the normalized template-filled caption embeddings per class.
Tensor<float> class_embeddings(const ParameterStore<float>& params, const TextConfig& config,
                               std::span<const std::string> classnames,
                               std::span<const std::string> templates);

// Images are resized to vision.resolution. labels index into classnames.
ZeroShotResult zero_shot_classify(const ParameterStore<float>& vision, const VisionConfig& vision_config,
                                  const ParameterStore<float>& text, const TextConfig& text_config,
                                  std::span<const std::string> classnames,
                                  std::span<const std::string> templates,
                                  std::span<const Image> images, std::span<const int> labels);

// Case-folded, whitespace-trimmed equality; 0 for empty input.
std::string normalize_answer(std::string_view text);
double vqa_exact_match(std::span<const std::string> predictions, std::span<const std::string> answers);

struct Metric {
  std::string name;
  double value = 0.0;
};

struct EvalReport {
  std::string dataset_id;
  std::string checkpoint_hash;  // 16 hex digits
  std::vector<Metric> metrics;
};

std::string hash_hex(std::uint64_t hash);
// One JSON object per metric line: {"metric", "value", "dataset", "checkpoint"}.
std::string format_report(const EvalReport& report);
void write_report(const std::filesystem::path& path, const EvalReport& report);
std::string render_table(const EvalReport& report);

// Retrieval on captions (synthetic when present, else original) plus zero-shot
// accuracy over single-shape probe records.
EvalReport evaluate_two_tower(const ParameterStore<float>& params, const ModelConfig& model,
                              std::span<const CaptionedImage> records,
                              std::span<const std::string> templates, std::span<const int> ks,
                              const std::string& dataset_id);

}  // namespace openvision
