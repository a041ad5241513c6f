#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "openvision/image.hpp"
#include "openvision/model.hpp"
#include "openvision/probe.hpp"
#include "openvision/trainer.hpp"

namespace openvision {

struct AnyResGrid {
  int rows = 1;
  int cols = 1;
  int base = 336;

  int tiles() const { return rows * cols; }
  int crops() const { return tiles() + 1; }  // plus the global thumbnail
  friend bool operator==(const AnyResGrid&, const AnyResGrid&) = default;
};

// (rows, cols) pairs: 1x1, 1x2, 2x1, 1x3, 3x1, 2x2, 1x4, 4x1.
std::vector<std::pair<int, int>> default_grids();
// Every (rows, cols) with rows, cols <= max_side and rows * cols <= max_tiles.
std::vector<std::pair<int, int>> grids_up_to(int max_side, int max_tiles);

// Image is `height` x `width` pixels. Among the allowed grids, picks the one that
// keeps the most image resolution after an aspect-preserving fit into
// (rows*base) x (cols*base) (never counting upscaling), then the least padded
// area, then fewer tiles, then rows <= cols.
AnyResGrid select_grid(int height, int width, int base,
                       std::span<const std::pair<int, int>> allowed);
AnyResGrid select_grid(int height, int width, int base = 336);

// Unused canvas area of the chosen grid as a fraction of the canvas.
double wasted_fraction(int height, int width, const AnyResGrid& grid);

// rows*cols base x base tiles of the aspect-preserving, centered, padded resize,
// in row-major order, followed by the whole image resized to base x base.
std::vector<Image> tile(const Image& image, const AnyResGrid& grid, float pad = 0.5f);

inline std::int64_t visual_token_count(int crops, int base, int patch) {
  const std::int64_t side = base / patch;
  return crops * side * side;
}

struct LmConfig {
  int layers = 2;
  int width = 64;
  int heads = 4;
  int mlp_dim = 0;
  int context = 256;
  std::string tokenizer = "byte";

  int mlp() const { return mlp_dim > 0 ? mlp_dim : 4 * width; }
  void validate() const;
  friend bool operator==(const LmConfig&, const LmConfig&) = default;
};

// Decoder-only LM under lm/: tok_embed, blocks, ln_final, head.
std::vector<ParamSpec> lm_param_specs(const LmConfig& config, int vocab_size);

struct MmSequence {
  Var embeddings;                     // [length x lm_width]
  std::vector<std::int32_t> targets;  // next-token target per position, -1 where no loss
  std::vector<std::uint8_t> loss_mask;  // 1 where targets holds an answer token
  std::int64_t visual = 0;
  std::int64_t length = 0;
};

inline constexpr std::int32_t kNoTarget = -1;

// [visual tokens][prompt][answer]. visual may be invalid (no image). The loss
// covers answer positions only: each answer token is predicted from the
// position before it. Throws context_overflow when the sequence exceeds the LM context.
template <typename T>
MmSequence build_mm_sequence(Binder<T>& bind, const LmConfig& config, Var visual,
                             std::span<const std::int32_t> prompt_ids,
                             std::span<const std::int32_t> answer_ids);

// Causal LM over a batch of equal-length sequences: embeddings [batch*len x width] -> logits.
template <typename T>
Var lm_logits(Binder<T>& bind, const LmConfig& config, Var embeddings, std::int64_t batch);

enum class TuneMode { frozen_encoder, full_finetune };
const char* to_string(TuneMode mode);
TuneMode parse_tune_mode(std::string_view text);

struct TuneMultipliers {
  double vision = 0.1;
  double projector = 1.0;
  double lm = 1.0;
  friend bool operator==(const TuneMultipliers&, const TuneMultipliers&) = default;
};

// frozen_encoder forces the vision multiplier to exactly 0.
TuneMultipliers effective_multipliers(TuneMode mode, TuneMultipliers requested);

struct VqaExample {
  Image image;
  std::string question;
  std::string answer;
};

struct FinetuneStage {
  std::string name;
  std::int64_t steps = 100;
  int batch = 8;
  double lr = 1e-3;
  bool train_lm = true;  // false trains only the projector (alignment stage)
  std::string data;      // VQA JSON-lines path; empty means generated probe VQA

  friend bool operator==(const FinetuneStage&, const FinetuneStage&) = default;
};

struct MllmConfig {
  VisionConfig vision;
  ProjectorConfig projector;
  LmConfig lm;
  bool anyres = false;
  int max_tiles = 4;

  void validate() const;
};

struct FinetuneOptions {
  TuneMode mode = TuneMode::frozen_encoder;
  TuneMultipliers multipliers;
  AdamWConfig optimizer{.weight_decay = 0.0};
  std::uint64_t seed = 0;
  std::filesystem::path log_path;
  bool strict = true;
  std::function<void(int stage, std::int64_t step, double loss)> on_step;
};

// Encoder inputs for one image: a single base-resolution resize, or the anyres
// tiles plus thumbnail when enabled.
std::vector<Image> mllm_crops(const Image& image, const MllmConfig& config);

// vision/ + projector/ + lm/ parameters.
ParameterStore<float> init_mllm(const MllmConfig& config, const ParameterStore<float>& vision,
                                std::uint64_t seed);

// Answer loss of one batch of examples.
template <typename T>
Var mllm_loss(Binder<T>& bind, const MllmConfig& config, const Tokenizer& tokenizer,
              std::span<const VqaExample* const> batch);

// Runs the stage list in order, each on its own data.
void finetune(const FinetuneOptions& options, const MllmConfig& config,
              const std::vector<FinetuneStage>& stages,
              const std::vector<std::vector<VqaExample>>& stage_data, ParameterStore<float>& weights);

// Greedy decoding until eos or max_new tokens.
std::string generate_answer(const ParameterStore<float>& weights, const MllmConfig& config,
                            const Image& image, const std::string& question, int max_new = 16);

// JSON lines: {"image": path, "question": ..., "answer": ...}
std::vector<VqaSample> read_vqa_jsonl(const std::filesystem::path& path);
void write_vqa_jsonl(const std::filesystem::path& path, std::span<const VqaSample> samples);
// Resolves image paths relative to the file's directory.
std::vector<VqaExample> load_vqa_examples(const std::filesystem::path& path);

// Color and shape questions for every single-shape probe record.
std::vector<VqaExample> probe_vqa_examples(std::span<const CaptionedImage> records);
// Writes <dir>/images/<id>.png plus <dir>/vqa.jsonl.
void write_probe_vqa(const std::filesystem::path& dir, std::span<const CaptionedImage> records);

}  // namespace openvision
