#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "openvision/graph.hpp"
#include "openvision/model_config.hpp"
#include "openvision/params.hpp"
#include "openvision/tokenizer.hpp"

namespace openvision {

// Each tensor draws from its own stream seeded by (seed, name), so adding or
// removing a component never perturbs the others' initial values.
template <typename T>
ParameterStore<T> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);

// [H x W x 3] -> [(H/p * W/p) x 3p^2], or [N x H x W x 3] -> [N * H/p * W/p x 3p^2].
// Patch rows follow the row-major grid; within a patch, pixels are row-major HWC.
template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch);

// 2D table: the first width/2 columns encode the grid row, the rest the grid
// column; each half is [sin | cos] over width/4 frequencies 1/10000^(i/(width/4)).
template <typename T>
Tensor<T> sincos_pe_2d(int grid_h, int grid_w, int width);
// 1D table over `length` positions: [sin | cos] over width/2 frequencies.
template <typename T>
Tensor<T> sincos_pe_1d(int length, int width);

// Resolves parameter names to graph leaves. A mutable store registers
// parameters (gradients flow into trainable ones); a const store is read as constants.
template <typename T>
class Binder {
 public:
  Binder(Graph<T>& graph, ParameterStore<T>& params) : graph_(graph), mutable_(&params), const_(&params) {}
  Binder(Graph<T>& graph, const ParameterStore<T>& params) : graph_(graph), const_(&params) {}

  Var operator()(const std::string& name);
  Graph<T>& graph() { return graph_; }
  const ParameterStore<T>& params() const { return *const_; }

 private:
  Graph<T>& graph_;
  ParameterStore<T>* mutable_ = nullptr;
  const ParameterStore<T>* const_ = nullptr;
  std::unordered_map<std::string, Var> cache_;
};

struct VisionVars {
  Var pooled;  // [N x width]
  Var tokens;  // [N*T x width], image-major
  std::int64_t batch = 0;
  std::int64_t tokens_per_image = 0;
};

// images: [N x H x W x 3] at config.resolution.
template <typename T>
VisionVars vision_forward(Binder<T>& bind, const VisionConfig& config, const Tensor<T>& images);

// Padded id batch: row-major [size x length], eos index per row.
struct TokenBatch {
  std::vector<std::int32_t> ids;
  std::int64_t size = 0;
  std::int64_t length = 0;
  std::vector<std::int64_t> last;  // position of eos (or the final real token) in each row

  std::span<const std::int32_t> row(std::int64_t i) const {
    return std::span<const std::int32_t>(ids).subspan(static_cast<std::size_t>(i * length),
                                                      static_cast<std::size_t>(length));
  }
};

// Encodes with bos/eos, truncates to `context`, pads to the longest row.
TokenBatch make_token_batch(const Tokenizer& tokenizer, std::span<const std::string> texts,
                            int context);

// Causal text encoder pooled at each row's eos, projected to `embed_width`: [N x embed].
template <typename T>
Var text_forward(Binder<T>& bind, const TextConfig& config, const TokenBatch& batch);

struct CaptionLoss {
  Var loss;
  std::int64_t contributing = 0;  // 0 means every target was padding
};

// Teacher-forced next-token cross-entropy: row t predicts ids[t+1]; pad targets are ignored.
template <typename T>
CaptionLoss caption_decode_loss(Binder<T>& bind, const TextConfig& config, const VisionVars& vision,
                                const TokenBatch& targets);

// Per-token MLP: fc1 -> activation -> fc2. tokens [R x in_width] -> [R x out_width].
template <typename T>
Var projector_forward(Binder<T>& bind, const ProjectorConfig& config, Var tokens);

// Pre-LN transformer block over `batch` sequences. `memory` (with memory_batch
// rows per sequence) enables cross-attention when valid.
template <typename T>
Var transformer_block(Binder<T>& bind, const std::string& prefix, Var x, std::int64_t batch,
                      int heads, bool causal, Var memory = Var{});

// Value-level forms over a forward-only graph.
template <typename T>
struct VisionOutput {
  Tensor<T> pooled;  // [N x width]
  Tensor<T> tokens;  // [N x T x width]
};

template <typename T>
VisionOutput<T> vision_forward(const ParameterStore<T>& params, const VisionConfig& config,
                               const Tensor<T>& images);
template <typename T>
Tensor<T> text_forward(const ParameterStore<T>& params, const TextConfig& config,
                       const TokenBatch& batch);
template <typename T>
Tensor<T> projector_forward(const ParameterStore<T>& params, const ProjectorConfig& config,
                            const Tensor<T>& tokens);

// Tokenizer named by config.tokenizer; sets vocab_size and special ids to match.
Tokenizer sync_tokenizer(TextConfig& config);

}  // namespace openvision
