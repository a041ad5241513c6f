#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "openvision/tensor.hpp"

namespace openvision {

enum class Pool { cls_token, mean };
enum class Activation { gelu, identity };

const char* to_string(Pool pool);
Pool parse_pool(std::string_view text);
const char* to_string(Activation act);
Activation parse_activation(std::string_view text);

struct VisionConfig {
  int layers = 12;
  int width = 192;
  int heads = 3;
  int mlp_dim = 0;  // 0 means 4 * width
  int patch = 16;
  int resolution = 224;
  Pool pool = Pool::cls_token;

  int mlp() const { return mlp_dim > 0 ? mlp_dim : 4 * width; }
  int grid() const { return resolution / patch; }
  // Patch tokens plus the class token when pooling through it.
  int tokens() const { return grid() * grid() + (pool == Pool::cls_token ? 1 : 0); }
  void validate() const;

  // tiny, small, base, large, so400m, huge; a "/8" or "/16" suffix overrides the patch size.
  static VisionConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();
  friend bool operator==(const VisionConfig&, const VisionConfig&) = default;
};

struct TextConfig {
  int encoder_context = 80;
  int decoder_context = 128;
  std::string tokenizer = "byte";  // byte | probe | file:<path>
  int vocab_size = 259;
  int pad_id = 256;
  int bos_id = 257;
  int eos_id = 258;
  int layers = 12;
  int width = 512;
  int heads = 8;
  int mlp_dim = 0;
  int decoder_layers = 6;

  int mlp() const { return mlp_dim > 0 ? mlp_dim : 4 * width; }
  void validate() const;
  friend bool operator==(const TextConfig&, const TextConfig&) = default;
};

struct ProjectorConfig {
  int in_width = 192;
  int hidden = 512;
  int out_width = 512;
  Activation activation = Activation::gelu;

  void validate() const;
  friend bool operator==(const ProjectorConfig&, const ProjectorConfig&) = default;
};

struct ModelConfig {
  VisionConfig vision;
  TextConfig text;

  void validate() const;
  // Desk-scale two-tower configs: "micro" (width 32, 2 layers, 32px/16) and
  // "micro-probe" (tiny-like, word-level probe vocabulary).
  static ModelConfig preset(std::string_view name);
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// fan_in: truncated normal with std 1/sqrt(rows), for [in x out] weights.
enum class InitKind { truncated_normal, embedding, fan_in, zeros, ones, log_inverse_temperature };

struct ParamSpec {
  std::string name;
  Shape shape;
  InitKind init = InitKind::truncated_normal;
  bool decay = true;
};

// Parameter layout of each component. Names are prefixed by component:
// vision/, text_encoder/, decoder/, projector/, plus the scalar logit_scale.
std::vector<ParamSpec> vision_param_specs(const VisionConfig& config);
std::vector<ParamSpec> text_encoder_param_specs(const TextConfig& text, int embed_width);
std::vector<ParamSpec> decoder_param_specs(const TextConfig& text, int vision_width);
std::vector<ParamSpec> projector_param_specs(const ProjectorConfig& config);
std::vector<ParamSpec> two_tower_param_specs(const ModelConfig& config);
// One pre-LN block under `prefix`; cross_width > 0 adds cross-attention.
std::vector<ParamSpec> block_param_specs(const std::string& prefix, std::int64_t width,
                                         std::int64_t mlp, std::int64_t cross_width = 0);

std::int64_t count_params(const std::vector<ParamSpec>& specs);

inline constexpr double kInitStd = 0.02;
// Token tables sit on the same scale as the fixed sincos position codes.
inline constexpr double kEmbeddingInitStd = 1.0;
inline constexpr double kLayerNormEps = 1e-6;
// Temperature floor 1/100 expressed as a cap on the logit scale.
inline constexpr double kMaxLogitScale = 100.0;

}  // namespace openvision
