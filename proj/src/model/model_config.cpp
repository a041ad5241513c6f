#include "openvision/model_config.hpp"

#include <charconv>

#include "openvision/model.hpp"

namespace openvision {

const char* to_string(Pool pool) { return pool == Pool::cls_token ? "cls_token" : "mean"; }

Pool parse_pool(std::string_view text) {
  if (text == "cls_token" || text == "cls") {
    return Pool::cls_token;
  }
  if (text == "mean") {
    return Pool::mean;
  }
  fail(ErrorKind::config, "unknown pool '" + std::string(text) + "' (cls_token | mean)");
}

const char* to_string(Activation act) { return act == Activation::gelu ? "gelu" : "identity"; }

Activation parse_activation(std::string_view text) {
  if (text == "gelu") {
    return Activation::gelu;
  }
  if (text == "identity" || text == "linear") {
    return Activation::identity;
  }
  fail(ErrorKind::config, "unknown activation '" + std::string(text) + "' (gelu | identity)");
}

void VisionConfig::validate() const {
  require(layers >= 1, ErrorKind::config, "vision.layers must be >= 1");
  require(width >= 4 && width % 4 == 0, ErrorKind::config,
          "vision.width must be a positive multiple of 4 (sincos table)");
  require(heads >= 1 && width % heads == 0, ErrorKind::config,
          "vision.width must be divisible by vision.heads");
  require(patch == 8 || patch == 14 || patch == 16, ErrorKind::config,
          "vision.patch must be one of 8, 14, 16");
  require(resolution >= patch && resolution % patch == 0, ErrorKind::config,
          "vision.resolution " + std::to_string(resolution) + " is not divisible by patch " +
              std::to_string(patch));
  require(mlp_dim >= 0, ErrorKind::config, "vision.mlp_dim must be >= 0");
}

namespace {

struct NamedPreset {
  const char* name;
  int layers;
  int width;
  int heads;
  int mlp_dim;
  int patch;
};

// Visual encoder family; mlp_dim 0 means 4x width.
constexpr NamedPreset kVisionPresets[] = {
    {"tiny", 12, 192, 3, 0, 16},         {"small", 12, 384, 6, 0, 16},
    {"base", 12, 768, 12, 0, 16},        {"large", 24, 1024, 16, 0, 14},
    {"so400m", 27, 1152, 16, 4304, 14}, {"huge", 32, 1280, 16, 0, 14},
};

}  // namespace

VisionConfig VisionConfig::preset(std::string_view name) {
  std::string_view base = name;
  int patch_override = 0;
  if (auto slash = name.find('/'); slash != std::string_view::npos) {
    base = name.substr(0, slash);
    auto digits = name.substr(slash + 1);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), patch_override);
    require(ec == std::errc() && ptr == digits.data() + digits.size(), ErrorKind::config,
            "bad patch suffix in preset '" + std::string(name) + "'");
  }
  for (const auto& p : kVisionPresets) {
    if (base == p.name) {
      VisionConfig c;
      c.layers = p.layers;
      c.width = p.width;
      c.heads = p.heads;
      c.mlp_dim = p.mlp_dim;
      c.patch = patch_override > 0 ? patch_override : p.patch;
      c.resolution = 224;
      if (c.resolution % c.patch != 0) {
        c.resolution = c.patch * (224 / c.patch);
      }
      c.validate();
      return c;
    }
  }
  fail(ErrorKind::config, "unknown vision preset '" + std::string(name) + "'");
}

std::vector<std::string> VisionConfig::preset_names() {
  std::vector<std::string> out;
  for (const auto& p : kVisionPresets) {
    out.emplace_back(p.name);
  }
  return out;
}

void TextConfig::validate() const {
  require(encoder_context >= 1 && decoder_context >= 1, ErrorKind::config,
          "text contexts must be >= 1");
  require(vocab_size >= 1, ErrorKind::config, "text.vocab_size must be >= 1");
  require(layers >= 1, ErrorKind::config, "text.layers must be >= 1");
  require(decoder_layers >= 0, ErrorKind::config, "text.decoder_layers must be >= 0");
  require(width >= 2 && width % 2 == 0, ErrorKind::config, "text.width must be even");
  require(heads >= 1 && width % heads == 0, ErrorKind::config,
          "text.width must be divisible by text.heads");
  require(mlp_dim >= 0, ErrorKind::config, "text.mlp_dim must be >= 0");
}

void ProjectorConfig::validate() const {
  require(in_width >= 1 && hidden >= 1 && out_width >= 1, ErrorKind::config,
          "projector widths must be >= 1");
}

void ModelConfig::validate() const {
  vision.validate();
  text.validate();
}

ModelConfig ModelConfig::preset(std::string_view name) {
  ModelConfig c;
  if (name == "micro") {
    c.vision = VisionConfig{.layers = 2, .width = 32, .heads = 2, .mlp_dim = 0, .patch = 16,
                            .resolution = 32, .pool = Pool::cls_token};
    c.text.layers = 2;
    c.text.width = 32;
    c.text.heads = 2;
    c.text.decoder_layers = 2;
  } else if (name == "micro-probe") {
    c.vision = VisionConfig{.layers = 2, .width = 64, .heads = 4, .mlp_dim = 0, .patch = 8,
                            .resolution = 32, .pool = Pool::cls_token};
    c.text.tokenizer = "probe";
    c.text.layers = 2;
    c.text.width = 64;
    c.text.heads = 4;
    c.text.decoder_layers = 1;
    sync_tokenizer(c.text);
  } else {
    c.vision = VisionConfig::preset(name);
    c.text.width = c.vision.width;
    c.text.heads = c.vision.heads;
  }
  return c;
}

namespace {

void add_linear(std::vector<ParamSpec>& out, const std::string& prefix, std::int64_t in,
                std::int64_t outw, bool bias = true) {
  out.push_back({prefix + "/w", {in, outw}, InitKind::truncated_normal, true});
  if (bias) {
    out.push_back({prefix + "/b", {outw}, InitKind::zeros, false});
  }
}

void add_norm(std::vector<ParamSpec>& out, const std::string& prefix, std::int64_t width) {
  out.push_back({prefix + "/g", {width}, InitKind::ones, false});
  out.push_back({prefix + "/b", {width}, InitKind::zeros, false});
}

void add_block(std::vector<ParamSpec>& out, const std::string& prefix, std::int64_t width,
               std::int64_t mlp, std::int64_t cross_width) {
  add_norm(out, prefix + "/ln1", width);
  for (const char* proj : {"q", "k", "v", "o"}) {
    add_linear(out, prefix + "/attn/" + proj, width, width);
  }
  if (cross_width > 0) {
    add_norm(out, prefix + "/ln_cross", width);
    add_linear(out, prefix + "/cross/q", width, width);
    add_linear(out, prefix + "/cross/k", cross_width, width);
    add_linear(out, prefix + "/cross/v", cross_width, width);
    add_linear(out, prefix + "/cross/o", width, width);
  }
  add_norm(out, prefix + "/ln2", width);
  add_linear(out, prefix + "/mlp/fc1", width, mlp);
  add_linear(out, prefix + "/mlp/fc2", mlp, width);
}

}  // namespace

std::vector<ParamSpec> block_param_specs(const std::string& prefix, std::int64_t width,
                                         std::int64_t mlp, std::int64_t cross_width) {
  std::vector<ParamSpec> out;
  add_block(out, prefix, width, mlp, cross_width);
  return out;
}

std::vector<ParamSpec> vision_param_specs(const VisionConfig& config) {
  config.validate();
  std::vector<ParamSpec> out;
  const std::int64_t w = config.width;
  add_linear(out, "vision/patch_embed", 3LL * config.patch * config.patch, w);
  if (config.pool == Pool::cls_token) {
    out.push_back({"vision/cls", {1, w}, InitKind::truncated_normal, false});
  }
  for (int i = 0; i < config.layers; ++i) {
    add_block(out, "vision/blocks/" + std::to_string(i), w, config.mlp(), 0);
  }
  add_norm(out, "vision/ln_final", w);
  return out;
}

std::vector<ParamSpec> text_encoder_param_specs(const TextConfig& text, int embed_width) {
  text.validate();
  std::vector<ParamSpec> out;
  const std::int64_t w = text.width;
  out.push_back({"text_encoder/tok_embed", {text.vocab_size, w}, InitKind::embedding, false});
  for (int i = 0; i < text.layers; ++i) {
    add_block(out, "text_encoder/blocks/" + std::to_string(i), w, text.mlp(), 0);
  }
  add_norm(out, "text_encoder/ln_final", w);
  add_linear(out, "text_encoder/proj", w, embed_width, false);
  return out;
}

std::vector<ParamSpec> decoder_param_specs(const TextConfig& text, int vision_width) {
  text.validate();
  std::vector<ParamSpec> out;
  if (text.decoder_layers == 0) {
    return out;
  }
  const std::int64_t w = text.width;
  out.push_back({"decoder/tok_embed", {text.vocab_size, w}, InitKind::embedding, false});
  for (int i = 0; i < text.decoder_layers; ++i) {
    add_block(out, "decoder/blocks/" + std::to_string(i), w, text.mlp(), vision_width);
  }
  add_norm(out, "decoder/ln_final", w);
  add_linear(out, "decoder/head", w, text.vocab_size);
  return out;
}

std::vector<ParamSpec> projector_param_specs(const ProjectorConfig& config) {
  config.validate();
  std::vector<ParamSpec> out;
  add_linear(out, "projector/fc1", config.in_width, config.hidden);
  add_linear(out, "projector/fc2", config.hidden, config.out_width);
  for (auto& spec : out) {
    if (spec.init == InitKind::truncated_normal) {
      spec.init = InitKind::fan_in;
    }
  }
  return out;
}

std::vector<ParamSpec> two_tower_param_specs(const ModelConfig& config) {
  config.validate();
  auto out = vision_param_specs(config.vision);
  auto text = text_encoder_param_specs(config.text, config.vision.width);
  auto dec = decoder_param_specs(config.text, config.vision.width);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), dec.begin(), dec.end());
  out.push_back({"logit_scale", {1}, InitKind::log_inverse_temperature, false});
  return out;
}

std::int64_t count_params(const std::vector<ParamSpec>& specs) {
  std::int64_t total = 0;
  for (const auto& s : specs) {
    total += shape_numel(s.shape);
  }
  return total;
}

}  // namespace openvision
