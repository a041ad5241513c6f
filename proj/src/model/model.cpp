#include "openvision/model.hpp"

#include <cmath>

#include "openvision/rng.hpp"

namespace openvision {

namespace {

std::uint64_t name_hash(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h = (h ^ static_cast<unsigned char>(c)) * 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

template <typename T>
ParameterStore<T> init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  ParameterStore<T> store;
  for (const auto& spec : specs) {
    Tensor<T> value(spec.shape);
    switch (spec.init) {
      case InitKind::truncated_normal:
      case InitKind::embedding:
      case InitKind::fan_in: {
        double std = spec.init == InitKind::embedding ? kEmbeddingInitStd : kInitStd;
        if (spec.init == InitKind::fan_in) {
          std = 1.0 / std::sqrt(static_cast<double>(spec.shape.at(0)));
        }
        Rng rng(mix_seed(seed, name_hash(spec.name)));
        for (auto& x : value.data()) {
          x = static_cast<T>(rng.truncated_normal(std));
        }
        break;
      }
      case InitKind::zeros:
        break;
      case InitKind::ones:
        value.fill(T(1));
        break;
      case InitKind::log_inverse_temperature:
        value.fill(static_cast<T>(std::log(1.0 / 0.07)));
        break;
    }
    store.add(spec.name, std::move(value), spec.decay);
  }
  return store;
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& images, int patch) {
  require(images.rank() == 3 || images.rank() == 4, ErrorKind::dimension,
          "patchify expects [H x W x 3] or [N x H x W x 3], got " + shape_string(images.shape()));
  const bool batched = images.rank() == 4;
  const std::int64_t n = batched ? images.dim(0) : 1;
  const std::int64_t h = images.dim(-3);
  const std::int64_t w = images.dim(-2);
  require(images.dim(-1) == 3, ErrorKind::dimension, "patchify expects 3 channels");
  require(patch >= 1 && h % patch == 0 && w % patch == 0, ErrorKind::dimension,
          "image " + std::to_string(h) + "x" + std::to_string(w) + " is not divisible by patch " +
              std::to_string(patch));
  const std::int64_t gh = h / patch;
  const std::int64_t gw = w / patch;
  const std::int64_t p = patch;
  const std::int64_t dim = 3 * p * p;
  Tensor<T> out({n * gh * gw, dim});
  T* dst = out.ptr();
  for (std::int64_t b = 0; b < n; ++b) {
    const T* img = images.ptr() + b * h * w * 3;
    for (std::int64_t gy = 0; gy < gh; ++gy) {
      for (std::int64_t gx = 0; gx < gw; ++gx) {
        for (std::int64_t y = 0; y < p; ++y) {
          const T* src = img + ((gy * p + y) * w + gx * p) * 3;
          std::copy_n(src, p * 3, dst);
          dst += p * 3;
        }
      }
    }
  }
  return out;
}

namespace {

template <typename T>
void sincos_fill(T* row, double pos, int width) {
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / half);
    row[i] = static_cast<T>(std::sin(pos * omega));
    row[half + i] = static_cast<T>(std::cos(pos * omega));
  }
}

}  // namespace

template <typename T>
Tensor<T> sincos_pe_2d(int grid_h, int grid_w, int width) {
  require(width >= 4 && width % 4 == 0, ErrorKind::config,
          "2D sincos width " + std::to_string(width) + " is not divisible by 4");
  require(grid_h >= 1 && grid_w >= 1, ErrorKind::config, "sincos grid must be nonempty");
  Tensor<T> out({static_cast<std::int64_t>(grid_h) * grid_w, width});
  for (int y = 0; y < grid_h; ++y) {
    for (int x = 0; x < grid_w; ++x) {
      T* row = out.ptr() + (static_cast<std::int64_t>(y) * grid_w + x) * width;
      sincos_fill(row, y, width / 2);
      sincos_fill(row + width / 2, x, width / 2);
    }
  }
  return out;
}

template <typename T>
Tensor<T> sincos_pe_1d(int length, int width) {
  require(width >= 2 && width % 2 == 0, ErrorKind::config,
          "1D sincos width " + std::to_string(width) + " is not even");
  require(length >= 1, ErrorKind::config, "sincos length must be >= 1");
  Tensor<T> out({length, width});
  for (int t = 0; t < length; ++t) {
    sincos_fill(out.ptr() + static_cast<std::int64_t>(t) * width, t, width);
  }
  return out;
}

template <typename T>
Var Binder<T>::operator()(const std::string& name) {
  if (auto it = cache_.find(name); it != cache_.end()) {
    return it->second;
  }
  require(const_->contains(name), ErrorKind::config, "missing parameter '" + name + "'");
  const Var v = mutable_ != nullptr ? graph_.parameter(mutable_->at(name))
                                    : graph_.constant_ref(const_->value(name));
  cache_.emplace(name, v);
  return v;
}

namespace {

template <typename T>
Var norm(Binder<T>& bind, const std::string& prefix, Var x) {
  return bind.graph().layer_norm(x, bind(prefix + "/g"), bind(prefix + "/b"),
                                 static_cast<T>(kLayerNormEps));
}

template <typename T>
Var dense(Binder<T>& bind, const std::string& prefix, Var x) {
  return bind.graph().linear(x, bind(prefix + "/w"), bind(prefix + "/b"));
}

}  // namespace

template <typename T>
Var transformer_block(Binder<T>& bind, const std::string& prefix, Var x, std::int64_t batch,
                      int heads, bool causal, Var memory) {
  auto& g = bind.graph();
  Var h = norm(bind, prefix + "/ln1", x);
  Var attn = g.attention(dense(bind, prefix + "/attn/q", h), dense(bind, prefix + "/attn/k", h),
                         dense(bind, prefix + "/attn/v", h), batch, heads, causal);
  x = g.add(x, dense(bind, prefix + "/attn/o", attn));
  if (memory.valid()) {
    h = norm(bind, prefix + "/ln_cross", x);
    Var cross = g.attention(dense(bind, prefix + "/cross/q", h),
                            dense(bind, prefix + "/cross/k", memory),
                            dense(bind, prefix + "/cross/v", memory), batch, heads, false);
    x = g.add(x, dense(bind, prefix + "/cross/o", cross));
  }
  h = norm(bind, prefix + "/ln2", x);
  Var mlp = dense(bind, prefix + "/mlp/fc2", g.gelu(dense(bind, prefix + "/mlp/fc1", h)));
  return g.add(x, mlp);
}

template <typename T>
VisionVars vision_forward(Binder<T>& bind, const VisionConfig& config, const Tensor<T>& images) {
  config.validate();
  require(images.rank() == 4 && images.dim(1) == config.resolution &&
              images.dim(2) == config.resolution && images.dim(3) == 3,
          ErrorKind::dimension,
          "vision input " + shape_string(images.shape()) + " does not match resolution " +
              std::to_string(config.resolution));
  auto& g = bind.graph();
  const std::int64_t n = images.dim(0);
  const int grid = config.grid();
  const std::int64_t patches = static_cast<std::int64_t>(grid) * grid;

  Var x = g.linear(g.constant(patchify(images, config.patch)), bind("vision/patch_embed/w"),
                   bind("vision/patch_embed/b"));
  x = g.add_rows(x, g.constant(sincos_pe_2d<T>(grid, grid, config.width)));
  std::int64_t per_image = patches;
  if (config.pool == Pool::cls_token) {
    // The class token carries no position embedding and leads each sequence.
    const Var parts[] = {bind("vision/cls"), x};
    Var joined = g.concat_rows(parts);
    std::vector<std::int64_t> order;
    order.reserve(static_cast<std::size_t>(n * (patches + 1)));
    for (std::int64_t b = 0; b < n; ++b) {
      order.push_back(0);
      for (std::int64_t p = 0; p < patches; ++p) {
        order.push_back(1 + b * patches + p);
      }
    }
    x = g.select_rows(joined, order);
    per_image = patches + 1;
  }
  for (int i = 0; i < config.layers; ++i) {
    x = transformer_block(bind, "vision/blocks/" + std::to_string(i), x, n, config.heads, false);
  }
  x = norm(bind, "vision/ln_final", x);

  VisionVars out;
  out.tokens = x;
  out.batch = n;
  out.tokens_per_image = per_image;
  if (config.pool == Pool::cls_token) {
    std::vector<std::int64_t> rows;
    for (std::int64_t b = 0; b < n; ++b) {
      rows.push_back(b * per_image);
    }
    out.pooled = g.select_rows(x, rows);
  } else {
    out.pooled = g.mean_row_groups(x, n);
  }
  return out;
}

TokenBatch make_token_batch(const Tokenizer& tokenizer, std::span<const std::string> texts,
                            int context) {
  require(!texts.empty(), ErrorKind::data, "empty text batch");
  std::vector<std::vector<std::int32_t>> rows;
  rows.reserve(texts.size());
  std::int64_t longest = 0;
  for (const auto& text : texts) {
    rows.push_back(tokenizer.encode(text, context));
    longest = std::max<std::int64_t>(longest, static_cast<std::int64_t>(rows.back().size()));
  }
  TokenBatch batch;
  batch.size = static_cast<std::int64_t>(rows.size());
  batch.length = longest;
  batch.ids.assign(static_cast<std::size_t>(batch.size * longest), tokenizer.pad_id());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].begin(), rows[i].end(),
              batch.ids.begin() + static_cast<std::ptrdiff_t>(i * longest));
    batch.last.push_back(static_cast<std::int64_t>(rows[i].size()) - 1);
  }
  return batch;
}

template <typename T>
Var text_forward(Binder<T>& bind, const TextConfig& config, const TokenBatch& batch) {
  require(batch.length <= config.encoder_context, ErrorKind::dimension,
          "text batch length " + std::to_string(batch.length) + " exceeds encoder context " +
              std::to_string(config.encoder_context));
  auto& g = bind.graph();
  Var x = g.gather_rows(bind("text_encoder/tok_embed"), batch.ids);
  x = g.add_rows(x, g.constant(sincos_pe_1d<T>(static_cast<int>(batch.length), config.width)));
  for (int i = 0; i < config.layers; ++i) {
    x = transformer_block(bind, "text_encoder/blocks/" + std::to_string(i), x, batch.size,
                          config.heads, true);
  }
  x = norm(bind, "text_encoder/ln_final", x);
  std::vector<std::int64_t> rows;
  for (std::int64_t i = 0; i < batch.size; ++i) {
    rows.push_back(i * batch.length + batch.last[static_cast<std::size_t>(i)]);
  }
  return g.matmul(g.select_rows(x, rows), bind("text_encoder/proj/w"));
}

template <typename T>
CaptionLoss caption_decode_loss(Binder<T>& bind, const TextConfig& config, const VisionVars& vision,
                                const TokenBatch& targets) {
  require(config.decoder_layers >= 1, ErrorKind::config, "decoder is disabled (0 layers)");
  require(targets.size == vision.batch, ErrorKind::dimension,
          "caption batch " + std::to_string(targets.size) + " does not match image batch " +
              std::to_string(vision.batch));
  require(targets.length <= config.decoder_context, ErrorKind::dimension,
          "caption length " + std::to_string(targets.length) + " exceeds decoder context " +
              std::to_string(config.decoder_context));
  auto& g = bind.graph();
  CaptionLoss out;
  if (targets.length < 2) {
    out.loss = g.constant(Tensor<T>({1}));
    return out;
  }
  const std::int64_t steps = targets.length - 1;
  std::vector<std::int32_t> inputs;
  std::vector<std::int32_t> next;
  inputs.reserve(static_cast<std::size_t>(targets.size * steps));
  next.reserve(inputs.capacity());
  for (std::int64_t i = 0; i < targets.size; ++i) {
    const auto row = targets.row(i);
    for (std::int64_t t = 0; t < steps; ++t) {
      inputs.push_back(row[static_cast<std::size_t>(t)]);
      next.push_back(row[static_cast<std::size_t>(t + 1)]);
    }
  }
  for (auto id : next) {
    require(id >= 0 && id < config.vocab_size, ErrorKind::data,
            "caption target id " + std::to_string(id) + " outside vocabulary of " +
                std::to_string(config.vocab_size));
  }
  Var x = g.gather_rows(bind("decoder/tok_embed"), inputs);
  x = g.add_rows(x, g.constant(sincos_pe_1d<T>(static_cast<int>(steps), config.width)));
  for (int i = 0; i < config.decoder_layers; ++i) {
    x = transformer_block(bind, "decoder/blocks/" + std::to_string(i), x, targets.size,
                          config.heads, true, vision.tokens);
  }
  x = norm(bind, "decoder/ln_final", x);
  Var logits = dense(bind, "decoder/head", x);
  auto ce = g.cross_entropy(logits, next, config.pad_id);
  out.loss = ce.loss;
  out.contributing = ce.contributing;
  return out;
}

template <typename T>
Var projector_forward(Binder<T>& bind, const ProjectorConfig& config, Var tokens) {
  config.validate();
  auto& g = bind.graph();
  require(g.value(tokens).cols() == config.in_width, ErrorKind::config,
          "projector expects width " + std::to_string(config.in_width) + ", got " +
              std::to_string(g.value(tokens).cols()));
  Var h = dense(bind, "projector/fc1", tokens);
  if (config.activation == Activation::gelu) {
    h = g.gelu(h);
  }
  return dense(bind, "projector/fc2", h);
}

template <typename T>
VisionOutput<T> vision_forward(const ParameterStore<T>& params, const VisionConfig& config,
                               const Tensor<T>& images) {
  Graph<T> g;
  Binder<T> bind(g, params);
  const auto v = vision_forward(bind, config, images);
  VisionOutput<T> out;
  out.pooled = g.value(v.pooled);
  out.tokens = g.value(v.tokens).reshaped({v.batch, v.tokens_per_image, config.width});
  return out;
}

template <typename T>
Tensor<T> text_forward(const ParameterStore<T>& params, const TextConfig& config,
                       const TokenBatch& batch) {
  Graph<T> g;
  Binder<T> bind(g, params);
  return g.value(text_forward(bind, config, batch));
}

template <typename T>
Tensor<T> projector_forward(const ParameterStore<T>& params, const ProjectorConfig& config,
                            const Tensor<T>& tokens) {
  Graph<T> g;
  Binder<T> bind(g, params);
  const Tensor<T> flat = tokens.reshaped({tokens.rows(), tokens.cols()});
  Shape shape = tokens.shape();
  shape.back() = config.out_width;
  return g.value(projector_forward(bind, config, g.constant(flat))).reshaped(shape);
}

Tokenizer sync_tokenizer(TextConfig& config) {
  Tokenizer tok = Tokenizer::from_name(config.tokenizer);
  config.vocab_size = tok.vocab_size();
  config.pad_id = tok.pad_id();
  config.bos_id = tok.bos_id();
  config.eos_id = tok.eos_id();
  return tok;
}

#define OPENVISION_INSTANTIATE(T)                                                             \
  template ParameterStore<T> init_params<T>(const std::vector<ParamSpec>&, std::uint64_t);    \
  template Tensor<T> patchify(const Tensor<T>&, int);                                          \
  template Tensor<T> sincos_pe_2d<T>(int, int, int);                                           \
  template Tensor<T> sincos_pe_1d<T>(int, int);                                                \
  template class Binder<T>;                                                                    \
  template Var transformer_block(Binder<T>&, const std::string&, Var, std::int64_t, int, bool, \
                                 Var);                                                         \
  template VisionVars vision_forward(Binder<T>&, const VisionConfig&, const Tensor<T>&);       \
  template Var text_forward(Binder<T>&, const TextConfig&, const TokenBatch&);                 \
  template CaptionLoss caption_decode_loss(Binder<T>&, const TextConfig&, const VisionVars&,   \
                                           const TokenBatch&);                                 \
  template Var projector_forward(Binder<T>&, const ProjectorConfig&, Var);                     \
  template VisionOutput<T> vision_forward(const ParameterStore<T>&, const VisionConfig&,       \
                                          const Tensor<T>&);                                   \
  template Tensor<T> text_forward(const ParameterStore<T>&, const TextConfig&,                 \
                                  const TokenBatch&);                                          \
  template Tensor<T> projector_forward(const ParameterStore<T>&, const ProjectorConfig&,       \
                                       const Tensor<T>&);

OPENVISION_INSTANTIATE(float)
OPENVISION_INSTANTIATE(double)

}  // namespace openvision
