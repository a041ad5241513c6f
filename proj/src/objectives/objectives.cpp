#include "openvision/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "openvision/dataset.hpp"
#include "openvision/kernels.hpp"
#include "openvision/probe.hpp"
#include "openvision/rng.hpp"

namespace openvision {

namespace {

template <typename T>
void check_unit_rows(const Tensor<T>& x, const char* what) {
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (T v : x.row(r)) {
      sq += static_cast<double>(v) * static_cast<double>(v);
    }
    require(std::abs(std::sqrt(sq) - 1.0) <= kUnitNormTolerance, ErrorKind::contract,
            std::string(what) + " row " + std::to_string(r) + " has norm " +
                std::to_string(std::sqrt(sq)) + ", expected unit length");
  }
}

// Loss value and dL/ds for the logit table s [N x N*K].
template <typename T>
T contrastive_core(const std::vector<T>& s, std::int64_t n, std::int64_t k, std::vector<T>* grad) {
  const std::int64_t c = n * k;
  long double i2t = 0;
  long double t2i = 0;
  if (grad != nullptr) {
    grad->assign(static_cast<std::size_t>(n * c), T(0));
  }
  const T w_row = T(0.5) / static_cast<T>(n);
  const T w_col = T(0.5) / static_cast<T>(c);
  for (std::int64_t i = 0; i < n; ++i) {
    const T* row = s.data() + i * c;
    const T mx = *std::max_element(row, row + c);
    T z = 0;
    for (std::int64_t j = 0; j < c; ++j) {
      z += std::exp(row[j] - mx);
    }
    const T lse = mx + std::log(z);
    T pos = 0;
    for (std::int64_t q = 0; q < k; ++q) {
      pos += row[i * k + q];
    }
    i2t += static_cast<long double>(lse) - static_cast<long double>(pos) / k;
    if (grad != nullptr) {
      T* g = grad->data() + i * c;
      for (std::int64_t j = 0; j < c; ++j) {
        g[j] += w_row * std::exp(row[j] - lse);
      }
      for (std::int64_t q = 0; q < k; ++q) {
        g[i * k + q] -= w_row / static_cast<T>(k);
      }
    }
  }
  for (std::int64_t j = 0; j < c; ++j) {
    T mx = s[static_cast<std::size_t>(j)];
    for (std::int64_t i = 1; i < n; ++i) {
      mx = std::max(mx, s[static_cast<std::size_t>(i * c + j)]);
    }
    T z = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      z += std::exp(s[static_cast<std::size_t>(i * c + j)] - mx);
    }
    const T lse = mx + std::log(z);
    const std::int64_t owner = j / k;
    t2i += static_cast<long double>(lse) - s[static_cast<std::size_t>(owner * c + j)];
    if (grad != nullptr) {
      for (std::int64_t i = 0; i < n; ++i) {
        (*grad)[static_cast<std::size_t>(i * c + j)] +=
            w_col * std::exp(s[static_cast<std::size_t>(i * c + j)] - lse);
      }
      (*grad)[static_cast<std::size_t>(owner * c + j)] -= w_col;
    }
  }
  return static_cast<T>(0.5L * (i2t / n + t2i / c));
}

template <typename T>
void check_shapes(const Tensor<T>& u, const Tensor<T>& v, std::int64_t k) {
  require(k >= 1, ErrorKind::contract, "captions per image must be >= 1");
  require(u.rank() == 2 && u.rows() >= 1, ErrorKind::dimension, "image embeddings must be [N x d]");
  require(v.cols() == u.cols() && v.rows() == u.rows() * k, ErrorKind::dimension,
          "caption embeddings " + shape_string(v.shape()) + " do not match " +
              std::to_string(u.rows()) + " images x " + std::to_string(k) + " captions");
}

}  // namespace

template <typename T>
T multi_positive_contrastive(const ContrastiveBatch<T>& batch) {
  const auto& u = batch.image_emb;
  const auto& v = batch.caption_emb.reshaped({batch.caption_emb.rows(), batch.caption_emb.cols()});
  check_shapes(u, v, batch.captions_per_image);
  require(batch.temperature > T(0) && std::isfinite(batch.temperature), ErrorKind::contract,
          "temperature must be positive");
  check_unit_rows(u, "image embedding");
  check_unit_rows(v, "caption embedding");
  const std::int64_t n = u.rows();
  const std::int64_t c = v.rows();
  std::vector<T> s(static_cast<std::size_t>(n * c));
  kernels::gemm_nt(u.ptr(), v.ptr(), s.data(), n, u.cols(), c, false);
  for (auto& x : s) {
    x /= batch.temperature;
  }
  return contrastive_core<T>(s, n, batch.captions_per_image, nullptr);
}

template <typename T>
Var multi_positive_contrastive(Graph<T>& graph, Var image_emb, Var caption_emb, Var log_scale,
                               std::int64_t k) {
  const Tensor<T>& u = graph.value(image_emb);
  const Tensor<T>& v = graph.value(caption_emb);
  check_shapes(u, v, k);
  require(graph.value(log_scale).size() == 1, ErrorKind::dimension, "log_scale must be a scalar");
  const T raw = graph.value(log_scale)[0];
  const T cap = static_cast<T>(std::log(kMaxLogitScale));
  const bool clamped = raw > cap;
  const T scale = std::exp(clamped ? cap : raw);
  const std::int64_t n = u.rows();
  const std::int64_t c = v.rows();
  const std::int64_t d = u.cols();

  auto dot = std::make_shared<std::vector<T>>(static_cast<std::size_t>(n * c));
  kernels::gemm_nt(u.ptr(), v.ptr(), dot->data(), n, d, c, false);
  std::vector<T> s(dot->size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = scale * (*dot)[i];
  }
  auto g = std::make_shared<std::vector<T>>();
  const T loss = contrastive_core<T>(s, n, k, g.get());
  require(std::isfinite(loss), ErrorKind::numeric, "contrastive loss is not finite");

  const Var inputs[] = {image_emb, caption_emb, log_scale};
  return graph.custom(
      inputs, Tensor<T>({1}, loss),
      [&graph, image_emb, caption_emb, n, c, d, scale, clamped, dot, g](
          const Tensor<T>& dout, std::span<Tensor<T>*> dinputs) {
        const T up = dout[0];
        std::vector<T> gs(g->size());
        for (std::size_t i = 0; i < gs.size(); ++i) {
          gs[i] = up * scale * (*g)[i];
        }
        if (dinputs[0] != nullptr) {
          kernels::gemm(gs.data(), graph.value(caption_emb).ptr(), dinputs[0]->ptr(), n, c, d, true);
        }
        if (dinputs[1] != nullptr) {
          kernels::gemm_tn(gs.data(), graph.value(image_emb).ptr(), dinputs[1]->ptr(), c, n, d,
                           true);
        }
        if (dinputs[2] != nullptr && !clamped) {
          // d s / d log_scale = s, so the contribution is sum(G * scale * dot).
          T acc = 0;
          for (std::size_t i = 0; i < gs.size(); ++i) {
            acc += gs[i] * (*dot)[i];
          }
          (*dinputs[2])[0] += acc;
        }
      });
}

const char* to_string(CaptionSource source) {
  switch (source) {
    case CaptionSource::synthetic:
      return "synthetic";
    case CaptionSource::original:
      return "original";
    case CaptionSource::both:
      return "both";
  }
  return "both";
}

CaptionSource parse_caption_source(std::string_view text) {
  if (text == "synthetic") {
    return CaptionSource::synthetic;
  }
  if (text == "original") {
    return CaptionSource::original;
  }
  if (text == "both") {
    return CaptionSource::both;
  }
  fail(ErrorKind::config,
       "unknown caption_source '" + std::string(text) + "' (synthetic | original | both)");
}

template <typename T>
LossVars<T> total_loss(Binder<T>& bind, const ModelConfig& config, const Tokenizer& tokenizer,
                       const TrainBatch<T>& batch, const LossToggles& toggles) {
  auto& g = bind.graph();
  const std::int64_t n = batch.images.dim(0);
  require(static_cast<std::int64_t>(batch.original.size()) == n, ErrorKind::data,
          "batch needs one original caption per image");
  const bool has_synthetic =
      static_cast<std::int64_t>(batch.synthetic.size()) == n &&
      std::none_of(batch.synthetic.begin(), batch.synthetic.end(),
                   [](const std::string& s) { return s.empty(); });
  if (toggles.caption_source != CaptionSource::original) {
    require(has_synthetic, ErrorKind::data,
            std::string("caption_source=") + to_string(toggles.caption_source) +
                " needs a synthetic caption for every record");
  }

  std::vector<std::string> captions;
  std::int64_t k = 1;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    switch (toggles.caption_source) {
      case CaptionSource::original:
        captions.push_back(batch.original[idx]);
        break;
      case CaptionSource::synthetic:
        captions.push_back(batch.synthetic[idx]);
        break;
      case CaptionSource::both:
        captions.push_back(batch.original[idx]);
        captions.push_back(batch.synthetic[idx]);
        k = 2;
        break;
    }
  }

  const VisionVars vision = vision_forward(bind, config.vision, batch.images);
  const TokenBatch text = make_token_batch(tokenizer, captions, config.text.encoder_context);
  const Var u = g.l2_normalize_rows(vision.pooled);
  const Var v = g.l2_normalize_rows(text_forward(bind, config.text, text));
  LossVars<T> out;
  out.contrastive = multi_positive_contrastive(g, u, v, bind("logit_scale"), k);
  out.breakdown.contrastive = g.value(out.contrastive)[0];
  if (!toggles.use_decoder) {
    out.total = out.contrastive;
    out.breakdown.total = out.breakdown.contrastive;
    return out;
  }

  std::vector<std::string> targets;
  for (std::int64_t i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const bool synth = idx < batch.synthetic.size() && !batch.synthetic[idx].empty();
    targets.push_back(synth ? batch.synthetic[idx] : batch.original[idx]);
  }
  const TokenBatch target_ids = make_token_batch(tokenizer, targets, config.text.decoder_context);
  const CaptionLoss cap = caption_decode_loss(bind, config.text, vision, target_ids);
  out.captioning = cap.loss;
  out.total = g.add(out.contrastive, g.scale(cap.loss, static_cast<T>(toggles.lambda_caption)));
  out.breakdown.captioning = g.value(cap.loss)[0];
  out.breakdown.total = g.value(out.total)[0];
  out.breakdown.lambda_caption = toggles.lambda_caption;
  out.breakdown.caption_tokens = cap.contributing;
  return out;
}

template float multi_positive_contrastive(const ContrastiveBatch<float>&);
template double multi_positive_contrastive(const ContrastiveBatch<double>&);
template Var multi_positive_contrastive(Graph<float>&, Var, Var, Var, std::int64_t);
template Var multi_positive_contrastive(Graph<double>&, Var, Var, Var, std::int64_t);
template LossVars<float> total_loss(Binder<float>&, const ModelConfig&, const Tokenizer&,
                                    const TrainBatch<float>&, const LossToggles&);
template LossVars<double> total_loss(Binder<double>&, const ModelConfig&, const Tokenizer&,
                                     const TrainBatch<double>&, const LossToggles&);

GradReport two_tower_grad_check(const ModelConfig& model, const LossToggles& toggles, int batch,
                                std::uint64_t seed, const GradCheckOptions& options) {
  require(batch >= 1, ErrorKind::config, "grad check batch must be >= 1");
  ModelConfig config = model;
  const Tokenizer tokenizer = sync_tokenizer(config.text);
  auto params = init_params<double>(two_tower_param_specs(config), seed);
  const auto records = gen_probe_dataset(mix_seed(seed, 0x6c0de), batch, config.vision.resolution);
  const auto data = make_train_batch<double>(records, config.vision.resolution);
  auto loss_fn = [&](ParameterStore<double>& p, bool with_grad) {
    Graph<double> g;
    Binder<double> bind(g, p);
    auto out = total_loss(bind, config, tokenizer, data, toggles);
    if (with_grad) {
      g.backward(out.total);
    }
    return out.breakdown.total;
  };
  return grad_check(loss_fn, params, options);
}

}  // namespace openvision
