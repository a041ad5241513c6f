#include "openvision/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "openvision/probe.hpp"

namespace openvision {

const char* to_string(Direction direction) {
  return direction == Direction::image_to_text ? "image_to_text" : "text_to_image";
}

namespace {

void require_unit_rows(const Tensor<float>& x, const char* what) {
  require(x.rank() == 2, ErrorKind::dimension, std::string(what) + " must be a matrix");
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    double sq = 0.0;
    for (float v : x.row(r)) {
      sq += static_cast<double>(v) * v;
    }
    require(std::abs(std::sqrt(sq) - 1.0) <= 1e-4, ErrorKind::contract,
            std::string(what) + " row " + std::to_string(r) + " is not unit-norm");
  }
}

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += static_cast<double>(a[i]) * b[i];
  }
  return s;
}

// rank of the matched candidate for each query row of `sim` (query-major).
std::vector<std::int64_t> ranks(const std::vector<double>& sim, std::int64_t n, bool transpose) {
  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  auto at = [&](std::int64_t q, std::int64_t c) {
    return transpose ? sim[static_cast<std::size_t>(c * n + q)] : sim[static_cast<std::size_t>(q * n + c)];
  };
  for (std::int64_t q = 0; q < n; ++q) {
    const double target = at(q, q);
    std::int64_t rank = 0;
    for (std::int64_t c = 0; c < n; ++c) {
      const double s = at(q, c);
      if (s > target || (s == target && c < q)) {
        ++rank;
      }
    }
    out[static_cast<std::size_t>(q)] = rank;
  }
  return out;
}

}  // namespace

RetrievalReport retrieval_recall(const Tensor<float>& image_embs, const Tensor<float>& caption_embs,
                                 std::span<const int> ks) {
  require_unit_rows(image_embs, "image embeddings");
  require_unit_rows(caption_embs, "caption embeddings");
  const std::int64_t n = image_embs.rows();
  require(n == caption_embs.rows() && image_embs.cols() == caption_embs.cols(),
          ErrorKind::dimension, "retrieval needs equally many image and caption embeddings");
  require(n >= 1, ErrorKind::data, "retrieval corpus is empty");
  require(!ks.empty(), ErrorKind::config, "retrieval needs at least one k");
  for (int k : ks) {
    require(k >= 1 && k <= n, ErrorKind::config,
            "recall@" + std::to_string(k) + " is undefined for a corpus of " + std::to_string(n));
  }
  std::vector<double> sim(static_cast<std::size_t>(n * n));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      sim[static_cast<std::size_t>(i * n + j)] = dot(image_embs.row(i), caption_embs.row(j));
    }
  }
  RetrievalReport report;
  const auto i2t = ranks(sim, n, false);
  const auto t2i = ranks(sim, n, true);
  for (int k : ks) {
    auto recall = [&](const std::vector<std::int64_t>& r) {
      const auto hits = std::count_if(r.begin(), r.end(), [&](std::int64_t x) { return x < k; });
      return static_cast<double>(hits) / static_cast<double>(n);
    };
    report.image_to_text.recall_at[k] = recall(i2t);
    report.text_to_image.recall_at[k] = recall(t2i);
  }
  return report;
}

ZeroShotResult zero_shot_from_embeddings(const Tensor<float>& image_embs,
                                         const Tensor<float>& class_embs,
                                         std::span<const int> labels) {
  require(image_embs.rank() == 2 && class_embs.rank() == 2 &&
              image_embs.cols() == class_embs.cols(),
          ErrorKind::dimension, "zero-shot embeddings disagree in width");
  const std::int64_t n = image_embs.rows();
  const std::int64_t classes = class_embs.rows();
  require(classes >= 1, ErrorKind::config, "zero-shot needs at least one class");
  require(static_cast<std::int64_t>(labels.size()) == n, ErrorKind::dimension,
          "zero-shot needs one label per image");
  require(n >= 1, ErrorKind::data, "zero-shot image set is empty");
  ZeroShotResult out;
  out.class_counts.assign(static_cast<std::size_t>(classes), 0);
  std::vector<std::int64_t> correct(static_cast<std::size_t>(classes), 0);
  std::int64_t total_correct = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    const int label = labels[static_cast<std::size_t>(i)];
    require(label >= 0 && label < classes, ErrorKind::data,
            "zero-shot label " + std::to_string(label) + " is out of range");
    int best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::int64_t c = 0; c < classes; ++c) {
      const double s = dot(image_embs.row(i), class_embs.row(c));
      if (s > best_score) {
        best_score = s;
        best = static_cast<int>(c);
      }
    }
    out.predictions.push_back(best);
    out.class_counts[static_cast<std::size_t>(label)] += 1;
    if (best == label) {
      correct[static_cast<std::size_t>(label)] += 1;
      total_correct += 1;
    }
  }
  out.accuracy = static_cast<double>(total_correct) / static_cast<double>(n);
  for (std::int64_t c = 0; c < classes; ++c) {
    const auto count = out.class_counts[static_cast<std::size_t>(c)];
    out.per_class.push_back(count == 0 ? std::numeric_limits<double>::quiet_NaN()
                                       : static_cast<double>(correct[static_cast<std::size_t>(c)]) /
                                             static_cast<double>(count));
  }
  return out;
}

std::vector<std::string> fill_templates(const std::string& classname,
                                        std::span<const std::string> templates) {
  require(!templates.empty(), ErrorKind::config, "zero-shot needs at least one template");
  std::vector<std::string> out;
  for (const auto& t : templates) {
    const auto at = t.find("{}");
    require(at != std::string::npos, ErrorKind::config, "template '" + t + "' has no {} placeholder");
    out.push_back(t.substr(0, at) + classname + t.substr(at + 2));
  }
  return out;
}

namespace {

void normalize_rows(Tensor<float>& x) {
  for (std::int64_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    double sq = 0.0;
    for (float v : row) {
      sq += static_cast<double>(v) * v;
    }
    const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
    for (float& v : row) {
      v = static_cast<float>(v * inv);
    }
  }
}

void append_rows(std::vector<float>& out, const Tensor<float>& x) {
  out.insert(out.end(), x.data().begin(), x.data().end());
}

}  // namespace

Tensor<float> embed_images(const ParameterStore<float>& params, const VisionConfig& config,
                           std::span<const Image> images, int chunk) {
  require(!images.empty(), ErrorKind::data, "no images to embed");
  require(chunk >= 1, ErrorKind::config, "embedding chunk must be >= 1");
  std::vector<float> data;
  for (std::size_t start = 0; start < images.size(); start += static_cast<std::size_t>(chunk)) {
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(chunk), images.size() - start);
    std::vector<Image> batch;
    for (std::size_t i = start; i < start + count; ++i) {
      const auto& img = images[i];
      batch.push_back(img.height == config.resolution && img.width == config.resolution
                          ? img
                          : resize(img, config.resolution));
    }
    append_rows(data, vision_forward(params, config, images_to_tensor<float>(batch)).pooled);
  }
  Tensor<float> out({static_cast<std::int64_t>(images.size()), config.width}, std::move(data));
  normalize_rows(out);
  return out;
}

Tensor<float> embed_texts(const ParameterStore<float>& params, const TextConfig& config,
                          std::span<const std::string> texts, int chunk) {
  require(!texts.empty(), ErrorKind::data, "no texts to embed");
  require(chunk >= 1, ErrorKind::config, "embedding chunk must be >= 1");
  const Tokenizer tok = Tokenizer::from_name(config.tokenizer);
  std::vector<float> data;
  std::int64_t width = 0;
  for (std::size_t start = 0; start < texts.size(); start += static_cast<std::size_t>(chunk)) {
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(chunk), texts.size() - start);
    const auto batch = make_token_batch(tok, texts.subspan(start, count), config.encoder_context);
    const auto emb = text_forward(params, config, batch);
    width = emb.cols();
    append_rows(data, emb);
  }
  Tensor<float> out({static_cast<std::int64_t>(texts.size()), width}, std::move(data));
  normalize_rows(out);
  return out;
}

Tensor<float> class_embeddings(const ParameterStore<float>& params, const TextConfig& config,
                               std::span<const std::string> classnames,
                               std::span<const std::string> templates) {
  require(!classnames.empty(), ErrorKind::config, "zero-shot needs at least one class");
  require(!templates.empty(), ErrorKind::config, "zero-shot needs at least one template");
  std::vector<std::string> prompts;
  for (const auto& name : classnames) {
    const auto filled = fill_templates(name, templates);
    prompts.insert(prompts.end(), filled.begin(), filled.end());
  }
  const auto emb = embed_texts(params, config, prompts);
  const auto t = static_cast<std::int64_t>(templates.size());
  Tensor<float> out({static_cast<std::int64_t>(classnames.size()), emb.cols()});
  for (std::int64_t c = 0; c < out.rows(); ++c) {
    auto row = out.row(c);
    for (std::int64_t j = 0; j < emb.cols(); ++j) {
      double s = 0.0;
      for (std::int64_t k = 0; k < t; ++k) {
        s += emb.at(c * t + k, j);
      }
      row[static_cast<std::size_t>(j)] = static_cast<float>(s / static_cast<double>(t));
    }
  }
  normalize_rows(out);
  return out;
}

ZeroShotResult zero_shot_classify(const ParameterStore<float>& vision, const VisionConfig& vision_config,
                                  const ParameterStore<float>& text, const TextConfig& text_config,
                                  std::span<const std::string> classnames,
                                  std::span<const std::string> templates,
                                  std::span<const Image> images, std::span<const int> labels) {
  require(!templates.empty(), ErrorKind::config, "zero-shot needs at least one template");
  const auto classes = class_embeddings(text, text_config, classnames, templates);
  const auto embs = embed_images(vision, vision_config, images);
  return zero_shot_from_embeddings(embs, classes, labels);
}

std::string normalize_answer(std::string_view text) {
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = text.find_last_not_of(" \t\r\n");
  std::string out(text.substr(b, e - b + 1));
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

double vqa_exact_match(std::span<const std::string> predictions, std::span<const std::string> answers) {
  require(predictions.size() == answers.size(), ErrorKind::dimension,
          "exact match needs one prediction per answer");
  if (answers.empty()) {
    return 0.0;
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    hits += normalize_answer(predictions[i]) == normalize_answer(answers[i]) ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(answers.size());
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  for (const auto& m : report.metrics) {
    nlohmann::ordered_json j;
    j["metric"] = m.name;
    j["value"] = m.value;
    j["dataset"] = report.dataset_id;
    j["checkpoint"] = report.checkpoint_hash;
    out += j.dump() + "\n";
  }
  return out;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write report '" + path.string() + "'");
  out << format_report(report);
}

std::string render_table(const EvalReport& report) {
  std::size_t width = 6;
  for (const auto& m : report.metrics) {
    width = std::max(width, m.name.size());
  }
  std::ostringstream o;
  o << "dataset " << report.dataset_id << "  checkpoint " << report.checkpoint_hash << "\n";
  o << "metric" << std::string(width - 6 + 2, ' ') << "value\n";
  for (const auto& m : report.metrics) {
    char value[32];
    std::snprintf(value, sizeof value, "%.4f", m.value);
    o << m.name << std::string(width - m.name.size() + 2, ' ') << value << "\n";
  }
  return o.str();
}

EvalReport evaluate_two_tower(const ParameterStore<float>& params, const ModelConfig& model,
                              std::span<const CaptionedImage> records,
                              std::span<const std::string> templates, std::span<const int> ks,
                              const std::string& dataset_id) {
  require(!records.empty(), ErrorKind::data, "evaluation set is empty");
  ModelConfig config = model;
  sync_tokenizer(config.text);
  std::vector<Image> images;
  std::vector<std::string> captions;
  std::vector<int> labels;
  std::vector<Image> labeled;
  for (const auto& rec : records) {
    images.push_back(decode_png(rec.png));
    captions.push_back(rec.caption_synthetic.empty() ? rec.caption_original : rec.caption_synthetic);
    if (!rec.meta.empty()) {
      const int label = ProbeMeta::parse(rec.meta).label();
      if (label >= 0) {
        labels.push_back(label);
        labeled.push_back(images.back());
      }
    }
  }
  EvalReport report;
  report.dataset_id = dataset_id;
  report.checkpoint_hash = hash_hex(params.hash());

  const auto img = embed_images(params, config.vision, images);
  const auto txt = embed_texts(params, config.text, captions);
  const auto r = retrieval_recall(img, txt, ks);
  for (const auto& [k, v] : r.image_to_text.recall_at) {
    report.metrics.push_back({"image_to_text_R@" + std::to_string(k), v});
  }
  for (const auto& [k, v] : r.text_to_image.recall_at) {
    report.metrics.push_back({"text_to_image_R@" + std::to_string(k), v});
  }
  if (!labels.empty()) {
    const auto names = probe_class_names();
    const auto zs = zero_shot_from_embeddings(embed_images(params, config.vision, labeled),
                                              class_embeddings(params, config.text, names, templates),
                                              labels);
    report.metrics.push_back({"zero_shot_accuracy", zs.accuracy});
  }
  return report;
}

}  // namespace openvision
