#include "openvision/mllm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include <json.hpp>

#include "openvision/rng.hpp"

namespace openvision {

std::vector<std::pair<int, int>> default_grids() {
  return {{1, 1}, {1, 2}, {2, 1}, {1, 3}, {3, 1}, {2, 2}, {1, 4}, {4, 1}};
}

std::vector<std::pair<int, int>> grids_up_to(int max_side, int max_tiles) {
  std::vector<std::pair<int, int>> out;
  for (int r = 1; r <= max_side; ++r) {
    for (int c = 1; c <= max_side; ++c) {
      if (r * c <= max_tiles) {
        out.emplace_back(r, c);
      }
    }
  }
  return out;
}

namespace {

struct Fit {
  std::int64_t effective = 0;
  std::int64_t wasted = 0;
};

Fit fit_into(int height, int width, int rows, int cols, int base) {
  const double canvas_h = static_cast<double>(rows) * base;
  const double canvas_w = static_cast<double>(cols) * base;
  const double scale = std::min(canvas_w / width, canvas_h / height);
  const auto h = static_cast<std::int64_t>(height * scale);
  const auto w = static_cast<std::int64_t>(width * scale);
  Fit f;
  f.effective = std::min(h * w, static_cast<std::int64_t>(height) * width);
  f.wasted = static_cast<std::int64_t>(rows) * base * cols * base - f.effective;
  return f;
}

}  // namespace

AnyResGrid select_grid(int height, int width, int base,
                       std::span<const std::pair<int, int>> allowed) {
  require(height > 0 && width > 0, ErrorKind::data, "select_grid needs a non-empty image");
  require(base > 0, ErrorKind::config, "anyres base must be positive");
  require(!allowed.empty(), ErrorKind::config, "no anyres grids allowed");
  AnyResGrid best;
  Fit best_fit;
  bool first = true;
  for (const auto& [r, c] : allowed) {
    require(r >= 1 && c >= 1, ErrorKind::config, "anyres grid sides must be >= 1");
    const Fit f = fit_into(height, width, r, c, base);
    bool better = first;
    if (!first) {
      if (f.effective != best_fit.effective) {
        better = f.effective > best_fit.effective;
      } else if (f.wasted != best_fit.wasted) {
        better = f.wasted < best_fit.wasted;
      } else if (r * c != best.tiles()) {
        better = r * c < best.tiles();
      } else {
        better = r <= c && best.rows > best.cols;
      }
    }
    if (better) {
      best = AnyResGrid{r, c, base};
      best_fit = f;
      first = false;
    }
  }
  return best;
}

AnyResGrid select_grid(int height, int width, int base) {
  const auto grids = default_grids();
  return select_grid(height, width, base, grids);
}

double wasted_fraction(int height, int width, const AnyResGrid& grid) {
  const Fit f = fit_into(height, width, grid.rows, grid.cols, grid.base);
  return static_cast<double>(f.wasted) /
         (static_cast<double>(grid.rows) * grid.base * grid.cols * grid.base);
}

std::vector<Image> tile(const Image& image, const AnyResGrid& grid, float pad) {
  require(image.height > 0 && image.width > 0, ErrorKind::data, "cannot tile an empty image");
  require(grid.rows >= 1 && grid.cols >= 1 && grid.base >= 8, ErrorKind::config,
          "anyres grid needs rows, cols >= 1 and base >= 8");
  const int canvas_h = grid.rows * grid.base;
  const int canvas_w = grid.cols * grid.base;
  const double scale = std::min(static_cast<double>(canvas_w) / image.width,
                                static_cast<double>(canvas_h) / image.height);
  const int nh = std::clamp(static_cast<int>(std::ceil(image.height * scale)), 1, canvas_h);
  const int nw = std::clamp(static_cast<int>(std::ceil(image.width * scale)), 1, canvas_w);
  const Image resized = resize_bilinear(image, nh, nw);
  const int off_y = (canvas_h - nh) / 2;
  const int off_x = (canvas_w - nw) / 2;
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(grid.crops()));
  for (int r = 0; r < grid.rows; ++r) {
    for (int c = 0; c < grid.cols; ++c) {
      out.push_back(crop(resized, r * grid.base - off_y, c * grid.base - off_x, grid.base,
                         grid.base, pad));
    }
  }
  out.push_back(resize(image, grid.base));
  return out;
}

void LmConfig::validate() const {
  require(layers >= 1, ErrorKind::config, "lm.layers must be >= 1");
  require(width >= 2 && width % 2 == 0, ErrorKind::config, "lm.width must be even");
  require(heads >= 1 && width % heads == 0, ErrorKind::config,
          "lm.width must be divisible by lm.heads");
  require(mlp_dim >= 0, ErrorKind::config, "lm.mlp_dim must be >= 0");
  require(context >= 2, ErrorKind::config, "lm.context must be >= 2");
  require(!tokenizer.empty(), ErrorKind::config, "lm.tokenizer must be set");
}

std::vector<ParamSpec> lm_param_specs(const LmConfig& config, int vocab_size) {
  config.validate();
  std::vector<ParamSpec> out;
  const std::int64_t w = config.width;
  out.push_back({"lm/tok_embed", {vocab_size, w}, InitKind::embedding, true});
  for (int i = 0; i < config.layers; ++i) {
    auto block = block_param_specs("lm/blocks/" + std::to_string(i), w, config.mlp());
    out.insert(out.end(), block.begin(), block.end());
  }
  out.push_back({"lm/ln_final/g", {w}, InitKind::ones, false});
  out.push_back({"lm/ln_final/b", {w}, InitKind::zeros, false});
  out.push_back({"lm/head/w", {w, vocab_size}, InitKind::truncated_normal, true});
  out.push_back({"lm/head/b", {vocab_size}, InitKind::zeros, false});
  return out;
}

template <typename T>
MmSequence build_mm_sequence(Binder<T>& bind, const LmConfig& config, Var visual,
                             std::span<const std::int32_t> prompt_ids,
                             std::span<const std::int32_t> answer_ids) {
  auto& g = bind.graph();
  MmSequence seq;
  std::vector<Var> parts;
  if (visual.valid()) {
    const auto& v = g.value(visual);
    require(v.rank() == 2 && v.dim(1) == config.width, ErrorKind::dimension,
            "visual tokens " + shape_string(v.shape()) + " do not match lm width " +
                std::to_string(config.width));
    seq.visual = v.dim(0);
    parts.push_back(visual);
  }
  std::vector<std::int32_t> ids(prompt_ids.begin(), prompt_ids.end());
  ids.insert(ids.end(), answer_ids.begin(), answer_ids.end());
  seq.length = seq.visual + static_cast<std::int64_t>(ids.size());
  require(seq.length <= config.context, ErrorKind::context_overflow,
          "multimodal sequence of " + std::to_string(seq.length) + " tokens exceeds lm context " +
              std::to_string(config.context));
  require(seq.length > 0, ErrorKind::data, "empty multimodal sequence");
  if (!ids.empty()) {
    parts.push_back(g.gather_rows(bind("lm/tok_embed"), ids));
  }
  seq.embeddings = parts.size() == 1 ? parts.front() : g.concat_rows(parts);
  seq.targets.assign(static_cast<std::size_t>(seq.length), kNoTarget);
  seq.loss_mask.assign(static_cast<std::size_t>(seq.length), 0);
  const std::int64_t first_answer = seq.visual + static_cast<std::int64_t>(prompt_ids.size());
  for (std::size_t i = 0; i < answer_ids.size(); ++i) {
    const std::int64_t pos = first_answer + static_cast<std::int64_t>(i) - 1;
    if (pos >= 0) {
      seq.targets[static_cast<std::size_t>(pos)] = answer_ids[i];
      seq.loss_mask[static_cast<std::size_t>(pos)] = 1;
    }
  }
  return seq;
}

template <typename T>
Var lm_logits(Binder<T>& bind, const LmConfig& config, Var embeddings, std::int64_t batch) {
  auto& g = bind.graph();
  const std::int64_t rows = g.value(embeddings).dim(0);
  require(batch >= 1 && rows % batch == 0, ErrorKind::dimension,
          "lm input rows are not a multiple of the batch");
  const auto len = static_cast<int>(rows / batch);
  Var x = g.add_rows(embeddings, g.constant(sincos_pe_1d<T>(len, config.width)));
  for (int i = 0; i < config.layers; ++i) {
    x = transformer_block(bind, "lm/blocks/" + std::to_string(i), x, batch, config.heads, true);
  }
  x = g.layer_norm(x, bind("lm/ln_final/g"), bind("lm/ln_final/b"), static_cast<T>(kLayerNormEps));
  return g.linear(x, bind("lm/head/w"), bind("lm/head/b"));
}

const char* to_string(TuneMode mode) {
  return mode == TuneMode::frozen_encoder ? "frozen_encoder" : "full_finetune";
}

TuneMode parse_tune_mode(std::string_view text) {
  if (text == "frozen_encoder" || text == "frozen") {
    return TuneMode::frozen_encoder;
  }
  if (text == "full_finetune" || text == "full") {
    return TuneMode::full_finetune;
  }
  fail(ErrorKind::config, "unknown tune mode '" + std::string(text) +
                              "' (frozen_encoder | full_finetune)");
}

TuneMultipliers effective_multipliers(TuneMode mode, TuneMultipliers requested) {
  if (mode == TuneMode::frozen_encoder) {
    requested.vision = 0.0;
  }
  return requested;
}

void MllmConfig::validate() const {
  vision.validate();
  projector.validate();
  lm.validate();
  require(projector.in_width == vision.width, ErrorKind::config,
          "projector input width must equal the vision width");
  require(projector.out_width == lm.width, ErrorKind::config,
          "projector output width must equal the lm width");
  require(max_tiles >= 1, ErrorKind::config, "max_tiles must be >= 1");
}

std::vector<Image> mllm_crops(const Image& image, const MllmConfig& config) {
  const int base = config.vision.resolution;
  if (!config.anyres) {
    return {resize(image, base)};
  }
  const auto grids = grids_up_to(config.max_tiles, config.max_tiles);
  return tile(image, select_grid(image.height, image.width, base, grids));
}

ParameterStore<float> init_mllm(const MllmConfig& config, const ParameterStore<float>& vision,
                                std::uint64_t seed) {
  config.validate();
  ParameterStore<float> out;
  for (const auto& spec : vision_param_specs(config.vision)) {
    require(vision.contains(spec.name), ErrorKind::config,
            "vision weights are missing '" + spec.name + "'");
    const auto& p = vision.at(spec.name);
    require(p.value.shape() == spec.shape, ErrorKind::config,
            "vision tensor '" + spec.name + "' has shape " + shape_string(p.value.shape()) +
                ", expected " + shape_string(spec.shape));
    out.add(spec.name, p.value, p.decay);
  }
  const Tokenizer tok = Tokenizer::from_name(config.lm.tokenizer);
  auto specs = projector_param_specs(config.projector);
  auto lm = lm_param_specs(config.lm, tok.vocab_size());
  specs.insert(specs.end(), lm.begin(), lm.end());
  out.merge(init_params<float>(specs, seed));
  return out;
}

namespace {

// Projected patch tokens (class token dropped) per image, each [crops*patches x lm_width].
template <typename T>
std::vector<Var> visual_tokens(Binder<T>& bind, const MllmConfig& config,
                               const std::vector<std::vector<Image>>& crops_per_image) {
  auto& g = bind.graph();
  std::vector<Image> all;
  for (const auto& crops : crops_per_image) {
    all.insert(all.end(), crops.begin(), crops.end());
  }
  const auto vis = vision_forward(bind, config.vision, images_to_tensor<T>(all));
  const std::int64_t skip = config.vision.pool == Pool::cls_token ? 1 : 0;
  const std::int64_t patches = vis.tokens_per_image - skip;
  std::vector<std::int64_t> rows;
  rows.reserve(static_cast<std::size_t>(vis.batch * patches));
  for (std::int64_t b = 0; b < vis.batch; ++b) {
    for (std::int64_t p = 0; p < patches; ++p) {
      rows.push_back(b * vis.tokens_per_image + skip + p);
    }
  }
  const Var projected = projector_forward(bind, config.projector, g.select_rows(vis.tokens, rows));
  std::vector<Var> out;
  std::int64_t start = 0;
  for (const auto& crops : crops_per_image) {
    const auto n = static_cast<std::int64_t>(crops.size()) * patches;
    std::vector<std::int64_t> mine(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      mine[static_cast<std::size_t>(i)] = start + i;
    }
    out.push_back(g.select_rows(projected, mine));
    start += n;
  }
  return out;
}

std::vector<std::int32_t> prompt_ids(const Tokenizer& tok, const std::string& question) {
  std::vector<std::int32_t> ids{tok.bos_id()};
  const auto q = tok.encode_plain(question);
  ids.insert(ids.end(), q.begin(), q.end());
  return ids;
}

std::vector<std::int32_t> answer_ids(const Tokenizer& tok, const std::string& answer) {
  auto ids = tok.encode_plain(answer);
  ids.push_back(tok.eos_id());
  return ids;
}

}  // namespace

template <typename T>
Var mllm_loss(Binder<T>& bind, const MllmConfig& config, const Tokenizer& tokenizer,
              std::span<const VqaExample* const> batch) {
  require(!batch.empty(), ErrorKind::data, "empty VQA batch");
  auto& g = bind.graph();
  std::vector<std::vector<Image>> crops;
  crops.reserve(batch.size());
  for (const auto* ex : batch) {
    crops.push_back(mllm_crops(ex->image, config));
  }
  const auto visual = visual_tokens(bind, config, crops);
  std::vector<MmSequence> seqs;
  std::int64_t longest = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto p = prompt_ids(tokenizer, batch[i]->question);
    const auto a = answer_ids(tokenizer, batch[i]->answer);
    seqs.push_back(build_mm_sequence(bind, config.lm, visual[i], p, a));
    longest = std::max(longest, seqs.back().length);
  }
  std::vector<Var> parts;
  std::vector<std::int32_t> targets;
  for (auto& s : seqs) {
    parts.push_back(s.embeddings);
    targets.insert(targets.end(), s.targets.begin(), s.targets.end());
    if (s.length < longest) {
      const std::vector<std::int32_t> pad(static_cast<std::size_t>(longest - s.length),
                                          tokenizer.pad_id());
      parts.push_back(g.gather_rows(bind("lm/tok_embed"), pad));
      targets.insert(targets.end(), pad.size(), kNoTarget);
    }
  }
  const Var embeddings = g.concat_rows(parts);
  const Var logits = lm_logits(bind, config.lm, embeddings, static_cast<std::int64_t>(batch.size()));
  return g.cross_entropy(logits, targets, kNoTarget).loss;
}

void finetune(const FinetuneOptions& options, const MllmConfig& config,
              const std::vector<FinetuneStage>& stages,
              const std::vector<std::vector<VqaExample>>& stage_data, ParameterStore<float>& weights) {
  config.validate();
  require(stages.size() == stage_data.size(), ErrorKind::config,
          "every finetune stage needs its own data");
  const Tokenizer tokenizer = Tokenizer::from_name(config.lm.tokenizer);
  const TuneMultipliers mult = effective_multipliers(options.mode, options.multipliers);

  std::ofstream log;
  if (!options.log_path.empty()) {
    if (options.log_path.has_parent_path()) {
      std::filesystem::create_directories(options.log_path.parent_path());
    }
    log.open(options.log_path, std::ios::app);
    require(log.good(), ErrorKind::io, "cannot open finetune log '" + options.log_path.string() + "'");
  }
  std::map<std::string, bool> saved_flags;
  for (const auto& [name, p] : weights) {
    saved_flags[name] = p.trainable;
  }

  OptimizerState optimizer;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t si = 0; si < stages.size(); ++si) {
    const auto& stage = stages[si];
    const auto& data = stage_data[si];
    require(!data.empty(), ErrorKind::data, "finetune stage '" + stage.name + "' has no data");
    require(stage.steps >= 1 && stage.batch >= 1, ErrorKind::config,
            "finetune stage steps and batch must be >= 1");
    const double lm_mult = stage.train_lm ? mult.lm : 0.0;
    // Parameters with a zero multiplier are excluded from the graph's gradients.
    for (auto& [name, p] : weights) {
      double m = 1.0;
      if (starts_with(name, "vision/")) {
        m = mult.vision;
      } else if (starts_with(name, "projector/")) {
        m = mult.projector;
      } else if (starts_with(name, "lm/")) {
        m = lm_mult;
      }
      p.trainable = saved_flags[name] && m > 0.0;
    }
    const LrMultiplier multiplier = [&](std::string_view name) {
      if (starts_with(name, "vision/")) {
        return mult.vision;
      }
      if (starts_with(name, "projector/")) {
        return mult.projector;
      }
      if (starts_with(name, "lm/")) {
        return lm_mult;
      }
      return 1.0;
    };
    StageSchedule schedule;
    schedule.samples = stage.steps * stage.batch;
    schedule.batch = stage.batch;
    schedule.base_lr = stage.lr;
    schedule.warmup_samples = static_cast<std::int64_t>(0.03 * static_cast<double>(schedule.samples));

    const auto n = static_cast<std::int64_t>(data.size());
    std::vector<std::int64_t> perm;
    std::int64_t cursor = n;
    std::int64_t epoch = -1;
    for (std::int64_t step = 0; step < stage.steps; ++step) {
      std::vector<const VqaExample*> batch;
      while (static_cast<int>(batch.size()) < stage.batch) {
        if (cursor == n) {
          epoch += 1;
          cursor = 0;
          perm.resize(static_cast<std::size_t>(n));
          for (std::int64_t i = 0; i < n; ++i) {
            perm[static_cast<std::size_t>(i)] = i;
          }
          Rng rng(mix_seed(mix_seed(options.seed, 0xf1e7000ULL + si), static_cast<std::uint64_t>(epoch)));
          for (std::int64_t i = n - 1; i > 0; --i) {
            const auto j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i + 1)));
            std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
          }
        }
        batch.push_back(&data[static_cast<std::size_t>(perm[static_cast<std::size_t>(cursor++)])]);
      }
      const double lr = lr_at(schedule, step * stage.batch);
      weights.zero_grad();
      Graph<float> graph;
      Binder<float> bind(graph, weights);
      const Var loss = mllm_loss(bind, config, tokenizer, batch);
      const double value = graph.value(loss)[0];
      require(std::isfinite(value), ErrorKind::numeric,
              "finetune loss diverged in stage '" + stage.name + "' at step " + std::to_string(step));
      graph.backward(loss);
      const auto stats = adamw_step(weights, optimizer, options.optimizer, lr, multiplier);
      if (log.is_open()) {
        nlohmann::ordered_json rec;
        rec["stage"] = stage.name;
        rec["step"] = step + 1;
        rec["lr"] = lr;
        rec["loss"] = value;
        rec["grad_norm"] = stats.grad_norm;
        if (!options.strict) {
          rec["wall_ms"] =
              std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        }
        log << rec.dump() << '\n';
      }
      if (options.on_step) {
        options.on_step(static_cast<int>(si), step + 1, value);
      }
    }
  }
  for (auto& [name, p] : weights) {
    p.trainable = saved_flags[name];
  }
}

std::string generate_answer(const ParameterStore<float>& weights, const MllmConfig& config,
                            const Image& image, const std::string& question, int max_new) {
  const Tokenizer tokenizer = Tokenizer::from_name(config.lm.tokenizer);
  Tensor<float> visual;
  {
    Graph<float> graph;
    Binder<float> bind(graph, weights);
    const auto vars = visual_tokens(bind, config, {mllm_crops(image, config)});
    visual = graph.value(vars.front());
  }
  const auto prompt = prompt_ids(tokenizer, question);
  std::vector<std::int32_t> generated;
  for (int i = 0; i < max_new; ++i) {
    if (visual.dim(0) + static_cast<std::int64_t>(prompt.size() + generated.size()) >=
        config.lm.context) {
      break;
    }
    Graph<float> graph;
    Binder<float> bind(graph, weights);
    const auto seq = build_mm_sequence(bind, config.lm, graph.constant_ref(visual), prompt, generated);
    const Var logits = lm_logits(bind, config.lm, seq.embeddings, 1);
    const auto& table = graph.value(logits);
    const std::int64_t vocab = table.dim(1);
    const float* last = table.ptr() + (seq.length - 1) * vocab;
    const auto next = static_cast<std::int32_t>(std::max_element(last, last + vocab) - last);
    if (next == tokenizer.eos_id()) {
      break;
    }
    generated.push_back(next);
  }
  return tokenizer.decode(generated);
}

std::vector<VqaSample> read_vqa_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::data, "cannot read VQA file '" + path.string() + "'");
  std::vector<VqaSample> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) {
      continue;
    }
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::data, where + ": " + e.what());
    }
    VqaSample s;
    for (auto [key, field] : {std::pair{"image", &s.image}, std::pair{"question", &s.question},
                              std::pair{"answer", &s.answer}}) {
      require(j.is_object() && j.contains(key) && j[key].is_string(), ErrorKind::data,
              where + ": missing string field '" + key + "'");
      *field = j[key].get<std::string>();
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_vqa_jsonl(const std::filesystem::path& path, std::span<const VqaSample> samples) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write '" + path.string() + "'");
  for (const auto& s : samples) {
    nlohmann::ordered_json j;
    j["image"] = s.image;
    j["question"] = s.question;
    j["answer"] = s.answer;
    out << j.dump() << '\n';
  }
}

std::vector<VqaExample> load_vqa_examples(const std::filesystem::path& path) {
  const auto dir = path.parent_path();
  std::vector<VqaExample> out;
  for (const auto& s : read_vqa_jsonl(path)) {
    std::filesystem::path image = s.image;
    if (image.is_relative()) {
      image = dir / image;
    }
    out.push_back({load_png(image), s.question, s.answer});
  }
  return out;
}

std::vector<VqaExample> probe_vqa_examples(std::span<const CaptionedImage> records) {
  std::vector<VqaExample> out;
  for (const auto& rec : records) {
    const auto meta = ProbeMeta::parse(rec.meta);
    if (meta.label() < 0) {
      continue;
    }
    const Image image = decode_png(rec.png);
    for (auto q : {kColorQuestion, kShapeQuestion}) {
      out.push_back({image, std::string(q), probe_vqa_answer(meta, q)});
    }
  }
  return out;
}

void write_probe_vqa(const std::filesystem::path& dir, std::span<const CaptionedImage> records) {
  std::filesystem::create_directories(dir / "images");
  std::vector<VqaSample> samples;
  for (const auto& rec : records) {
    const auto meta = ProbeMeta::parse(rec.meta);
    if (meta.label() < 0) {
      continue;
    }
    const std::string rel = "images/" + std::to_string(rec.id) + ".png";
    std::ofstream png(dir / rel, std::ios::binary);
    require(png.good(), ErrorKind::io, "cannot write '" + (dir / rel).string() + "'");
    png.write(reinterpret_cast<const char*>(rec.png.data()),
              static_cast<std::streamsize>(rec.png.size()));
    for (auto q : {kColorQuestion, kShapeQuestion}) {
      samples.push_back({rel, std::string(q), probe_vqa_answer(meta, q)});
    }
  }
  write_vqa_jsonl(dir / "vqa.jsonl", samples);
}

#define OPENVISION_INSTANTIATE(T)                                                              \
  template MmSequence build_mm_sequence(Binder<T>&, const LmConfig&, Var,                       \
                                        std::span<const std::int32_t>,                          \
                                        std::span<const std::int32_t>);                         \
  template Var lm_logits(Binder<T>&, const LmConfig&, Var, std::int64_t);                       \
  template Var mllm_loss(Binder<T>&, const MllmConfig&, const Tokenizer&,                       \
                         std::span<const VqaExample* const>);

OPENVISION_INSTANTIATE(float)
OPENVISION_INSTANTIATE(double)

#undef OPENVISION_INSTANTIATE

}  // namespace openvision
