#include "openvision/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "openvision/config.hpp"
#include "openvision/dataset.hpp"
#include "openvision/rng.hpp"

namespace openvision {

void StageSchedule::validate(int patch) const {
  require(resolution >= patch && resolution % patch == 0, ErrorKind::config,
          "stage resolution " + std::to_string(resolution) + " is not divisible by patch " +
              std::to_string(patch));
  require(batch >= 1, ErrorKind::config, "stage batch must be >= 1");
  require(samples >= batch && samples % batch == 0, ErrorKind::config,
          "stage samples " + std::to_string(samples) + " is not a positive multiple of batch " +
              std::to_string(batch));
  require(base_lr >= 0.0 && std::isfinite(base_lr), ErrorKind::config,
          "stage base_lr must be finite and >= 0");
  require(warmup_samples >= 0 && warmup_samples < samples, ErrorKind::config,
          "stage warmup_samples must lie in [0, samples)");
}

double lr_at(const StageSchedule& s, std::int64_t seen) {
  require(seen >= 0 && seen <= s.samples, ErrorKind::contract,
          "samples_seen " + std::to_string(seen) + " outside [0, " + std::to_string(s.samples) + "]");
  if (seen < s.warmup_samples) {
    return s.base_lr * static_cast<double>(seen) / static_cast<double>(s.warmup_samples);
  }
  const double t = static_cast<double>(seen - s.warmup_samples) /
                   static_cast<double>(s.samples - s.warmup_samples);
  return 0.5 * s.base_lr * (1.0 + std::cos(std::numbers::pi * t));
}

std::vector<StageSchedule> with_warmup(std::vector<StageSchedule> stages, double fraction) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorKind::config, "warmup fraction must be in [0, 1)");
  for (auto& s : stages) {
    s.warmup_samples = static_cast<std::int64_t>(std::floor(fraction * static_cast<double>(s.samples)));
  }
  return stages;
}

StepStats adamw_step(ParameterStore<float>& params, OptimizerState& state, const AdamWConfig& config,
                     double lr, const LrMultiplier& multiplier) {
  StepStats stats;
  double sq = 0.0;
  for (const auto& [name, p] : params) {
    if (!p.trainable || p.grad.empty()) {
      continue;
    }
    for (float g : p.grad.data()) {
      sq += static_cast<double>(g) * g;
    }
  }
  stats.grad_norm = std::sqrt(sq);
  require(std::isfinite(stats.grad_norm), ErrorKind::numeric, "gradient norm is not finite");
  if (config.clip_norm > 0.0 && stats.grad_norm > config.clip_norm) {
    stats.clip_scale = config.clip_norm / stats.grad_norm;
  }
  state.steps += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.steps));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.steps));
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  for (auto& [name, p] : params) {
    if (!p.trainable) {
      continue;
    }
    const double mult = multiplier ? multiplier(name) : 1.0;
    auto& mom = state.moments[name];
    if (mom.m.shape() != p.value.shape()) {
      mom.m = Tensor<float>(p.value.shape());
      mom.v = Tensor<float>(p.value.shape());
    }
    const auto step_lr = static_cast<float>(lr * mult);
    const auto decay = p.decay ? static_cast<float>(lr * mult * config.weight_decay) : 0.0f;
    const auto clip = static_cast<float>(stats.clip_scale);
    const auto inv_bc1 = static_cast<float>(1.0 / bc1);
    const auto inv_bc2 = static_cast<float>(1.0 / bc2);
    const auto eps = static_cast<float>(config.eps);
    const bool has_grad = !p.grad.empty();
    float* w = p.value.ptr();
    float* m = mom.m.ptr();
    float* v = mom.v.ptr();
    for (std::int64_t i = 0; i < p.value.size(); ++i) {
      const float g = has_grad ? p.grad[i] * clip : 0.0f;
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      const float update = (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps);
      w[i] -= step_lr * update + decay * w[i];
    }
  }
  return stats;
}

namespace {

constexpr std::string_view kMomentM = "opt/m/";
constexpr std::string_view kMomentV = "opt/v/";

}  // namespace

Checkpoint state_to_checkpoint(const TrainState& state) {
  Checkpoint ck;
  std::ostringstream text;
  text << "[state]\n"
       << "step = " << state.step << "\n"
       << "stage_index = " << state.stage_index << "\n"
       << "stage_samples = " << state.stage_samples << "\n"
       << "epoch = " << state.epoch << "\n"
       << "cursor = " << state.cursor << "\n"
       << "seed = " << state.seed << "\n"
       << "optimizer_steps = " << state.optimizer.steps << "\n";
  ck.config_text = text.str();
  for (const auto& [name, p] : state.params) {
    auto& q = ck.params.add(name, p.value, p.decay);
    q.trainable = p.trainable;
  }
  for (const auto& [name, mom] : state.optimizer.moments) {
    ck.params.add(std::string(kMomentM) + name, mom.m, false);
    ck.params.add(std::string(kMomentV) + name, mom.v, false);
  }
  return ck;
}

TrainState state_from_checkpoint(const Checkpoint& ck) {
  const auto kv = parse_flat_ini(ck.config_text);
  auto get = [&](const std::string& key) -> std::int64_t {
    auto it = kv.find("state." + key);
    require(it != kv.end(), ErrorKind::data, "train state is missing '" + key + "'");
    return std::stoll(it->second);
  };
  TrainState s;
  s.step = get("step");
  s.stage_index = static_cast<int>(get("stage_index"));
  s.stage_samples = get("stage_samples");
  s.epoch = get("epoch");
  s.cursor = get("cursor");
  s.seed = std::stoull(kv.at("state.seed"));
  s.optimizer.steps = get("optimizer_steps");
  for (const auto& [name, p] : ck.params) {
    if (starts_with(name, kMomentM)) {
      s.optimizer.moments[name.substr(kMomentM.size())].m = p.value;
    } else if (starts_with(name, kMomentV)) {
      s.optimizer.moments[name.substr(kMomentV.size())].v = p.value;
    } else {
      auto& q = s.params.add(name, p.value, p.decay);
      q.trainable = p.trainable;
    }
  }
  return s;
}

void save_state(const std::filesystem::path& path, const TrainState& state) {
  save_checkpoint(path, state_to_checkpoint(state));
}

TrainState load_state(const std::filesystem::path& path) {
  return state_from_checkpoint(load_checkpoint(path));
}

TrainState initial_state(const ModelConfig& model, std::uint64_t seed) {
  TrainState s;
  s.params = init_params<float>(two_tower_param_specs(model), seed);
  s.seed = seed;
  return s;
}

namespace {

std::vector<std::int64_t> epoch_permutation(std::uint64_t seed, std::int64_t epoch, std::int64_t n) {
  std::vector<std::int64_t> perm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    perm[static_cast<std::size_t>(i)] = i;
  }
  Rng rng(mix_seed(seed, 0xe90c00000ULL + static_cast<std::uint64_t>(epoch)));
  for (std::int64_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

class JsonLog {
 public:
  explicit JsonLog(const std::filesystem::path& path) {
    if (!path.empty()) {
      if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
      }
      out_.open(path, std::ios::app);
      require(out_.good(), ErrorKind::io, "cannot open training log '" + path.string() + "'");
    }
  }

  void write(const nlohmann::ordered_json& record) {
    if (out_.is_open()) {
      out_ << record.dump() << '\n';
      out_.flush();
    }
  }

 private:
  std::ofstream out_;
};

}  // namespace

TrainState run_curriculum(const TrainerOptions& options, const std::vector<StageSchedule>& stages,
                          std::span<const CaptionedImage> data, TrainState state) {
  require(!stages.empty(), ErrorKind::config, "curriculum needs at least one stage");
  require(!data.empty(), ErrorKind::data, "training data is empty");
  options.model.validate();
  for (const auto& s : stages) {
    s.validate(options.model.vision.patch);
  }
  require(state.stage_index >= 0 && state.stage_index <= static_cast<int>(stages.size()),
          ErrorKind::config, "train state stage index is outside the schedule");

  ModelConfig model = options.model;
  const Tokenizer tokenizer = sync_tokenizer(model.text);
  ImageCache cache(data, options.cache_images);
  JsonLog log(options.log_path);
  const auto n = static_cast<std::int64_t>(data.size());
  auto perm = epoch_permutation(state.seed, state.epoch, n);
  const auto t0 = std::chrono::steady_clock::now();

  for (; state.stage_index < static_cast<int>(stages.size()); ++state.stage_index) {
    const auto& stage = stages[static_cast<std::size_t>(state.stage_index)];
    model.vision.resolution = stage.resolution;
    if (state.stage_samples == 0) {
      // A new grid means a new derived position table; learned tensors carry over untouched.
      nlohmann::ordered_json rec;
      rec["event"] = "stage_start";
      rec["stage"] = state.stage_index;
      rec["resolution"] = stage.resolution;
      rec["grid"] = model.vision.grid();
      rec["pe_rows"] = model.vision.grid() * model.vision.grid();
      rec["samples"] = stage.samples;
      rec["batch"] = stage.batch;
      rec["base_lr"] = stage.base_lr;
      rec["params_hash"] = state.params.hash();
      log.write(rec);
      if (options.on_stage_start) {
        options.on_stage_start(state.stage_index, state);
      }
    }
    while (state.stage_samples < stage.samples) {
      if (options.max_steps > 0 && state.step >= options.max_steps) {
        return state;
      }
      const double lr = lr_at(stage, state.stage_samples);
      std::vector<std::int64_t> indices;
      indices.reserve(static_cast<std::size_t>(stage.batch));
      while (static_cast<int>(indices.size()) < stage.batch) {
        if (state.cursor == n) {
          state.cursor = 0;
          state.epoch += 1;
          perm = epoch_permutation(state.seed, state.epoch, n);
          nlohmann::ordered_json rec;
          rec["event"] = "epoch_wrap";
          rec["epoch"] = state.epoch;
          rec["step"] = state.step;
          log.write(rec);
        }
        indices.push_back(perm[static_cast<std::size_t>(state.cursor++)]);
      }
      bool flip = false;
      if (options.flip) {
        Rng coin(mix_seed(state.seed, 0xf11b000000ULL + static_cast<std::uint64_t>(state.step)));
        flip = coin.below(2) == 1;
      }
      const auto batch = make_train_batch<float>(cache, data, indices, stage.resolution, flip);

      state.params.zero_grad();
      Graph<float> graph;
      Binder<float> bind(graph, state.params);
      const auto loss = total_loss(bind, model, tokenizer, batch, options.toggles);
      require(std::isfinite(loss.breakdown.total), ErrorKind::numeric,
              "loss diverged at step " + std::to_string(state.step));
      graph.backward(loss.total);
      const auto stats = adamw_step(state.params, state.optimizer, options.optimizer, lr);
      for (const auto& [name, p] : state.params) {
        require(p.value.all_finite(), ErrorKind::numeric,
                "parameter '" + name + "' became non-finite at step " + std::to_string(state.step));
      }
      state.stage_samples += stage.batch;
      state.step += 1;

      StepRecord record;
      record.step = state.step;
      record.stage = state.stage_index;
      record.resolution = stage.resolution;
      record.stage_samples = state.stage_samples;
      record.lr = lr;
      record.loss = loss.breakdown;
      record.grad_norm = stats.grad_norm;
      record.epoch = state.epoch;
      record.wall_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0).count();
      nlohmann::ordered_json rec;
      rec["step"] = record.step;
      rec["stage"] = record.stage;
      rec["resolution"] = record.resolution;
      rec["samples_seen"] = record.stage_samples;
      rec["lr"] = record.lr;
      rec["contrastive"] = record.loss.contrastive;
      rec["captioning"] = record.loss.captioning;
      rec["total"] = record.loss.total;
      rec["lambda_caption"] = record.loss.lambda_caption;
      rec["grad_norm"] = record.grad_norm;
      rec["epoch"] = record.epoch;
      if (!options.strict) {
        rec["wall_ms"] = record.wall_ms;
      }
      log.write(rec);
      if (options.on_step) {
        options.on_step(record, state);
      }
    }
    nlohmann::ordered_json rec;
    rec["event"] = "stage_end";
    rec["stage"] = state.stage_index;
    rec["step"] = state.step;
    rec["samples_seen"] = state.stage_samples;
    rec["params_hash"] = state.params.hash();
    log.write(rec);
    if (!options.snapshot_dir.empty()) {
      export_vision(state.params, model.vision,
                    options.snapshot_dir / ("stage_" + std::to_string(state.stage_index) + ".ovck"));
    }
    if (options.on_stage_end) {
      options.on_stage_end(state.stage_index, state);
    }
    state.stage_samples = 0;
  }
  return state;
}

Checkpoint export_vision(const ParameterStore<float>& params, const VisionConfig& config) {
  Checkpoint ck;
  ck.config_text = vision_config_to_ini(config);
  ck.params = params.subset(kVisionPrefixes);
  require(ck.params.size() > 0, ErrorKind::config, "no vision parameters to export");
  return ck;
}

void export_vision(const ParameterStore<float>& params, const VisionConfig& config,
                   const std::filesystem::path& path) {
  save_checkpoint(path, export_vision(params, config));
}

VisionBackbone vision_from_checkpoint(const Checkpoint& ck) {
  VisionBackbone out;
  out.config = vision_config_from_ini(ck.config_text);
  out.params = ck.params.subset(kVisionPrefixes);
  for (const auto& spec : vision_param_specs(out.config)) {
    require(out.params.contains(spec.name), ErrorKind::config,
            "vision checkpoint is missing '" + spec.name + "'");
  }
  return out;
}

VisionBackbone load_vision(const std::filesystem::path& path) {
  return vision_from_checkpoint(load_checkpoint(path));
}

}  // namespace openvision
