#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "openvision/checkpoint.hpp"
#include "openvision/model.hpp"
#include "openvision/objectives.hpp"
#include "openvision/records.hpp"

namespace openvision {

struct StageSchedule {
  int resolution = 64;
  std::int64_t samples = 0;
  int batch = 32;
  double base_lr = 1e-3;
  std::int64_t warmup_samples = 0;

  void validate(int patch) const;
  friend bool operator==(const StageSchedule&, const StageSchedule&) = default;
};

// Linear warmup to base_lr, then half-cosine decay to 0 at `samples`.
double lr_at(const StageSchedule& schedule, std::int64_t samples_seen);

// Warmup as a fraction of each stage's samples, rounded down.
std::vector<StageSchedule> with_warmup(std::vector<StageSchedule> stages, double fraction);

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.2;
  double clip_norm = 1.0;  // <= 0 disables clipping

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

struct Moments {
  Tensor<float> m;
  Tensor<float> v;
};

struct OptimizerState {
  std::map<std::string, Moments, std::less<>> moments;
  std::int64_t steps = 0;
};

// Learning-rate multiplier per parameter name; 0 freezes the parameter.
using LrMultiplier = std::function<double(std::string_view name)>;

struct StepStats {
  double grad_norm = 0.0;  // before clipping
  double clip_scale = 1.0;
};

// One AdamW step over trainable parameters in name order. Gradients are
// clipped by their global norm first; weight decay is decoupled and applies
// only to parameters flagged for decay.
StepStats adamw_step(ParameterStore<float>& params, OptimizerState& state, const AdamWConfig& config,
                     double lr, const LrMultiplier& multiplier = {});

struct TrainState {
  ParameterStore<float> params;
  OptimizerState optimizer;
  std::int64_t step = 0;
  int stage_index = 0;
  std::int64_t stage_samples = 0;  // samples consumed in the current stage
  std::int64_t epoch = 0;
  std::int64_t cursor = 0;  // position inside the current epoch's permutation
  std::uint64_t seed = 0;
};

Checkpoint state_to_checkpoint(const TrainState& state);
TrainState state_from_checkpoint(const Checkpoint& checkpoint);
void save_state(const std::filesystem::path& path, const TrainState& state);
TrainState load_state(const std::filesystem::path& path);

struct StepRecord {
  std::int64_t step = 0;
  int stage = 0;
  int resolution = 0;
  std::int64_t stage_samples = 0;  // after this step
  double lr = 0.0;
  LossBreakdown loss;
  double grad_norm = 0.0;
  std::int64_t epoch = 0;
  double wall_ms = 0.0;
};

struct TrainerOptions {
  ModelConfig model;
  LossToggles toggles;
  AdamWConfig optimizer;
  std::uint64_t seed = 0;
  bool strict = true;   // omit wall-clock from the log so it is bit-reproducible
  bool flip = false;    // random horizontal flips
  std::size_t cache_images = 4096;
  std::int64_t max_steps = 0;  // stop early after this many total steps (0 = run every stage)
  std::filesystem::path log_path;       // JSON lines; empty disables
  std::filesystem::path snapshot_dir;   // per-stage vision exports; empty disables
  std::string config_text;              // embedded in snapshots

  std::function<void(const StepRecord&, const TrainState&)> on_step;
  std::function<void(int stage, const TrainState&)> on_stage_start;
  std::function<void(int stage, const TrainState&)> on_stage_end;
};

// Fresh state: parameters from init_params(two_tower_param_specs(model), seed).
TrainState initial_state(const ModelConfig& model, std::uint64_t seed);

// Runs the stages from the state's (stage_index, stage_samples) position.
// Every stage consumes exactly its sample budget. Data wraps around with a
// fresh permutation per epoch.
TrainState run_curriculum(const TrainerOptions& options, const std::vector<StageSchedule>& stages,
                          std::span<const CaptionedImage> data, TrainState state);

inline const std::vector<std::string> kVisionPrefixes = {"vision/"};

// Vision tower parameters only, with the vision config embedded as text.
Checkpoint export_vision(const ParameterStore<float>& params, const VisionConfig& config);
void export_vision(const ParameterStore<float>& params, const VisionConfig& config,
                   const std::filesystem::path& path);

struct VisionBackbone {
  VisionConfig config;
  ParameterStore<float> params;
};
VisionBackbone load_vision(const std::filesystem::path& path);
VisionBackbone vision_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace openvision
