#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "openvision/mllm.hpp"
#include "openvision/model_config.hpp"
#include "openvision/objectives.hpp"
#include "openvision/trainer.hpp"

namespace openvision {

// INI text -> {"section.key": value}. Keys outside any section are rejected.
std::map<std::string, std::string> parse_flat_ini(std::string_view text);

std::string vision_config_to_ini(const VisionConfig& config);
VisionConfig vision_config_from_ini(std::string_view text);

struct DataConfig {
  std::string train;  // shard file, or a directory of shards / image+caption files; empty = generate
  std::string eval;
  int generate_n = 256;
  std::uint64_t generate_seed = 7;
  int generate_resolution = 128;
  bool stratified = false;
  bool flip = false;
  std::int64_t cache_images = 4096;

  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct FinetuneConfig {
  TuneMode mode = TuneMode::frozen_encoder;
  TuneMultipliers multipliers;
  std::string vision_checkpoint;  // exported backbone; empty initializes from the seed
  std::string lm_checkpoint;      // optional container with lm/ tensors
  int projector_hidden = 128;
  Activation projector_activation = Activation::gelu;
  LmConfig lm;
  bool anyres = false;
  int max_tiles = 4;
  int resolution = 0;  // encoder input side during finetuning; 0 keeps the backbone's
  std::vector<FinetuneStage> stages;

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

struct EvalConfig {
  std::string checkpoint;  // full training state or exported weights
  std::vector<std::string> templates = {"a {}", "a photo of a {}"};
  std::vector<int> ks = {1, 5, 10};
  std::string dataset_id = "probe";

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct RunConfig {
  std::string name = "run";
  std::uint64_t seed = 0;
  std::string output_dir = "runs";
  bool strict = true;
  int workers = 1;
  std::int64_t max_steps = 0;

  std::string model_preset = "micro";
  ModelConfig model = ModelConfig::preset("micro");
  std::vector<StageSchedule> stages;
  LossToggles loss;
  AdamWConfig optim;
  double warmup_fraction = 0.02;
  DataConfig data;
  FinetuneConfig finetune;
  EvalConfig eval;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Parses INI text, then applies "section.key=value" overrides in order (last wins).
// Every unknown key and invalid value is reported in one config error.
RunConfig parse_run_config(std::string_view text, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::vector<std::string>& overrides = {});
std::string serialize_run_config(const RunConfig& config);

// Named experiment setups. Most expand to one run; comparison presets
// ("ablation-fig2", "patch-pair", "finetune-pair") expand to several runs
// that differ only in the compared setting.
std::vector<RunConfig> experiment_preset(std::string_view name);
std::vector<std::string> experiment_preset_names();

// Records named by data.train (or data.eval when `eval` is set and non-empty);
// generated probe data when the path is empty.
std::vector<CaptionedImage> load_run_records(const RunConfig& config, bool eval = false);
TrainerOptions trainer_options(const RunConfig& config);
// Vision config at the last stage's resolution.
VisionConfig final_vision(const RunConfig& config);
// finetune.resolution, when set, replaces the backbone resolution.
MllmConfig mllm_config(const RunConfig& config, const VisionConfig& vision);

// Desk curriculum: 64/96/128 px with a 50:4:1 sample split and 4:2:1 batches.
std::vector<StageSchedule> desk_curriculum();

}  // namespace openvision
