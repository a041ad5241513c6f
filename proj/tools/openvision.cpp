#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "openvision/config.hpp"
#include "openvision/eval.hpp"
#include "openvision/grad_check.hpp"
#include "openvision/mllm.hpp"
#include "openvision/objectives.hpp"
#include "openvision/probe.hpp"
#include "openvision/shard.hpp"
#include "openvision/trainer.hpp"

namespace fs = std::filesystem;
using namespace openvision;

namespace {

struct ConfigArgs {
  std::string config;
  std::string preset;
  std::vector<std::string> overrides;
  std::string output;
};

void add_config_args(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("-c,--config", args.config, "INI run config");
  cmd->add_option("-p,--preset", args.preset, "named experiment preset");
  cmd->add_option("-s,--set", args.overrides, "section.key=value override, applied in order (last wins)");
  cmd->add_option("-o,--output", args.output, "output directory (overrides run.output_dir)");
}

// Output root: --output, else OPENVISION_OUTPUT_DIR, else run.output_dir.
fs::path output_root(const ConfigArgs& args, const RunConfig& config) {
  if (!args.output.empty()) {
    return args.output;
  }
  if (const char* env = std::getenv("OPENVISION_OUTPUT_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return config.output_dir;
}

std::vector<RunConfig> resolve_configs(const ConfigArgs& args) {
  if (!args.config.empty()) {
    require(args.preset.empty(), ErrorKind::config, "use either --config or --preset, not both");
    return {load_run_config(args.config, args.overrides)};
  }
  require(!args.preset.empty(), ErrorKind::config, "a --config file or --preset is required");
  std::vector<RunConfig> out;
  for (const auto& base : experiment_preset(args.preset)) {
    // Round trip through text so overrides go through the same validation as files.
    out.push_back(parse_run_config(serialize_run_config(base), args.overrides));
  }
  return out;
}

fs::path prepare_run_dir(const ConfigArgs& args, const RunConfig& config) {
  const fs::path dir = output_root(args, config) / config.name;
  fs::create_directories(dir);
  std::ofstream out(dir / "config.ini", std::ios::binary);
  require(out.good(), ErrorKind::io, "cannot write " + (dir / "config.ini").string());
  out << serialize_run_config(config);
  return dir;
}

// config.ini next to a checkpoint, unless --config/--preset was given.
RunConfig config_for_checkpoint(const ConfigArgs& args, const fs::path& checkpoint) {
  if (!args.config.empty() || !args.preset.empty()) {
    auto configs = resolve_configs(args);
    require(configs.size() == 1, ErrorKind::config, "preset expands to several runs; pass --config");
    return configs.front();
  }
  const auto sibling = checkpoint.parent_path() / "config.ini";
  require(fs::exists(sibling), ErrorKind::config,
          "no --config given and no config.ini next to " + checkpoint.string());
  return load_run_config(sibling, args.overrides);
}

int cmd_train(const ConfigArgs& args, const std::string& resume, std::int64_t checkpoint_every) {
  for (const auto& config : resolve_configs(args)) {
    const fs::path dir = prepare_run_dir(args, config);
    const auto records = load_run_records(config);
    TrainerOptions options = trainer_options(config);
    options.log_path = dir / "train_log.jsonl";
    options.snapshot_dir = dir / "snapshots";
    TrainState state;
    if (!resume.empty()) {
      state = load_state(resume);
    } else {
      fs::remove(options.log_path);
      state = initial_state(config.model, config.seed);
    }
    if (checkpoint_every > 0) {
      options.on_step = [&](const StepRecord& rec, const TrainState& s) {
        if (rec.step % checkpoint_every == 0) {
          save_state(dir / "state.ovck", s);
        }
      };
    }
    std::cout << "train " << config.name << ": " << records.size() << " records, "
              << config.stages.size() << " stages -> " << dir.string() << std::endl;
    state = run_curriculum(options, config.stages, records, state);
    save_state(dir / "state.ovck", state);
    export_vision(state.params, final_vision(config), dir / "vision.ovck");
    std::cout << "done at step " << state.step << std::endl;
  }
  return 0;
}

std::vector<VqaExample> stage_examples(const RunConfig& config, const FinetuneStage& stage,
                                       int resolution) {
  if (!stage.data.empty()) {
    return load_vqa_examples(stage.data);
  }
  auto data = config.data;
  data.generate_resolution = resolution;
  RunConfig copy = config;
  copy.data = data;
  return probe_vqa_examples(load_run_records(copy));
}

int cmd_finetune(const ConfigArgs& args, const std::string& vision_path) {
  for (const auto& config : resolve_configs(args)) {
    const fs::path dir = prepare_run_dir(args, config);
    const std::string source = !vision_path.empty() ? vision_path : config.finetune.vision_checkpoint;
    VisionBackbone backbone;
    if (source.empty()) {
      backbone.config = final_vision(config);
      backbone.params = init_params<float>(vision_param_specs(backbone.config), config.seed);
    } else {
      backbone = load_vision(source);
    }
    const MllmConfig mllm = mllm_config(config, backbone.config);
    auto weights = init_mllm(mllm, backbone.params, config.seed);
    if (!config.finetune.lm_checkpoint.empty()) {
      weights.merge(load_checkpoint(config.finetune.lm_checkpoint).params.subset({"lm/"}));
    }
    require(!config.finetune.stages.empty(), ErrorKind::config, "no [ft_stage.N] sections");
    std::vector<std::vector<VqaExample>> data;
    for (const auto& stage : config.finetune.stages) {
      data.push_back(stage_examples(config, stage, backbone.config.resolution));
    }
    FinetuneOptions options;
    options.mode = config.finetune.mode;
    options.multipliers = config.finetune.multipliers;
    options.optimizer = config.optim;
    options.seed = config.seed;
    options.strict = config.strict;
    options.log_path = dir / "finetune_log.jsonl";
    fs::remove(options.log_path);
    const auto vision_hash = weights.hash("vision/");
    finetune(options, mllm, config.finetune.stages, data, weights);

    Checkpoint ck;
    ck.config_text = serialize_run_config(config);
    ck.params = weights;
    save_checkpoint(dir / "mllm.ovck", ck);

    const auto& last = data.back();
    std::vector<std::string> predictions;
    std::vector<std::string> answers;
    for (const auto& ex : last) {
      predictions.push_back(generate_answer(weights, mllm, ex.image, ex.question));
      answers.push_back(ex.answer);
    }
    EvalReport report;
    report.dataset_id = config.finetune.stages.back().data.empty() ? "probe-vqa"
                                                                    : config.finetune.stages.back().data;
    report.checkpoint_hash = hash_hex(weights.hash());
    report.metrics.push_back({"vqa_exact_match", vqa_exact_match(predictions, answers)});
    report.metrics.push_back(
        {"vision_unchanged", weights.hash("vision/") == vision_hash ? 1.0 : 0.0});
    write_report(dir / "finetune_report.jsonl", report);
    std::cout << render_table(report);
  }
  return 0;
}

int cmd_eval(const ConfigArgs& args, std::string checkpoint) {
  auto config = config_for_checkpoint(args, checkpoint.empty() ? fs::path(".") : fs::path(checkpoint));
  if (checkpoint.empty()) {
    checkpoint = config.eval.checkpoint;
  }
  require(!checkpoint.empty(), ErrorKind::config, "no checkpoint given (--checkpoint or eval.checkpoint)");
  const auto state = load_state(checkpoint);
  ModelConfig model = config.model;
  model.vision = final_vision(config);
  const auto records = load_run_records(config, true);
  const auto report =
      evaluate_two_tower(state.params, model, records, config.eval.templates, config.eval.ks,
                         config.eval.dataset_id);
  const fs::path dir = output_root(args, config) / config.name;
  write_report(dir / "eval_report.jsonl", report);
  std::cout << render_table(report);
  return 0;
}

int cmd_export(const ConfigArgs& args, const std::string& checkpoint, std::string out) {
  const auto config = config_for_checkpoint(args, checkpoint);
  const auto state = load_state(checkpoint);
  if (out.empty()) {
    out = (fs::path(checkpoint).parent_path() / "vision.ovck").string();
  }
  export_vision(state.params, final_vision(config), out);
  std::cout << "exported " << state.params.subset(kVisionPrefixes).size() << " vision tensors to "
            << out << std::endl;
  return 0;
}

int cmd_gradcheck(const ConfigArgs& args, int batch, std::int64_t probes, double step,
                  std::uint64_t seed) {
  ModelConfig model = ModelConfig::preset("micro");
  LossToggles toggles;
  if (!args.config.empty() || !args.preset.empty()) {
    const auto configs = resolve_configs(args);
    model = configs.front().model;
    toggles = configs.front().loss;
  }
  GradCheckOptions options;
  options.probes_per_tensor = probes;
  options.step = step;
  options.seed = seed;
  const auto report = two_tower_grad_check(model, toggles, batch, seed, options);
  std::cout << report.to_string();
  return report.pass ? 0 : exit_code(ErrorKind::numeric);
}

int cmd_gendata(std::uint64_t seed, int n, int resolution, bool stratified, const std::string& out,
                const std::string& vqa_dir) {
  ProbeOptions options;
  options.stratified = stratified;
  const auto records = gen_probe_dataset(seed, n, resolution, options);
  if (fs::path(out).has_parent_path()) {
    fs::create_directories(fs::path(out).parent_path());
  }
  write_shard(out, records);
  if (!vqa_dir.empty()) {
    write_probe_vqa(vqa_dir, records);
  }
  std::cout << "wrote " << records.size() << " records to " << out << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"openvision: two-tower vision-language training at desk scale"};
  app.require_subcommand(1);

  ConfigArgs args;
  std::string resume;
  std::int64_t checkpoint_every = 0;
  auto* train = app.add_subcommand("train", "run the resolution curriculum");
  add_config_args(train, args);
  train->add_option("--resume", resume, "training state checkpoint to resume from");
  train->add_option("--checkpoint-every", checkpoint_every, "save state.ovck every N steps");

  std::string vision;
  auto* ft = app.add_subcommand("finetune", "attach projector + LM and finetune on VQA");
  add_config_args(ft, args);
  ft->add_option("--vision", vision, "exported vision backbone (overrides finetune.vision_checkpoint)");

  std::string checkpoint;
  auto* ev = app.add_subcommand("eval", "retrieval and zero-shot evaluation");
  add_config_args(ev, args);
  ev->add_option("--checkpoint", checkpoint, "training state checkpoint");

  std::string export_out;
  auto* ex = app.add_subcommand("export", "write the vision backbone of a training state");
  add_config_args(ex, args);
  ex->add_option("checkpoint", checkpoint, "training state checkpoint")->required();
  ex->add_option("--out", export_out, "output path (default: vision.ovck next to the checkpoint)");

  int gc_batch = 4;
  std::int64_t gc_probes = 16;
  double gc_step = GradCheckOptions{}.step;
  std::uint64_t gc_seed = 0;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of the training loss");
  add_config_args(gc, args);
  gc->add_option("--batch", gc_batch, "images per batch");
  gc->add_option("--probes", gc_probes, "coordinates per tensor (<= 0 checks all)");
  gc->add_option("--step", gc_step, "central-difference step");
  gc->add_option("--seed", gc_seed, "initialization and probe seed");

  std::uint64_t gen_seed = 7;
  int gen_n = 256;
  int gen_res = 128;
  bool gen_stratified = false;
  std::string gen_out = "probe.ovsh";
  std::string gen_vqa;
  auto* gen = app.add_subcommand("gendata", "generate the synthetic probe dataset");
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("-n,--count", gen_n, "number of records");
  gen->add_option("--resolution", gen_res, "image side in pixels");
  gen->add_flag("--stratified", gen_stratified, "single-shape records cycling through all classes");
  gen->add_option("--out", gen_out, "shard path");
  gen->add_option("--vqa-dir", gen_vqa, "also write images + vqa.jsonl here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : exit_code(ErrorKind::config);
  }

  try {
    if (*train) {
      return cmd_train(args, resume, checkpoint_every);
    }
    if (*ft) {
      return cmd_finetune(args, vision);
    }
    if (*ev) {
      return cmd_eval(args, checkpoint);
    }
    if (*ex) {
      return cmd_export(args, checkpoint, export_out);
    }
    if (*gc) {
      return cmd_gradcheck(args, gc_batch, gc_probes, gc_step, gc_seed);
    }
    if (*gen) {
      return cmd_gendata(gen_seed, gen_n, gen_res, gen_stratified, gen_out, gen_vqa);
    }
  } catch (const Error& e) {
    std::cerr << e.what() << std::endl;
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 1;
  }
  return 0;
}
