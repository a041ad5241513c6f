#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "openvision/checkpoint.hpp"
#include "openvision/probe.hpp"
#include "openvision/trainer.hpp"
#include "support.hpp"

namespace openvision {
namespace {

using testing::random_tensor;
using testing::throws_kind;
namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("openvision_trainer_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<nlohmann::json> read_log(const fs::path& path) {
  std::vector<nlohmann::json> out;
  std::ifstream in(path);
  for (std::string line; std::getline(in, line);) {
    out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

TEST(LrSchedule, WarmupEndpointIsBaseLr) {
  StageSchedule s{.resolution = 64, .samples = 1000, .batch = 10, .base_lr = 3e-4, .warmup_samples = 20};
  EXPECT_EQ(lr_at(s, 20), 3e-4);
  EXPECT_EQ(lr_at(s, 0), 0.0);
  EXPECT_DOUBLE_EQ(lr_at(s, 10), 1.5e-4);
}

TEST(LrSchedule, EndIsZeroAndMidpointIsHalf) {
  StageSchedule s{.resolution = 64, .samples = 1020, .batch = 10, .base_lr = 2e-3, .warmup_samples = 20};
  EXPECT_EQ(lr_at(s, 1020), 0.0);
  EXPECT_NEAR(lr_at(s, 520), 1e-3, 1e-12);
}

TEST(LrSchedule, MonotoneAfterWarmupAndBounded) {
  StageSchedule s{.resolution = 64, .samples = 640, .batch = 32, .base_lr = 1e-3, .warmup_samples = 64};
  double prev = lr_at(s, 64);
  for (std::int64_t k = 65; k <= 640; ++k) {
    const double lr = lr_at(s, k);
    EXPECT_LE(lr, prev);
    EXPECT_GE(lr, 0.0);
    prev = lr;
  }
}

TEST(LrSchedule, OutOfRangeIsContractError) {
  StageSchedule s{.resolution = 64, .samples = 100, .batch = 10, .base_lr = 1e-3, .warmup_samples = 0};
  EXPECT_TRUE(throws_kind([&] { lr_at(s, -1); }, ErrorKind::contract));
  EXPECT_TRUE(throws_kind([&] { lr_at(s, 101); }, ErrorKind::contract));
}

TEST(LrSchedule, WithWarmupRoundsDown) {
  const auto stages = with_warmup({{.resolution = 64, .samples = 12800, .batch = 32, .base_lr = 1e-3},
                                   {.resolution = 96, .samples = 1000, .batch = 8, .base_lr = 1e-3}},
                                  0.02);
  EXPECT_EQ(stages[0].warmup_samples, 256);
  EXPECT_EQ(stages[1].warmup_samples, 20);
}

TEST(StageValidation, RejectsBadBudgets) {
  EXPECT_TRUE(throws_kind([] { StageSchedule{.resolution = 60, .samples = 64, .batch = 32}.validate(16); },
                          ErrorKind::config));
  EXPECT_TRUE(throws_kind([] { StageSchedule{.resolution = 64, .samples = 70, .batch = 32}.validate(16); },
                          ErrorKind::config));
  EXPECT_TRUE(throws_kind(
      [] { StageSchedule{.resolution = 64, .samples = 64, .batch = 32, .warmup_samples = 64}.validate(16); },
      ErrorKind::config));
  EXPECT_NO_THROW((StageSchedule{.resolution = 64, .samples = 64, .batch = 32}.validate(16)));
}

ParameterStore<float> random_store(std::uint64_t seed) {
  ParameterStore<float> p;
  p.add("a/w", random_tensor<float>({4, 3}, seed), true);
  p.add("a/b", random_tensor<float>({3}, seed + 1), false);
  p.add("z/w", random_tensor<float>({2, 2}, seed + 2), true);
  return p;
}

TEST(AdamW, ZeroGradientsWithoutDecayLeaveParametersUnchanged) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto p = random_store(seed);
    const auto before = p.hash();
    for (auto& [name, q] : p) {
      q.grad = Tensor<float>(q.value.shape());
    }
    OptimizerState state;
    AdamWConfig config;
    config.weight_decay = 0.0;
    for (int i = 0; i < 3; ++i) {
      adamw_step(p, state, config, 1e-2);
    }
    EXPECT_EQ(p.hash(), before);
  }
}

TEST(AdamW, DecayOnlyTouchesFlaggedTensors) {
  auto p = random_store(3);
  const auto bias = p.value("a/b");
  const auto weight = p.value("a/w");
  OptimizerState state;
  adamw_step(p, state, AdamWConfig{}, 0.1);
  EXPECT_EQ(p.value("a/b"), bias);
  for (std::int64_t i = 0; i < weight.size(); ++i) {
    EXPECT_FLOAT_EQ(p.value("a/w")[i], weight[i] - 0.1f * 0.2f * weight[i]);
  }
}

// Reference update in double for a single tensor.
TEST(AdamW, MatchesReferenceUpdate) {
  ParameterStore<float> p;
  p.add("w", random_tensor<float>({5}, 1), true);
  std::vector<double> w(p.value("w").data().begin(), p.value("w").data().end());
  std::vector<double> m(5, 0.0), v(5, 0.0);
  AdamWConfig config;
  config.clip_norm = 0.0;
  OptimizerState state;
  for (int step = 1; step <= 4; ++step) {
    const auto g = random_tensor<float>({5}, 100 + step, 0.1);
    p.at("w").grad = g;
    adamw_step(p, state, config, 1e-2);
    for (int i = 0; i < 5; ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.95 * v[i] + 0.05 * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.95, step));
      w[i] -= 1e-2 * mh / (std::sqrt(vh) + 1e-8) + 1e-2 * 0.2 * w[i];
    }
  }
  for (int i = 0; i < 5; ++i) {
    EXPECT_NEAR(p.value("w")[i], w[i], 1e-5);
  }
}

TEST(AdamW, ClipsByGlobalNorm) {
  ParameterStore<float> p;
  p.add("w", Tensor<float>({2}), false);
  p.at("w").grad = Tensor<float>({2}, std::vector<float>{3.0f, 4.0f});
  OptimizerState state;
  const auto stats = adamw_step(p, state, AdamWConfig{}, 1e-3);
  EXPECT_DOUBLE_EQ(stats.grad_norm, 5.0);
  EXPECT_DOUBLE_EQ(stats.clip_scale, 0.2);
}

TEST(AdamW, ZeroMultiplierFreezes) {
  auto p = random_store(4);
  for (auto& [name, q] : p) {
    q.grad = random_tensor<float>(q.value.shape(), 9);
  }
  const auto frozen = p.hash("z/");
  const auto moving = p.hash("a/");
  OptimizerState state;
  adamw_step(p, state, AdamWConfig{}, 1e-2,
             [](std::string_view name) { return starts_with(name, "z/") ? 0.0 : 1.0; });
  EXPECT_EQ(p.hash("z/"), frozen);
  EXPECT_NE(p.hash("a/"), moving);
}

class CurriculumTest : public ::testing::Test {
 protected:
  ModelConfig model = ModelConfig::preset("micro");
  std::vector<CaptionedImage> data = gen_probe_dataset(5, 12, 64);
  std::vector<StageSchedule> stages =
      with_warmup({{.resolution = 32, .samples = 24, .batch = 4, .base_lr = 1e-3},
                   {.resolution = 48, .samples = 8, .batch = 4, .base_lr = 5e-4},
                   {.resolution = 64, .samples = 4, .batch = 2, .base_lr = 1e-4}},
                  0.25);

  TrainerOptions options(const fs::path& dir) const {
    TrainerOptions o;
    o.model = model;
    o.seed = 3;
    o.log_path = dir / "log.jsonl";
    return o;
  }
};

TEST_F(CurriculumTest, StagesConsumeExactBudgetsAndCarryWeights) {
  const auto dir = temp_dir("budget");
  auto o = options(dir);
  std::vector<std::uint64_t> end_hash, start_hash;
  std::vector<std::int64_t> steps_per_stage(stages.size(), 0);
  o.on_step = [&](const StepRecord& r, const TrainState&) { steps_per_stage[r.stage] += 1; };
  o.on_stage_start = [&](int, const TrainState& s) { start_hash.push_back(s.params.hash()); };
  o.on_stage_end = [&](int, const TrainState& s) { end_hash.push_back(s.params.hash()); };
  const auto state = run_curriculum(o, stages, data, initial_state(model, 3));
  for (std::size_t i = 0; i < stages.size(); ++i) {
    EXPECT_EQ(steps_per_stage[i], stages[i].samples / stages[i].batch);
  }
  ASSERT_EQ(start_hash.size(), 3u);
  ASSERT_EQ(end_hash.size(), 3u);
  EXPECT_EQ(end_hash[0], start_hash[1]);
  EXPECT_EQ(end_hash[1], start_hash[2]);
  EXPECT_EQ(state.step, 6 + 2 + 2);

  int boundaries = 0;
  for (const auto& rec : read_log(o.log_path)) {
    if (rec.value("event", "") == "stage_start") {
      const int res = rec["resolution"];
      EXPECT_EQ(rec["pe_rows"].get<int>(), (res / 16) * (res / 16));
      ++boundaries;
    }
    if (rec.contains("lr")) {
      const auto& s = stages[rec["stage"].get<int>()];
      const auto before = rec["samples_seen"].get<std::int64_t>() - s.batch;
      EXPECT_NEAR(rec["lr"].get<double>(), lr_at(s, before), 1e-9);
    }
  }
  EXPECT_EQ(boundaries, 3);
}

TEST_F(CurriculumTest, SingleStageHasOneStart) {
  const auto dir = temp_dir("single");
  auto o = options(dir);
  run_curriculum(o, {stages[0]}, data, initial_state(model, 3));
  int starts = 0;
  for (const auto& rec : read_log(o.log_path)) {
    starts += rec.value("event", "") == "stage_start" ? 1 : 0;
  }
  EXPECT_EQ(starts, 1);
}

TEST_F(CurriculumTest, DataWrapsWithLoggedEpochs) {
  const auto dir = temp_dir("wrap");
  auto o = options(dir);
  std::vector<CaptionedImage> few(data.begin(), data.begin() + 4);
  const auto state = run_curriculum(o, {stages[0]}, few, initial_state(model, 3));
  EXPECT_EQ(state.epoch, 5);
  int wraps = 0;
  for (const auto& rec : read_log(o.log_path)) {
    wraps += rec.value("event", "") == "epoch_wrap" ? 1 : 0;
  }
  EXPECT_EQ(wraps, 5);
}

TEST_F(CurriculumTest, StrictLogsAreBitIdenticalAndOmitWallClock) {
  const auto a = temp_dir("strict_a");
  const auto b = temp_dir("strict_b");
  run_curriculum(options(a), stages, data, initial_state(model, 3));
  run_curriculum(options(b), stages, data, initial_state(model, 3));
  const auto text = read_text(a / "log.jsonl");
  EXPECT_FALSE(text.empty());
  EXPECT_EQ(text, read_text(b / "log.jsonl"));
  EXPECT_EQ(text.find("wall_ms"), std::string::npos);

  const auto c = temp_dir("loose");
  auto o = options(c);
  o.strict = false;
  run_curriculum(o, {stages[0]}, data, initial_state(model, 3));
  EXPECT_NE(read_text(c / "log.jsonl").find("wall_ms"), std::string::npos);
}

TEST_F(CurriculumTest, ResumeIsBitExact) {
  const auto full_dir = temp_dir("resume_full");
  const auto full = run_curriculum(options(full_dir), stages, data, initial_state(model, 3));

  const auto part_dir = temp_dir("resume_part");
  auto o = options(part_dir);
  o.max_steps = 7;  // stops inside the second stage
  const auto half = run_curriculum(o, stages, data, initial_state(model, 3));
  EXPECT_EQ(half.step, 7);
  save_state(part_dir / "state.ovck", half);
  o.max_steps = 0;
  const auto resumed = run_curriculum(o, stages, data, load_state(part_dir / "state.ovck"));

  EXPECT_EQ(resumed.params.hash(), full.params.hash());
  EXPECT_EQ(resumed.step, full.step);
  auto strip = [](std::vector<nlohmann::json> log) {
    std::vector<nlohmann::json> steps;
    for (auto& r : log) {
      if (r.contains("step") && !r.contains("event")) {
        steps.push_back(r);
      }
    }
    return steps;
  };
  EXPECT_EQ(strip(read_log(part_dir / "log.jsonl")), strip(read_log(full_dir / "log.jsonl")));
}

TEST_F(CurriculumTest, StateCheckpointRoundTrip) {
  auto o = options(temp_dir("state"));
  o.max_steps = 3;
  const auto s = run_curriculum(o, stages, data, initial_state(model, 3));
  const auto back = state_from_checkpoint(parse_checkpoint(serialize_checkpoint(state_to_checkpoint(s))));
  EXPECT_EQ(back.params.hash(), s.params.hash());
  EXPECT_EQ(back.step, s.step);
  EXPECT_EQ(back.stage_index, s.stage_index);
  EXPECT_EQ(back.stage_samples, s.stage_samples);
  EXPECT_EQ(back.cursor, s.cursor);
  EXPECT_EQ(back.epoch, s.epoch);
  EXPECT_EQ(back.optimizer.steps, s.optimizer.steps);
  ASSERT_EQ(back.optimizer.moments.size(), s.optimizer.moments.size());
  for (const auto& [name, m] : s.optimizer.moments) {
    EXPECT_EQ(back.optimizer.moments.at(name).m, m.m);
    EXPECT_EQ(back.optimizer.moments.at(name).v, m.v);
  }
}

TEST_F(CurriculumTest, SnapshotsPerStage) {
  const auto dir = temp_dir("snap");
  auto o = options(dir);
  o.snapshot_dir = dir / "snapshots";
  run_curriculum(o, stages, data, initial_state(model, 3));
  std::vector<VisionBackbone> snaps;
  for (int i = 0; i < 3; ++i) {
    const auto path = o.snapshot_dir / ("stage_" + std::to_string(i) + ".ovck");
    ASSERT_TRUE(fs::exists(path));
    snaps.push_back(load_vision(path));
    EXPECT_EQ(snaps.back().config.resolution, stages[i].resolution);
  }
  for (int i = 0; i < 3; ++i) {
    for (int j = i + 1; j < 3; ++j) {
      EXPECT_NE(snaps[i].params.hash(), snaps[j].params.hash());
    }
  }
}

TEST(Export, VisionOnlyAndEquivalent) {
  const auto model = ModelConfig::preset("micro");
  const auto state = initial_state(model, 8);
  const auto ck = export_vision(state.params, model.vision);
  for (const auto& [name, p] : ck.params) {
    EXPECT_TRUE(starts_with(name, "vision/")) << name;
  }
  EXPECT_EQ(ck.params.size(), state.params.subset(kVisionPrefixes).size());
  EXPECT_LT(serialize_checkpoint(ck).size(), serialize_checkpoint(state_to_checkpoint(state)).size());

  const auto dir = temp_dir("export");
  export_vision(state.params, model.vision, dir / "v.ovck");
  const auto loaded = load_vision(dir / "v.ovck");
  EXPECT_EQ(loaded.config, model.vision);
  const auto batch = testing::probe_batch<float>(8, 32, 2);
  const auto a = vision_forward(state.params, model.vision, batch.images).pooled;
  const auto b = vision_forward(loaded.params, loaded.config, batch.images).pooled;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-6);
  }
}

TEST(Export, MissingTensorIsConfigError) {
  const auto model = ModelConfig::preset("micro");
  auto ck = export_vision(initial_state(model, 1).params, model.vision);
  ParameterStore<float> partial;
  for (const auto& [name, p] : ck.params) {
    if (name != "vision/cls") {
      partial.add(name, p.value, p.decay);
    }
  }
  ck.params = partial;
  EXPECT_TRUE(throws_kind([&] { vision_from_checkpoint(ck); }, ErrorKind::config));
}

}  // namespace
}  // namespace openvision
