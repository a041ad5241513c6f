#include "openvision/config.hpp"
#include "support.hpp"

namespace openvision {
namespace {

using testing::throws_kind;

std::string error_text(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::config);
    return e.what();
  }
  ADD_FAILURE() << "no error";
  return "";
}

constexpr const char* kSmall = R"(
[run]
name = small
seed = 4

[model]
preset = micro

[stage.0]
resolution = 32
samples = 64
batch = 8
lr = 1e-3

[stage.1]
resolution = 48
samples = 16
batch = 4
lr = 5e-4
warmup = 4
)";

TEST(Ini, FlatKeysAndSectionlessRejection) {
  const auto m = parse_flat_ini("[a]\nx = 1\n[b]\ny = two\n");
  EXPECT_EQ(m.at("a.x"), "1");
  EXPECT_EQ(m.at("b.y"), "two");
  EXPECT_TRUE(throws_kind([] { parse_flat_ini("x = 1\n"); }, ErrorKind::config));
}

TEST(RunConfigParse, ReadsStagesAndDefaultsWarmup) {
  const auto c = parse_run_config(kSmall);
  EXPECT_EQ(c.name, "small");
  EXPECT_EQ(c.seed, 4u);
  ASSERT_EQ(c.stages.size(), 2u);
  EXPECT_EQ(c.stages[0].warmup_samples, 1);  // 0.02 * 64, rounded down
  EXPECT_EQ(c.stages[1].warmup_samples, 4);
  EXPECT_EQ(c.model.vision.width, 32);
}

TEST(RunConfigParse, SerializeRoundTrip) {
  for (const auto& name : experiment_preset_names()) {
    for (const auto& c : experiment_preset(name)) {
      const auto text = serialize_run_config(c);
      EXPECT_EQ(parse_run_config(text), c) << name << "\n" << text;
      EXPECT_EQ(serialize_run_config(parse_run_config(text)), text);
    }
  }
}

TEST(RunConfigParse, UnknownKeysAreAllListed) {
  const auto msg = error_text([] {
    parse_run_config(std::string(kSmall) + "\n[loss]\nlambda_captoin = 2\n[optim]\nbeta3 = 0.9\n");
  });
  EXPECT_NE(msg.find("loss.lambda_captoin"), std::string::npos) << msg;
  EXPECT_NE(msg.find("optim.beta3"), std::string::npos) << msg;
}

TEST(RunConfigParse, BadValuesAreConfigErrors) {
  EXPECT_TRUE(throws_kind([] { parse_run_config(kSmall, {"run.seed=abc"}); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([] { parse_run_config(kSmall, {"stage.1.samples=17"}); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([] { parse_run_config(kSmall, {"loss.caption_source=mixed"}); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([] { parse_run_config(kSmall, {"stage.3.samples=8"}); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([] { parse_run_config(kSmall, {"noequals"}); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([] { parse_run_config(kSmall, {"model.preset=gigantic"}); }, ErrorKind::config));
}

TEST(RunConfigParse, OverridesApplyInOrder) {
  const auto c = parse_run_config(kSmall, {"run.seed=9", "loss.use_decoder=false", "run.seed=11"});
  EXPECT_EQ(c.seed, 11u);
  EXPECT_FALSE(c.loss.use_decoder);
}

TEST(RunConfigParse, ExplicitVisionKeysOverridePreset) {
  const auto c = parse_run_config(kSmall, {"vision.patch=8"});
  EXPECT_EQ(c.model.vision.patch, 8);
  EXPECT_EQ(c.model.vision.width, 32);
}

TEST(VisionIni, RoundTrip) {
  for (const auto& name : {"tiny", "small", "base", "micro-probe"}) {
    const auto v = ModelConfig::preset(name).vision;
    EXPECT_EQ(vision_config_from_ini(vision_config_to_ini(v)), v) << name;
  }
}

TEST(Presets, AllValid) {
  for (const auto& name : experiment_preset_names()) {
    const auto runs = experiment_preset(name);
    ASSERT_FALSE(runs.empty()) << name;
    for (const auto& c : runs) {
      EXPECT_NO_THROW(c.validate()) << name;
    }
  }
  EXPECT_TRUE(throws_kind([] { experiment_preset("nope"); }, ErrorKind::config));
}

TEST(Presets, AblationTrioDiffersOnlyInToggles) {
  const auto runs = experiment_preset("ablation-fig2");
  ASSERT_EQ(runs.size(), 3u);
  EXPECT_TRUE(runs[0].loss.use_decoder);
  EXPECT_EQ(runs[0].loss.caption_source, CaptionSource::both);
  EXPECT_FALSE(runs[1].loss.use_decoder);
  EXPECT_EQ(runs[2].loss.caption_source, CaptionSource::original);
  for (auto c : runs) {
    c.loss = runs[0].loss;
    c.name = runs[0].name;
    EXPECT_EQ(c, runs[0]);
  }
}

TEST(Presets, PatchPairDiffersOnlyInPatch) {
  const auto runs = experiment_preset("patch-pair");
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].model.vision.patch, 8);
  EXPECT_EQ(runs[1].model.vision.patch, 16);
  auto c = runs[1];
  c.model.vision.patch = 8;
  c.name = runs[0].name;
  EXPECT_EQ(c, runs[0]);
}

TEST(Presets, FinetunePairDiffersOnlyInMode) {
  const auto runs = experiment_preset("finetune-pair");
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[0].finetune.mode, TuneMode::frozen_encoder);
  EXPECT_EQ(runs[1].finetune.mode, TuneMode::full_finetune);
  auto c = runs[1];
  c.finetune.mode = runs[0].finetune.mode;
  c.name = runs[0].name;
  EXPECT_EQ(c, runs[0]);
}

TEST(Presets, DeskCurriculumKeepsRatios) {
  const auto s = desk_curriculum();
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[0].samples, 50 * s[2].samples);
  EXPECT_EQ(s[1].samples, 4 * s[2].samples);
  EXPECT_EQ(s[0].batch, 4 * s[2].batch);
  EXPECT_EQ(s[1].batch, 2 * s[2].batch);
  EXPECT_EQ(s[0].resolution, 64);
  EXPECT_EQ(s[1].resolution, 96);
  EXPECT_EQ(s[2].resolution, 128);
}

TEST(Presets, PaperCurriculumBudgets) {
  const auto c = experiment_preset("paper-curriculum").at(0);
  ASSERT_EQ(c.stages.size(), 3u);
  EXPECT_EQ(c.stages[0].resolution, 84);
  EXPECT_EQ(c.stages[1].resolution, 224);
  EXPECT_EQ(c.stages[2].resolution, 336);
  EXPECT_EQ(c.stages[0].samples, 12'800'000'000);
  EXPECT_EQ(c.stages[1].samples, 1'024'000'000);
  EXPECT_EQ(c.stages[2].samples, 256'000'000);
  EXPECT_EQ(c.stages[0].batch, 32768);
  EXPECT_EQ(c.stages[1].batch, 16384);
  EXPECT_EQ(c.stages[2].batch, 8192);
  EXPECT_EQ(c.stages[0].base_lr, 8e-6);
  EXPECT_EQ(c.stages[1].base_lr, 4e-7);
  EXPECT_EQ(c.stages[2].base_lr, 1e-7);
}

TEST(Presets, BudgetVariantsEndAt336) {
  int found = 0;
  for (const auto& name : experiment_preset_names()) {
    if (name.rfind("budget-", 0) != 0) {
      continue;
    }
    ++found;
    const auto c = experiment_preset(name).at(0);
    EXPECT_EQ(c.stages.back().resolution, 336) << name;
  }
  EXPECT_EQ(found, 4);
}

TEST(RunHelpers, FinetuneResolutionOverridesBackbone) {
  const auto c = experiment_preset("desk").at(0);
  const auto v = final_vision(c);
  EXPECT_EQ(v.resolution, 128);
  EXPECT_EQ(mllm_config(c, v).vision.resolution, c.finetune.resolution);
}

}  // namespace
}  // namespace openvision
