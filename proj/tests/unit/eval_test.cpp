#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "openvision/eval.hpp"
#include "openvision/trainer.hpp"
#include "support.hpp"

namespace openvision {
namespace {

using testing::random_unit_rows;
using testing::throws_kind;

const std::vector<int> kKs = {1, 5, 10};

Tensor<float> identity_rows(std::int64_t n) {
  Tensor<float> t({n, n});
  for (std::int64_t i = 0; i < n; ++i) {
    t.at(i, i) = 1.0f;
  }
  return t;
}

TEST(Retrieval, IdenticalEmbeddingsArePerfect) {
  const auto e = random_unit_rows<float>(20, 8, 1);
  const auto r = retrieval_recall(e, e, kKs);
  for (int k : kKs) {
    EXPECT_EQ(r.image_to_text.recall_at.at(k), 1.0);
    EXPECT_EQ(r.text_to_image.recall_at.at(k), 1.0);
  }
}

TEST(Retrieval, RandomEmbeddingsNearChance) {
  const auto r = retrieval_recall(random_unit_rows<float>(100, 32, 2), random_unit_rows<float>(100, 32, 3),
                                  std::vector<int>{1});
  EXPECT_GE(r.image_to_text.recall_at.at(1), 0.0);
  EXPECT_LE(r.image_to_text.recall_at.at(1), 0.05);
  EXPECT_LE(r.text_to_image.recall_at.at(1), 0.05);
}

TEST(Retrieval, SwappingInputsSwapsDirections) {
  const auto a = random_unit_rows<float>(30, 6, 4);
  const auto b = random_unit_rows<float>(30, 6, 5);
  const auto ab = retrieval_recall(a, b, kKs);
  const auto ba = retrieval_recall(b, a, kKs);
  EXPECT_EQ(ab.image_to_text.recall_at, ba.text_to_image.recall_at);
  EXPECT_EQ(ab.text_to_image.recall_at, ba.image_to_text.recall_at);
}

TEST(Retrieval, RecallIsMonotoneInK) {
  const auto r = retrieval_recall(random_unit_rows<float>(40, 4, 6), random_unit_rows<float>(40, 4, 7),
                                  std::vector<int>{1, 2, 5, 10, 40});
  double prev = 0.0;
  for (const auto& [k, v] : r.image_to_text.recall_at) {
    EXPECT_GE(v, prev);
    prev = v;
  }
  EXPECT_EQ(r.image_to_text.recall_at.at(40), 1.0);
}

TEST(Retrieval, TiesGoToLowerIndex) {
  // All scores are equal, so query i ranks i-th.
  Tensor<float> e({4, 2});
  for (int i = 0; i < 4; ++i) {
    e.at(i, 0) = 1.0f;
  }
  const auto r = retrieval_recall(e, e, std::vector<int>{1, 2, 4});
  EXPECT_DOUBLE_EQ(r.image_to_text.recall_at.at(1), 0.25);
  EXPECT_DOUBLE_EQ(r.image_to_text.recall_at.at(2), 0.5);
  EXPECT_DOUBLE_EQ(r.text_to_image.recall_at.at(4), 1.0);
}

TEST(Retrieval, KBeyondCorpusIsConfigError) {
  const auto e = random_unit_rows<float>(5, 3, 1);
  EXPECT_TRUE(throws_kind([&] { retrieval_recall(e, e, std::vector<int>{6}); }, ErrorKind::config));
  EXPECT_TRUE(throws_kind([&] { retrieval_recall(e, e, std::vector<int>{0}); }, ErrorKind::config));
}

TEST(Retrieval, RejectsUnnormalizedRows) {
  auto e = random_unit_rows<float>(5, 3, 1);
  e.at(0, 0) *= 2.0f;
  EXPECT_TRUE(throws_kind([&] { retrieval_recall(e, e, std::vector<int>{1}); },
                          ErrorKind::contract));
}

TEST(ZeroShot, SingleClassIsAlwaysCorrect) {
  const auto imgs = random_unit_rows<float>(7, 5, 8);
  const auto cls = random_unit_rows<float>(1, 5, 9);
  const std::vector<int> labels(7, 0);
  const auto z = zero_shot_from_embeddings(imgs, cls, labels);
  EXPECT_EQ(z.accuracy, 1.0);
  EXPECT_EQ(z.per_class.at(0), 1.0);
}

TEST(ZeroShot, PerClassAccuracyAndEmptyClasses) {
  const auto cls = identity_rows(3);
  Tensor<float> imgs({4, 3});
  imgs.at(0, 0) = 1.0f;  // label 0, correct
  imgs.at(1, 1) = 1.0f;  // label 0, wrong
  imgs.at(2, 1) = 1.0f;  // label 1, correct
  imgs.at(3, 1) = 1.0f;  // label 1, correct
  const std::vector<int> labels = {0, 0, 1, 1};
  const auto z = zero_shot_from_embeddings(imgs, cls, labels);
  EXPECT_DOUBLE_EQ(z.accuracy, 0.75);
  EXPECT_DOUBLE_EQ(z.per_class[0], 0.5);
  EXPECT_DOUBLE_EQ(z.per_class[1], 1.0);
  EXPECT_TRUE(std::isnan(z.per_class[2]));
  EXPECT_EQ(z.class_counts, (std::vector<std::int64_t>{2, 2, 0}));
  EXPECT_EQ(z.predictions, (std::vector<int>{0, 1, 1, 1}));
}

TEST(ZeroShot, ArgmaxTieGoesToLowestClass) {
  Tensor<float> cls({2, 2});
  cls.at(0, 0) = 1.0f;
  cls.at(1, 0) = 1.0f;
  Tensor<float> imgs({1, 2});
  imgs.at(0, 0) = 1.0f;
  const std::vector<int> labels = {1};
  EXPECT_EQ(zero_shot_from_embeddings(imgs, cls, labels).predictions[0], 0);
}

class EmbeddingTest : public ::testing::Test {
 protected:
  ModelConfig model = ModelConfig::preset("micro");
  ParameterStore<float> params = initial_state(model, 12).params;
};

TEST_F(EmbeddingTest, FillTemplates) {
  const std::vector<std::string> t = {"a {}", "{} here"};
  EXPECT_EQ(fill_templates("red circle", t), (std::vector<std::string>{"a red circle", "red circle here"}));
  const std::vector<std::string> bad = {"none"};
  EXPECT_TRUE(throws_kind([&] { fill_templates("x", bad); }, ErrorKind::config));
}

TEST_F(EmbeddingTest, DuplicatedTemplatesDoNotChangeClassEmbeddings) {
  const std::vector<std::string> names = {"red circle", "blue square"};
  const std::vector<std::string> one = {"a photo of a {}"};
  const std::vector<std::string> two = {"a photo of a {}", "a photo of a {}"};
  const auto a = class_embeddings(params, model.text, names, one);
  const auto b = class_embeddings(params, model.text, names, two);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-6);
  }
}

TEST_F(EmbeddingTest, ImageEmbeddingsAreUnitNormAndChunkInvariant) {
  std::vector<Image> images;
  for (const auto& r : gen_probe_dataset(3, 10, 32)) {
    images.push_back(decode_png(r.png));
  }
  const auto a = embed_images(params, model.vision, images, 64);
  const auto b = embed_images(params, model.vision, images, 3);
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.rows(); ++i) {
    double sq = 0.0;
    for (float v : a.row(i)) {
      sq += static_cast<double>(v) * v;
    }
    EXPECT_NEAR(sq, 1.0, 1e-5);
  }
  for (std::int64_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i], b[i], 1e-5);
  }
}

TEST_F(EmbeddingTest, ZeroShotIgnoresImageScale) {
  const auto records = gen_probe_dataset(4, 8, 32, {.stratified = true});
  std::vector<Image> images;
  std::vector<int> labels;
  for (const auto& r : records) {
    images.push_back(decode_png(r.png));
    labels.push_back(ProbeMeta::parse(r.meta).label());
  }
  const auto imgs = embed_images(params, model.vision, images);
  auto scaled = imgs;
  for (auto& v : scaled.data()) {
    v *= 3.0f;
  }
  const auto names = probe_class_names();
  const std::vector<std::string> templates = {"a {}"};
  const auto cls = class_embeddings(params, model.text, names, templates);
  EXPECT_EQ(zero_shot_from_embeddings(imgs, cls, labels).predictions,
            zero_shot_from_embeddings(scaled, cls, labels).predictions);
}

TEST_F(EmbeddingTest, EmptyTemplatesAreConfigError) {
  const std::vector<std::string> names = {"red circle"};
  const std::vector<std::string> none;
  const std::vector<Image> images = {Image(32, 32)};
  const std::vector<int> labels = {0};
  EXPECT_TRUE(throws_kind(
      [&] { zero_shot_classify(params, model.vision, params, model.text, names, none, images, labels); },
      ErrorKind::config));
}

TEST(Vqa, ExactMatchNormalizes) {
  const std::vector<std::string> pred = {"  Red ", "circle", "blue"};
  const std::vector<std::string> gold = {"red", "Circle\n", "green"};
  EXPECT_DOUBLE_EQ(vqa_exact_match(pred, gold), 2.0 / 3.0);
  EXPECT_EQ(vqa_exact_match({}, {}), 0.0);
  EXPECT_EQ(normalize_answer("\tA B "), "a b");
}

TEST(Report, JsonLinesCarryDatasetAndCheckpoint) {
  EvalReport report{.dataset_id = "probe", .checkpoint_hash = hash_hex(0xabcULL),
                    .metrics = {{"image_to_text_R@1", 0.5}, {"zero_shot_accuracy", 0.25}}};
  EXPECT_EQ(report.checkpoint_hash, "0000000000000abc");
  const auto text = format_report(report);
  std::istringstream in(text);
  int lines = 0;
  for (std::string line; std::getline(in, line); ++lines) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["dataset"], "probe");
    EXPECT_EQ(j["checkpoint"], "0000000000000abc");
    EXPECT_EQ(j["metric"], report.metrics[lines].name);
    EXPECT_EQ(j["value"].get<double>(), report.metrics[lines].value);
  }
  EXPECT_EQ(lines, 2);
  EXPECT_NE(render_table(report).find("zero_shot_accuracy"), std::string::npos);
}

TEST(Report, EvaluateTwoTowerProducesAllMetrics) {
  const auto model = ModelConfig::preset("micro");
  const auto params = initial_state(model, 2).params;
  const auto records = gen_probe_dataset(5, 24, 32);
  const std::vector<std::string> templates = {"a {}"};
  const auto report = evaluate_two_tower(params, model, records, templates, kKs, "probe");
  EXPECT_EQ(report.dataset_id, "probe");
  EXPECT_EQ(report.checkpoint_hash, hash_hex(params.hash()));
  int recalls = 0;
  for (const auto& m : report.metrics) {
    EXPECT_GE(m.value, 0.0) << m.name;
    EXPECT_LE(m.value, 1.0) << m.name;
    recalls += m.name.find("_R@") != std::string::npos ? 1 : 0;
  }
  EXPECT_EQ(recalls, 6);
  EXPECT_EQ(report.metrics.back().name, "zero_shot_accuracy");
}

}  // namespace
}  // namespace openvision
