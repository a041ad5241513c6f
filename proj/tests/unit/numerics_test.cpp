#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "openvision/grad_check.hpp"
#include "openvision/graph.hpp"
#include "openvision/rng.hpp"

namespace openvision {
namespace {

Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data()) {
    v = rng.normal() * scale;
  }
  return t;
}

Tensor<double> naive_matmul(const Tensor<double>& a, const Tensor<double>& b) {
  Tensor<double> c({a.dim(0), b.dim(1)});
  for (std::int64_t i = 0; i < a.dim(0); ++i) {
    for (std::int64_t j = 0; j < b.dim(1); ++j) {
      double s = 0;
      for (std::int64_t p = 0; p < a.dim(1); ++p) {
        s += a.at(i, p) * b.at(p, j);
      }
      c.at(i, j) = s;
    }
  }
  return c;
}

TEST(Matmul, IdentityTimesIdentity) {
  auto eye = Tensor<double>::matrix(2, 2, {1, 0, 0, 1});
  EXPECT_EQ(matmul(eye, eye), eye);
}

TEST(Matmul, HandArithmetic) {
  auto a = Tensor<double>::matrix(2, 2, {1, 2, 3, 4});
  auto b = Tensor<double>::matrix(2, 1, {0, 1});
  EXPECT_EQ(matmul(a, b), Tensor<double>::matrix(2, 1, {2, 4}));
}

TEST(Matmul, MatchesTripleLoop) {
  auto a = random_tensor({5, 7}, 1);
  auto b = random_tensor({7, 3}, 2);
  EXPECT_LT(max_abs_diff(matmul(a, b), naive_matmul(a, b)), 1e-6);
}

TEST(Matmul, ShapeMismatchIsDimensionError) {
  auto a = random_tensor({2, 3}, 1);
  auto b = random_tensor({2, 3}, 2);
  try {
    matmul(a, b);
    FAIL() << "expected a dimension error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dimension);
  }
}

TEST(LayerNorm, ConstantRowGivesZeros) {
  Tensor<double> x({1, 6}, 3.25);
  Tensor<double> gamma({6}, 1.0);
  Tensor<double> beta({6}, 0.0);
  auto y = layer_norm(x, gamma, beta, 1e-5);
  for (double v : y.data()) {
    EXPECT_EQ(v, 0.0);
  }
}

TEST(LayerNorm, ZeroGainReturnsBeta) {
  auto x = random_tensor({3, 4}, 5);
  Tensor<double> gamma({4}, 0.0);
  auto beta = Tensor<double>({4}, std::vector<double>{0.5, -1.0, 2.0, 0.0});
  auto y = layer_norm(x, gamma, beta, 1e-5);
  for (std::int64_t r = 0; r < 3; ++r) {
    for (std::int64_t j = 0; j < 4; ++j) {
      EXPECT_EQ(y.at(r, j), beta[j]);
    }
  }
}

TEST(LayerNorm, OutputStatistics) {
  auto x = random_tensor({1, 64}, 9, 3.0);
  Tensor<double> gamma({64}, 1.0);
  Tensor<double> beta({64}, 0.0);
  auto y = layer_norm(x, gamma, beta, 1e-5);
  double mean = 0;
  for (double v : y.data()) {
    mean += v;
  }
  mean /= 64.0;
  double var = 0;
  for (double v : y.data()) {
    var += (v - mean) * (v - mean);
  }
  var /= 64.0;
  EXPECT_LT(std::abs(mean), 1e-6);
  EXPECT_LT(std::abs(var - 1.0), 1e-4);
}

TEST(Attention, SingleKeyReturnsValueRow) {
  auto q = random_tensor({4, 3}, 11);
  auto k = random_tensor({1, 3}, 12);
  auto v = random_tensor({1, 3}, 13);
  auto out = attention(q, k, v, false);
  for (std::int64_t i = 0; i < 4; ++i) {
    for (std::int64_t j = 0; j < 3; ++j) {
      EXPECT_DOUBLE_EQ(out.at(i, j), v.at(0, j));
    }
  }
}

TEST(Attention, CausalFirstRowSeesOnlyItself) {
  auto q = random_tensor({3, 4}, 21);
  auto k = random_tensor({3, 4}, 22);
  auto v = random_tensor({3, 4}, 23);
  auto out = attention(q, k, v, true);
  for (std::int64_t j = 0; j < 4; ++j) {
    EXPECT_DOUBLE_EQ(out.at(0, j), v.at(0, j));
  }
}

TEST(Attention, MatchesExplicitSoftmaxThenMatmul) {
  auto q = random_tensor({3, 5}, 31);
  auto k = random_tensor({3, 5}, 32);
  auto v = random_tensor({3, 5}, 33);
  // Two-step reference: logits, explicit softmax, then weighted sum.
  Tensor<double> expected({3, 5});
  for (std::int64_t i = 0; i < 3; ++i) {
    std::vector<double> w(3);
    double z = 0;
    for (std::int64_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::int64_t c = 0; c < 5; ++c) {
        s += q.at(i, c) * k.at(j, c);
      }
      w[j] = std::exp(s / std::sqrt(5.0));
      z += w[j];
    }
    for (std::int64_t c = 0; c < 5; ++c) {
      double acc = 0;
      for (std::int64_t j = 0; j < 3; ++j) {
        acc += w[j] / z * v.at(j, c);
      }
      expected.at(i, c) = acc;
    }
  }
  EXPECT_LT(max_abs_diff(attention(q, k, v, false), expected), 1e-6);
}

TEST(Attention, OutputIsConvexCombinationOfValues) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto q = random_tensor({6, 1}, 100 + seed);
    auto k = random_tensor({6, 1}, 200 + seed);
    auto v = random_tensor({6, 1}, 300 + seed);
    auto out = attention(q, k, v, seed % 2 == 0);
    double lo = 1e300;
    double hi = -1e300;
    for (double x : v.data()) {
      lo = std::min(lo, x);
      hi = std::max(hi, x);
    }
    for (double x : out.data()) {
      EXPECT_GE(x, lo - 1e-12);
      EXPECT_LE(x, hi + 1e-12);
    }
  }
}

TEST(Softmax, RowsSumToOne) {
  auto x = random_tensor({10, 17}, 41, 5.0);
  auto y = softmax_rows(x);
  for (std::int64_t r = 0; r < 10; ++r) {
    double s = 0;
    for (double v : y.row(r)) {
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Determinism, RepeatedOpsAreBitIdentical) {
  auto q = random_tensor({8, 6}, 51).cast<float>();
  auto k = random_tensor({8, 6}, 52).cast<float>();
  auto v = random_tensor({8, 6}, 53).cast<float>();
  EXPECT_TRUE(bit_identical(attention(q, k, v, true), attention(q, k, v, true)));
  EXPECT_TRUE(bit_identical(matmul(q, random_tensor({6, 3}, 54).cast<float>()),
                            matmul(q, random_tensor({6, 3}, 54).cast<float>())));
}

TEST(GradCheck, QuadraticIsExact) {
  ParameterStore<double> params;
  params.add("theta", Tensor<double>({2}, std::vector<double>{1.0, 2.0}), false);
  LossFn loss = [](ParameterStore<double>& p, bool with_grad) {
    Graph<double> g;
    auto theta = g.parameter(p.at("theta"));
    auto l = g.sum(g.mul(theta, theta));
    if (with_grad) {
      g.backward(l);
    }
    return g.value(l)[0];
  };
  auto report = grad_check(loss, params, {.probes_per_tensor = 0, .step = 1e-4});
  EXPECT_EQ(params.at("theta").grad[0], 2.0);
  EXPECT_EQ(params.at("theta").grad[1], 4.0);
  EXPECT_LT(report.max_abs_error, 1e-9);
  EXPECT_TRUE(report.pass);
}

TEST(GradCheck, ConstantLossHasZeroError) {
  ParameterStore<double> params;
  params.add("theta", Tensor<double>({3}, 1.5), false);
  LossFn loss = [](ParameterStore<double>&, bool) { return 4.0; };
  auto report = grad_check(loss, params, {.probes_per_tensor = 0});
  EXPECT_EQ(report.max_rel_error, 0.0);
  EXPECT_EQ(report.max_abs_error, 0.0);
  EXPECT_TRUE(report.pass);
}

TEST(GradCheck, DetectsNonDeterministicLoss) {
  ParameterStore<double> params;
  params.add("theta", Tensor<double>({1}, 1.0), false);
  int calls = 0;
  LossFn loss = [&calls](ParameterStore<double>&, bool) { return static_cast<double>(++calls); };
  try {
    grad_check(loss, params);
    FAIL() << "expected a determinism error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::determinism);
  }
}

TEST(GradCheck, RejectsStepOutsideRange) {
  ParameterStore<double> params;
  params.add("theta", Tensor<double>({1}, 1.0), false);
  LossFn loss = [](ParameterStore<double>&, bool) { return 0.0; };
  EXPECT_THROW(grad_check(loss, params, {.step = 1e-2}), Error);
}

TEST(GradCheck, RelativeErrorFloor) {
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(1e-9, 0.0), 1e-9 / 1e-8);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
}

// Every differentiable op against central differences, in f64.
TEST(GradCheck, EveryOpMatchesFiniteDifferences) {
  ParameterStore<double> params;
  params.add("x", random_tensor({6, 8}, 61), true);
  params.add("w", random_tensor({8, 8}, 62, 0.3), true);
  params.add("b", random_tensor({8}, 63, 0.1), false);
  params.add("gamma", random_tensor({8}, 64, 0.2), false);
  params.add("beta", random_tensor({8}, 65, 0.1), false);
  params.add("table", random_tensor({5, 8}, 66), true);
  params.add("mem", random_tensor({4, 8}, 67), true);
  params.add("logit_w", random_tensor({8, 7}, 68, 0.5), true);
  for (auto& [name, p] : params) {
    if (name == "gamma") {
      for (auto& v : p.value.data()) {
        v += 1.0;
      }
    }
  }
  const std::vector<std::int32_t> ids = {0, 3, 3, 1, 4, 2};
  const std::vector<std::int64_t> picks = {5, 0, 2, 2};
  const std::vector<std::int64_t> period3 = {0, 1, 3};
  const std::vector<std::int32_t> targets = {1, 6, -1, 0, 2, 5};

  LossFn loss = [&](ParameterStore<double>& p, bool with_grad) {
    Graph<double> g;
    auto x = g.parameter(p.at("x"));
    auto emb = g.gather_rows(g.parameter(p.at("table")), ids);
    auto h = g.add(x, emb);
    h = g.layer_norm(h, g.parameter(p.at("gamma")), g.parameter(p.at("beta")), 1e-5);
    h = g.gelu(g.linear(h, g.parameter(p.at("w")), g.parameter(p.at("b"))));
    auto self_att = g.attention(h, h, h, 2, 2, true);
    auto mem = g.parameter(p.at("mem"));
    auto cross = g.attention(self_att, mem, mem, 2, 4, false);
    auto mixed = g.add_rows(cross, g.scale(g.select_rows(mem, period3), 0.5));
    auto soft = g.softmax_rows(mixed);
    auto normed = g.l2_normalize_rows(g.add(soft, h));
    auto cat = g.concat_rows(std::vector<Var>{normed, mem});
    auto picked = g.select_rows(cat, picks);
    auto pooled = g.mean_row_groups(picked, 2);
    auto logits = g.matmul(normed, g.parameter(p.at("logit_w")));
    auto ce = g.cross_entropy(logits, targets, -1);
    auto total = g.add(ce.loss, g.sum(g.mul(pooled, pooled)));
    if (with_grad) {
      g.backward(total);
    }
    return g.value(total)[0];
  };
  auto report = grad_check(loss, params, {.probes_per_tensor = 0, .step = 1e-4});
  EXPECT_TRUE(report.pass) << report.to_string();
  EXPECT_LT(report.max_rel_error, 1e-3);
}

TEST(CrossEntropy, AllIgnoredGivesZeroAndNoContributors) {
  Graph<double> g;
  auto logits = g.constant(random_tensor({3, 4}, 71));
  std::vector<std::int32_t> targets = {9, 9, 9};
  auto ce = g.cross_entropy(logits, targets, 9);
  EXPECT_EQ(ce.contributing, 0);
  EXPECT_EQ(g.value(ce.loss)[0], 0.0);
}

TEST(CrossEntropy, OutOfVocabularyTargetIsDataError) {
  Graph<double> g;
  auto logits = g.constant(random_tensor({2, 4}, 72));
  std::vector<std::int32_t> targets = {1, 4};
  try {
    g.cross_entropy(logits, targets, -1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::data);
  }
}

TEST(Graph, FrozenParameterGetsNoGradient) {
  ParameterStore<double> params;
  params.add("a", random_tensor({2, 2}, 81), true).trainable = false;
  params.add("b", random_tensor({2, 2}, 82), true);
  params.zero_grad();
  Graph<double> g;
  auto out = g.sum(g.matmul(g.parameter(params.at("a")), g.parameter(params.at("b"))));
  g.backward(out);
  for (double v : params.at("a").grad.data()) {
    EXPECT_EQ(v, 0.0);
  }
  double total = 0;
  for (double v : params.at("b").grad.data()) {
    total += std::abs(v);
  }
  EXPECT_GT(total, 0.0);
}

}  // namespace
}  // namespace openvision
