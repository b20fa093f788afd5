#include <gtest/gtest.h>

#include <cmath>

#include "hbmp/gradcheck.hpp"
#include "hbmp/model.hpp"
#include "hbmp/pipeline_check.hpp"

using namespace hbmp;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
  return t;
}

ModelConfig tiny_model(EncoderVariant v, double dropout = 0.0) {
  ModelConfig cfg;
  cfg.encoder = {v, 7, 4, 3, 2};
  cfg.mlp_width = 5;
  cfg.classes = 3;
  cfg.dropout = dropout;
  return cfg;
}

}  // namespace

TEST(Combine, LayoutMatchesDefinition) {
  Tensor u = Tensor::from({1, 2}, {1.0, -2.0}), v = Tensor::from({1, 2}, {3.0, 0.5});
  Tape tape;
  Tensor f = combine(tape, u, v);
  EXPECT_EQ(f.shape(), (Shape{1, 8}));
  const std::vector<double> expected{1.0, -2.0, 3.0, 0.5, 2.0, 2.5, 3.0, -1.0};
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(f[i], expected[i]);
  EXPECT_THROW(combine(tape, u, Tensor::zeros({1, 3})), DimensionError);
}

TEST(Combine, GradCheck) {
  Rng rng(1);
  Tensor u = random_tensor({2, 3}, rng), v = random_tensor({2, 3}, rng);
  auto r = grad_check([&](Tape& t) { return sum(t, mul(t, combine(t, u, v), combine(t, v, u))); }, {u, v});
  EXPECT_LT(r.max_error, 1e-6);
}

TEST(Head, ShapesAndInit) {
  Rng rng(2);
  HeadParams h = HeadParams::init({8, 5, 3, 0.1}, rng);
  EXPECT_EQ(h.hidden1.weight.shape(), (Shape{5, 8}));
  EXPECT_EQ(h.hidden2.weight.shape(), (Shape{5, 5}));
  EXPECT_EQ(h.output.weight.shape(), (Shape{3, 5}));
  for (double b : h.hidden1.bias.data()) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(h.parameters().size(), 6u);
  EXPECT_THROW(HeadParams::init({8, 5, 1, 0.1}, rng), std::invalid_argument);
}

TEST(Head, MatchesHandComputedForward) {
  HeadParams h{{Tensor::from({2, 2}, {1, -1, 0.5, 2}), Tensor::from({2}, {0, -10})},
               {Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::from({2}, {0, 0})},
               {Tensor::from({2, 2}, {1, 1, -1, 2}), Tensor::from({2}, {0.5, 0})},
               0.0};
  Rng rng(0);
  Tape tape;
  Tensor out = classify(tape, Tensor::from({1, 2}, {1.0, 2.0}), h, false, rng);
  // layer 1: (1-2, 0.5+4-10) = (-1, -5.5) -> lrelu (-0.01, -0.055)
  // layer 2: identity then lrelu -> (-0.0001, -0.00055)
  const double a = -0.0001, b = -0.00055;
  EXPECT_NEAR(out[0], a + b + 0.5, 1e-15);
  EXPECT_NEAR(out[1], -a + 2 * b, 1e-15);
}

TEST(Head, RejectsWrongFeatureWidth) {
  Rng rng(3);
  HeadParams h = HeadParams::init({8, 5, 3, 0.1}, rng);
  Tape tape;
  EXPECT_THROW(classify(tape, Tensor::zeros({2, 7}), h, false, rng), DimensionError);
}

TEST(Head, EvaluationIsDeterministicAndZeroDropoutMatchesIt) {
  Rng init(4);
  HeadParams h = HeadParams::init({6, 4, 3, 0.1}, init);
  Tensor x = random_tensor({3, 6}, init);
  Rng r1(5), r2(6);
  Tape tape;
  Tensor a = classify(tape, x, h, false, r1), b = classify(tape, x, h, false, r2);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], b[i]);
  HeadParams h0 = h;
  h0.dropout = 0.0;
  Tensor c = classify(tape, x, h0, true, r1);
  for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_EQ(a[i], c[i]);
}

TEST(Head, DropoutIsUnbiasedInExpectation) {
  Rng init(7);
  HeadParams h = HeadParams::init({4, 6, 3, 0.1}, init);
  // Zero the second layer so the output is linear in the first dropout mask.
  for (auto& v : h.hidden2.weight.data()) v = 0.0;
  for (std::size_t j = 0; j < 6; ++j) h.hidden2.weight[j * 6 + j] = 1.0;
  Tensor x = random_tensor({1, 4}, init);
  for (auto& v : h.hidden1.bias.data()) v = 1.0;  // keep activations positive
  for (auto& v : h.hidden1.weight.data()) v = std::fabs(v) * 0.1;
  for (auto& v : x.data()) v = std::fabs(v);
  Rng drop(8);
  Tape off(false);
  HeadParams h_eval = h;
  h_eval.dropout = 0.0;
  Tensor ref = classify(off, x, h_eval, false, drop);
  // Estimate E[output] on layer-1 activations alone via the identity path.
  const std::size_t n = 20000;
  Tensor lin = leaky_relu(off, linear(off, x, h.hidden1.weight, h.hidden1.bias));
  std::vector<double> mean(6, 0.0), sq(6, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    Tensor d = dropout(off, lin, 0.1, drop, true);
    for (std::size_t j = 0; j < 6; ++j) {
      mean[j] += d[j];
      sq[j] += d[j] * d[j];
    }
  }
  for (std::size_t j = 0; j < 6; ++j) {
    const double m = mean[j] / n;
    const double sd = std::sqrt(std::max(0.0, sq[j] / n - m * m) / n);
    EXPECT_NEAR(m, lin[j], 3.0 * sd + 1e-12);
  }
  EXPECT_EQ(ref.numel(), 3u);
}

TEST(Model, LogitShapeAndMismatchedBatches) {
  Rng rng(9);
  auto model = NliModel::init(tiny_model(EncoderVariant::hbmp), rng);
  Tape tape;
  auto p = SentenceBatch::from_sequences({{2, 3}, {4}});
  auto h = SentenceBatch::from_sequences({{5}, {6, 2, 1}});
  EXPECT_EQ(model.logits(tape, p, h, false, rng).shape(), (Shape{2, 3}));
  EXPECT_THROW(model.logits(tape, p, SentenceBatch::from_sequences({{1}}), false, rng), DimensionError);
}

TEST(Model, FullPipelineGradCheckEveryVariant) {
  for (auto v : kAllVariants) {
    auto r = check_pipeline(v);
    EXPECT_TRUE(r.passed()) << variant_key(v) << " " << r.max_error;
    Rng rng(0);
    EXPECT_EQ(r.blocks.size(), NliModel::init(tiny_model(v), rng).parameters().size());
  }
}

TEST(Model, PipelineCheckIsDeterministic) {
  auto a = check_pipeline(EncoderVariant::stack, {}, 11);
  auto b = check_pipeline(EncoderVariant::stack, {}, 11);
  EXPECT_EQ(a.seed, b.seed);
  EXPECT_EQ(a.max_error, b.max_error);
}

TEST(Model, PipelineCheckCatchesCorruptedBackward) {
  test_hooks::corrupt_linear_backward = true;
  auto r = check_pipeline(EncoderVariant::hbmp);
  test_hooks::corrupt_linear_backward = false;
  EXPECT_FALSE(r.passed());
  EXPECT_GT(r.max_error, 0.1);
}

TEST(Model, CloneIsDeepAndAssignCopiesValues) {
  Rng rng(11);
  auto model = NliModel::init(tiny_model(EncoderVariant::ens_train), rng);
  auto copy = model.clone();
  auto a = model.parameters(), b = copy.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_FALSE(a[i].tensor.same_storage(b[i].tensor));
  a[0].tensor[7] += 1.0;
  EXPECT_NE(a[0].tensor[7], b[0].tensor[7]);
  copy.assign_from(model);
  EXPECT_EQ(a[0].tensor[7], b[0].tensor[7]);
}

TEST(Model, ArgmaxTakesFirstOnTies) {
  auto p = argmax_rows(Tensor::from({2, 3}, {1, 3, 3, 0, 0, 0}));
  EXPECT_EQ(p, (std::vector<int>{1, 0}));
}
