// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ncap/dataset.hpp"
#include "ncap/errors.hpp"
#include "ncap/mlp.hpp"
#include "oracles.hpp"

using namespace ncap;

namespace {

MlpModel zeros(std::vector<std::size_t> sizes) {
  MlpModel m;
  m.spec = MlpSpec::trainable(sizes);
  for (std::size_t l = 1; l < sizes.size(); ++l) m.weights.emplace_back(sizes[l], sizes[l - 1], 0.0);
  return m;
}

}  // namespace

TEST(Forward, ZeroWeightsGiveUniformOutput) {
  const MlpModel m = zeros({3, 4, 5});
  const SampleTrace t = forward(m, Vector{1.0, -2.0, 3.0});
  for (std::size_t l = 1; l <= 2; ++l)
    for (double a : t.pre[l]) EXPECT_EQ(a, 0.0);
  for (double z : t.output()) EXPECT_DOUBLE_EQ(z, 0.2);
}

TEST(Forward, HandEvaluatedFirstLayer) {
  MlpModel m = zeros({2, 2, 2});
  m.W(1)(0, 0) = 1.0;
  m.W(1)(0, 1) = -1.0;
  m.W(1)(1, 1) = 1.0;
  const SampleTrace t = forward(m, Vector{1.0, 2.0});
  EXPECT_EQ(t.pre[1], (Vector{-1.0, 2.0}));
  EXPECT_EQ(t.act[1], (Vector{0.0, 2.0}));
}

TEST(Forward, SoftmaxSumsToOne) {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    auto c = oracle::random_case(oracle::random_sizes(rng, 1, 5, 8), rng);
    for (double& v : c.x) v *= 30.0;  // large logits exercise the max shift
    const SampleTrace t = forward(c.model, c.x);
    EXPECT_NEAR(sum(t.output()), 1.0, 1e-12);
    for (double z : t.output()) {
      EXPECT_GE(z, 0.0);
      EXPECT_LE(z, 1.0);
    }
  }
}

TEST(Forward, RejectsBadInput) {
  const MlpModel m = zeros({2, 3, 2});
  EXPECT_THROW(forward(m, Vector{1.0}), std::invalid_argument);
  EXPECT_THROW(forward(m, Vector{1.0, NAN}), std::invalid_argument);
  EXPECT_THROW(forward(m, Vector{1.0, INFINITY}), std::invalid_argument);
}

TEST(Loss, KnownValues) {
  EXPECT_NEAR(loss_cross_entropy(Vector{0.25, 0.25, 0.25, 0.25}, Vector{0, 0, 1, 0}), std::log(4.0), 1e-15);
  EXPECT_EQ(loss_cross_entropy(Vector{0.0, 1.0}, Vector{0, 1}), 0.0);
  EXPECT_NEAR(loss_cross_entropy(Vector{0.7, 0.3}, Vector{1, 0}), 0.356675, 1e-6);
  // clamp at 1e-15
  EXPECT_NEAR(loss_cross_entropy(Vector{1.0, 0.0}, Vector{0, 1}), -std::log(1e-15), 1e-9);
}

TEST(Loss, RejectsNonOneHot) {
  EXPECT_THROW(loss_cross_entropy(Vector{0.5, 0.5}, Vector{0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(loss_cross_entropy(Vector{0.5, 0.5}, Vector{1, 1}), std::invalid_argument);
  EXPECT_THROW(loss_cross_entropy(Vector{0.5, 0.5}, Vector{1, 0, 0}), std::invalid_argument);
}

TEST(Backward, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  auto c = oracle::random_case({3, 4, 4, 4, 3}, rng);
  SampleTrace t = forward(c.model, c.x);
  backward(c.model, t, c.y);
  const auto g = weight_gradients(t);
  for (std::size_t l = 1; l <= 4; ++l)
    for (std::size_t r = 0; r < g[l - 1].rows(); ++r)
      for (std::size_t col = 0; col < g[l - 1].cols(); ++col) {
        const double fd = oracle::fd_gradient(c.model, c.x, c.y, l, r, col, 1e-6);
        const double an = g[l - 1](r, col);
        if (std::abs(an) < 1e-9 && std::abs(fd) < 1e-9) continue;
        EXPECT_LT(oracle::rel_err(an, fd, 1e-8), 1e-5) << "layer " << l << " (" << r << "," << col << ")";
      }
}

TEST(Backward, ZeroResidualGivesZeroOutputGradient) {
  MlpModel m = zeros({2, 2, 2});
  SampleTrace t = forward(m, Vector{1.0, 1.0});
  // Force a perfect prediction by hand.
  t.act[2] = {1.0, 0.0};
  backward(m, t, Vector{1.0, 0.0});
  const auto g = weight_gradients(t);
  for (double v : g[1].data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, DeadLayerGivesZeroGradient) {
  std::mt19937_64 rng(5);
  auto c = oracle::random_case({3, 4, 4, 3}, rng);
  for (double& v : c.model.W(2).data()) v = -std::abs(v);
  for (double& v : c.model.W(1).data()) v = std::abs(v);
  for (double& v : c.x) v = std::abs(v) + 0.1;
  SampleTrace t = forward(c.model, c.x);
  backward(c.model, t, c.y);
  for (double s : t.dact[2]) ASSERT_EQ(s, 0.0);
  const auto g = weight_gradients(t);
  for (double v : g[1].data()) EXPECT_EQ(v, 0.0);
  for (double v : g[0].data()) EXPECT_EQ(v, 0.0);
}

TEST(Backward, SoftmaxShortcutMatchesChainRule) {
  std::mt19937_64 rng(8);
  auto c = oracle::random_case({4, 5, 3}, rng);
  SampleTrace t = forward(c.model, c.x);
  backward(c.model, t, c.y);
  const Vector& z = t.output();
  // dC/da_k = sum_i dC/dz_i dz_i/da_k, dz_i/da_k = z_i (1[i=k] - z_k)
  for (std::size_t k = 0; k < z.size(); ++k) {
    double chained = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double dc_dz = c.y[i] != 0.0 ? -c.y[i] / z[i] : 0.0;
      chained += dc_dz * z[i] * ((i == k ? 1.0 : 0.0) - z[k]);
    }
    EXPECT_NEAR(t.residual[k], chained, 1e-10);
  }
}

TEST(Backward, DeltaRecursionReproducesStoredValues) {
  std::mt19937_64 rng(21);
  auto c = oracle::random_case({3, 5, 4, 6, 3}, rng);
  SampleTrace t = forward(c.model, c.x);
  backward(c.model, t, c.y);
  const std::size_t L = 4;
  for (std::size_t l = 1; l + 1 < L; ++l) {
    const Matrix& w = c.model.W(l + 1);
    for (std::size_t i = 0; i < w.cols(); ++i) {
      double d = 0.0;
      for (std::size_t k = 0; k < w.rows(); ++k) d += w(k, i) * t.delta[l + 1][k] * t.dact[l + 1][k];
      EXPECT_EQ(d, t.delta[l][i]);
    }
  }
  // top hidden layer: W^(L)^T (z - y)
  for (std::size_t i = 0; i < c.model.W(L).cols(); ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < c.model.W(L).rows(); ++k) d += c.model.W(L)(k, i) * t.residual[k];
    EXPECT_EQ(d, t.delta[L - 1][i]);
  }
  for (std::size_t l = 1; l < L; ++l)
    for (double s : t.dact[l]) EXPECT_TRUE(s == 0.0 || s == 1.0);
}

TEST(Backward, ReluDerivativeAtZeroIsZero) {
  MlpModel m = zeros({2, 2, 2});
  SampleTrace t = forward(m, Vector{1.0, 1.0});
  backward(m, t, Vector{1.0, 0.0});
  for (double s : t.dact[1]) EXPECT_EQ(s, 0.0);
}

TEST(Backward, BatchGradientIsMean) {
  std::mt19937_64 rng(2);
  auto c = oracle::random_case({3, 4, 4, 2}, rng);
  Matrix inputs(2, 3), targets(2, 2, 0.0);
  Vector x2 = {0.3, -1.0, 2.0};
  for (std::size_t j = 0; j < 3; ++j) {
    inputs(0, j) = c.x[j];
    inputs(1, j) = x2[j];
  }
  targets(0, 0) = 1.0;
  targets(1, 1) = 1.0;
  const auto fb = forward_backward(c.model, inputs, targets);
  SampleTrace a = forward(c.model, c.x), b = forward(c.model, x2);
  backward(c.model, a, Vector{1, 0});
  backward(c.model, b, Vector{0, 1});
  const auto ga = weight_gradients(a), gb = weight_gradients(b);
  for (std::size_t l = 0; l < 3; ++l)
    for (std::size_t e = 0; e < ga[l].size(); ++e)
      EXPECT_NEAR(fb.grads[l].data()[e], 0.5 * (ga[l].data()[e] + gb[l].data()[e]), 1e-15);
  EXPECT_NEAR(fb.loss, 0.5 * (a.loss + b.loss), 1e-15);
}

TEST(Backward, RejectsShapeMismatch) {
  const MlpModel m = zeros({2, 3, 2});
  SampleTrace t = forward(m, Vector{1.0, 1.0});
  EXPECT_THROW(backward(m, t, Vector{1.0, 0.0, 0.0}), std::invalid_argument);
  SampleTrace empty;
  EXPECT_THROW(backward(m, empty, Vector{1.0, 0.0}), std::invalid_argument);
}

TEST(Sgd, Arithmetic) {
  MlpModel m = zeros({1, 1});
  m.W(1)(0, 0) = 1.0;
  sgd_step(m, {Matrix(1, 1, 0.5)}, 0.1);
  EXPECT_DOUBLE_EQ(m.W(1)(0, 0), 0.95);
}

TEST(Sgd, ZeroRateAndFrozenLayersLeaveModelUnchanged) {
  std::mt19937_64 rng(4);
  auto c = oracle::random_case({3, 4, 3}, rng);
  const MlpModel before = c.model;
  std::vector<Matrix> g{Matrix(4, 3, 1.0), Matrix(3, 4, 1.0)};
  sgd_step(c.model, g, 0.0);
  EXPECT_EQ(c.model.weights, before.weights);
  c.model.spec.frozen = {true, true};
  sgd_step(c.model, g, 0.5);
  EXPECT_EQ(c.model.weights, before.weights);
  c.model.spec.frozen = {true, false};
  sgd_step(c.model, g, 0.5);
  EXPECT_EQ(c.model.W(1), before.W(1));
  EXPECT_NE(c.model.W(2), before.W(2));
}

TEST(Sgd, NonFiniteGradientSignalsDivergence) {
  MlpModel m = zeros({1, 1});
  EXPECT_THROW(sgd_step(m, {Matrix(1, 1, NAN)}, 0.1), DivergenceError);
  EXPECT_THROW(sgd_step(m, {Matrix(1, 1, 1.0)}, -0.1), std::invalid_argument);
}

TEST(Init, KaimingStatistics) {
  const MlpModel m = init_kaiming_normal(MlpSpec::trainable({256, 256}), 9);
  double s = 0.0, ss = 0.0;
  for (double v : m.W(1).data()) {
    s += v;
    ss += v * v;
  }
  const double n = static_cast<double>(m.W(1).size());
  const double var = ss / n - (s / n) * (s / n);
  EXPECT_NEAR(var, 2.0 / 256.0, 0.1 * 2.0 / 256.0);
}

TEST(Init, SeedDeterminesWeights) {
  const auto spec = MlpSpec::trainable({4, 8, 3});
  EXPECT_EQ(init_kaiming_normal(spec, 1).weights, init_kaiming_normal(spec, 1).weights);
  EXPECT_NE(init_kaiming_normal(spec, 1).weights, init_kaiming_normal(spec, 2).weights);
}

TEST(Init, FanInTwoGivesUnitStd) {
  const MlpModel m = init_kaiming_normal(MlpSpec::trainable({2, 20000}), 3);
  double ss = 0.0;
  for (double v : m.W(1).data()) ss += v * v;
  EXPECT_NEAR(std::sqrt(ss / m.W(1).size()), 1.0, 0.01);
}

TEST(Spec, Validation) {
  EXPECT_THROW(MlpSpec::trainable({3}).validate(), std::invalid_argument);
  EXPECT_THROW(MlpSpec::trainable({3, 0, 2}).validate(), std::invalid_argument);
  MlpSpec s = MlpSpec::trainable({3, 2});
  s.frozen.push_back(false);
  EXPECT_THROW(s.validate(), std::invalid_argument);
  EXPECT_EQ(MlpSpec::trainable({3, 4, 2}).n_params(), 20u);
}

namespace {

DataSplits blobs(std::size_t classes, std::size_t features, std::uint64_t seed) {
  BlobSpec b;
  b.n_classes = classes;
  b.n_features = features;
  b.sizes = {200, 100, 100};
  b.separation = 5.0;
  b.seed = seed;
  return generate_blobs(b);
}

}  // namespace

TEST(Train, ZeroEpochsRecordsOnlyEpochZero) {
  const auto d = blobs(2, 3, 1);
  const MlpModel m = init_kaiming_normal(MlpSpec::trainable({3, 8, 2}), 1);
  TrainOptions o;
  o.epochs = 0;
  const auto r = train(m, d.train, d.val, o);
  ASSERT_EQ(r.curve.size(), 1u);
  EXPECT_EQ(r.curve.back().epoch, 0u);
  EXPECT_EQ(r.model.weights, m.weights);
}

TEST(Train, SameSeedIsBitIdentical) {
  const auto d = blobs(3, 3, 2);
  const MlpModel m = init_kaiming_normal(MlpSpec::trainable({3, 8, 8, 3}), 2);
  TrainOptions o;
  o.epochs = 5;
  o.seed = 44;
  o.probe = [](const MlpModel& mm, std::size_t) { return mm.W(1)(0, 0); };
  const auto a = train(m, d.train, d.val, o), b = train(m, d.train, d.val, o);
  EXPECT_EQ(a.model.weights, b.model.weights);
  EXPECT_EQ(a.curve, b.curve);
  o.seed = 45;
  EXPECT_NE(train(m, d.train, d.val, o).model.weights, a.model.weights);
}

TEST(Train, SeparableBlobsReachHighAccuracy) {
  const auto d = blobs(2, 3, 3);
  const MlpModel m = init_kaiming_normal(MlpSpec::trainable({3, 8, 8, 8, 2}), 3);
  TrainOptions o;
  o.learning_rate = 0.05;
  o.epochs = 30;
  o.seed = 3;
  const auto r = train(m, d.train, d.val, o);
  EXPECT_GT(r.curve.back().train_accuracy, 0.95);
}

TEST(Train, ProbeCalledOncePerEpoch) {
  const auto d = blobs(2, 3, 4);
  std::vector<std::size_t> calls;
  TrainOptions o;
  o.epochs = 4;
  o.probe = [&](const MlpModel&, std::size_t e) {
    calls.push_back(e);
    return 0.0;
  };
  train(init_kaiming_normal(MlpSpec::trainable({3, 4, 2}), 4), d.train, d.val, o);
  EXPECT_EQ(calls, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(Train, ErrorPaths) {
  const auto d = blobs(2, 3, 5);
  const MlpModel m = init_kaiming_normal(MlpSpec::trainable({3, 4, 2}), 5);
  TrainOptions o;
  Dataset empty;
  EXPECT_THROW(train(m, empty, d.val, o), std::invalid_argument);
  o.learning_rate = 1e300;
  o.epochs = 3;
  EXPECT_THROW(train(m, d.train, d.val, o), DivergenceError);
}

TEST(LearningCurveTest, Invariants) {
  LearningCurve c;
  c.append({1, 0.5, 0.5, 0.5, {}});
  EXPECT_THROW(c.append({1, 0.5, 0.5, 0.5, {}}), std::invalid_argument);
  EXPECT_THROW(c.append({2, 0.5, 1.5, 0.5, {}}), std::invalid_argument);
  EXPECT_THROW(c.append({2, 0.5, 0.5, -0.1, {}}), std::invalid_argument);
}

TEST(Checkpoint, RoundTripIsExact) {
  MlpModel m = init_kaiming_normal(MlpSpec::trainable({3, 5, 2}), 6);
  m.spec.frozen = {false, true};
  const Checkpoint ck{m, 77, 12};
  const Checkpoint back = parse_checkpoint(checkpoint_json(ck));
  EXPECT_EQ(back.model.weights, m.weights);
  EXPECT_EQ(back.model.spec.frozen, m.spec.frozen);
  EXPECT_EQ(back.model.spec.layer_sizes, m.spec.layer_sizes);
  EXPECT_EQ(back.seed, 77u);
  EXPECT_EQ(back.epoch, 12u);
  const std::string j = checkpoint_json(ck);
  EXPECT_LT(j.find("\"spec\""), j.find("\"weights\""));
  EXPECT_LT(j.find("\"weights\""), j.find("\"seed\""));
  EXPECT_LT(j.find("\"seed\""), j.find("\"epoch\""));

  const auto path = std::filesystem::temp_directory_path() / "ncap_ckpt_test.json";
  save_checkpoint(path, ck);
  EXPECT_EQ(load_checkpoint(path).model.weights, m.weights);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsMalformed) {
  EXPECT_THROW(parse_checkpoint("{"), DataError);
  EXPECT_THROW(parse_checkpoint(R"({"spec":{"layer_sizes":[2,2],"frozen":[false]},"weights":[[[1,2]]],"seed":0,"epoch":0})"),
               DataError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.json"), DataError);
}
