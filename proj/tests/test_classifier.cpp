#include <gtest/gtest.h>

#include <cmath>

#include "hmme/classifier.hpp"
#include "hmme/error.hpp"

namespace hmme {
namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MlpConfig small_config(std::size_t input_dim, std::uint64_t seed) {
  MlpConfig config;
  config.input_dim = input_dim;
  config.hidden_dims = {6, 5};
  config.dropout = 0.0;
  config.seed = seed;
  return config;
}

// Two Gaussian-free clusters separated along the first axis.
void separable_toy(std::vector<FeatureVector>& x, std::vector<Label>& y, std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < 80; ++i) {
    const Label label = i % 2;
    const double center = label == 1 ? 1.0 : -1.0;
    x.push_back({center + 0.4 * (rng.uniform() - 0.5), rng.uniform() - 0.5});
    y.push_back(label);
  }
}

MatrixXd random_batch(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  MatrixXd x(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) x(r, c) = 2.0 * rng.uniform() - 1.0;
  return x;
}

VectorXd random_labels(Eigen::Index rows, Rng& rng) {
  VectorXd y(rows);
  for (Eigen::Index r = 0; r < rows; ++r) y[r] = static_cast<double>(rng.below(2));
  y[0] = 0.0;
  y[1] = 1.0;
  return y;
}

TEST(MlpConfig, Validation) {
  MlpConfig config = small_config(3, 0);
  EXPECT_NO_THROW(config.validate());
  config.epochs = 0;
  EXPECT_THROW(config.validate(), ParameterError);
  config = small_config(3, 0);
  config.hidden_dims.clear();
  EXPECT_THROW(config.validate(), ParameterError);
  config = small_config(3, 0);
  config.dropout = 1.0;
  EXPECT_THROW(config.validate(), ParameterError);
  config = small_config(3, 0);
  config.batch_size = 0;
  EXPECT_THROW(config.validate(), ParameterError);
}

TEST(MlpModel, ShapesChain) {
  MlpConfig config;
  config.input_dim = 40;
  const MlpModel model = MlpModel::create(config);
  ASSERT_EQ(model.dense.size(), 4U);
  EXPECT_EQ(model.dense[0].weight.rows(), 512);
  EXPECT_EQ(model.dense[0].weight.cols(), 40);
  EXPECT_EQ(model.dense[1].weight.cols(), 512);
  EXPECT_EQ(model.dense[2].weight.rows(), 128);
  EXPECT_EQ(model.dense[3].weight.rows(), 1);
  EXPECT_NO_THROW(model.validate());
}

TEST(GradientCheck, SmallModelsOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const MlpModel model = MlpModel::create(small_config(4, seed));
    const MatrixXd x = random_batch(7, 4, rng);
    const VectorXd y = random_labels(7, rng);
    EXPECT_LT(gradient_check(model, x, y), 1e-4) << "seed " << seed;
  }
}

TEST(GradientCheck, RunningStatisticsMode) {
  Rng rng(5);
  MlpModel model = MlpModel::create(small_config(3, 5));
  for (auto& bn : model.norm) {
    bn.running_mean = VectorXd::Constant(bn.running_mean.size(), 0.1);
    bn.running_var = VectorXd::Constant(bn.running_var.size(), 2.0);
  }
  const MatrixXd x = random_batch(5, 3, rng);
  const VectorXd y = random_labels(5, rng);
  const MlpGradients g = mlp_gradients(model, x, y, NormMode::kRunning);
  const double h = 1e-6;
  MlpModel probe = model;
  probe.dense[0].weight(1, 2) += h;
  const double up = mlp_loss(probe, x, y, NormMode::kRunning);
  probe.dense[0].weight(1, 2) -= 2 * h;
  const double down = mlp_loss(probe, x, y, NormMode::kRunning);
  EXPECT_NEAR(g.dense[0].weight(1, 2), (up - down) / (2 * h), 1e-7);
}

TEST(Gradients, LinearModelMatchesLogisticRegression) {
  // No hidden layers: the network is logistic regression, whose mean-loss
  // gradient is X^T (sigmoid(Xw + b) - y) / n.
  Rng rng(9);
  MlpModel model;
  model.input_dim = 3;
  model.dense.push_back({random_batch(1, 3, rng), VectorXd::Constant(1, 0.2)});
  ASSERT_NO_THROW(model.validate());
  const MatrixXd x = random_batch(6, 3, rng);
  const VectorXd y = random_labels(6, rng);
  const MlpGradients g = mlp_gradients(model, x, y, NormMode::kBatch);

  VectorXd residual(6);
  for (Eigen::Index i = 0; i < 6; ++i) {
    const double z = x.row(i).dot(model.dense[0].weight.row(0)) + 0.2;
    residual[i] = 1.0 / (1.0 + std::exp(-z)) - y[i];
  }
  const MatrixXd expected_w = residual.transpose() * x / 6.0;
  EXPECT_LE((g.dense[0].weight - expected_w).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(g.dense[0].bias[0], residual.mean(), 1e-14);
  EXPECT_LT(gradient_check(model, x, y), 1e-6);
}

TEST(Gradients, DuplicatedRowsDoubleTheSumGradient) {
  Rng rng(10);
  const MlpModel model = MlpModel::create(small_config(3, 4));
  const MatrixXd x = random_batch(4, 3, rng);
  const VectorXd y = random_labels(4, rng);
  MatrixXd x2(8, 3);
  x2 << x, x;
  VectorXd y2(8);
  y2 << y, y;
  // Batch statistics are unchanged by duplicating every row, so the summed
  // loss, and with it every gradient, exactly doubles.
  const MlpGradients once = mlp_gradients(model, x, y, NormMode::kRunning, LossReduction::kSum);
  const MlpGradients twice = mlp_gradients(model, x2, y2, NormMode::kRunning, LossReduction::kSum);
  for (std::size_t l = 0; l < once.dense.size(); ++l) {
    EXPECT_LE((twice.dense[l].weight - 2.0 * once.dense[l].weight).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((twice.dense[l].bias - 2.0 * once.dense[l].bias).cwiseAbs().maxCoeff(), 1e-12);
  }
  for (std::size_t l = 0; l < once.gamma.size(); ++l) {
    EXPECT_LE((twice.gamma[l] - 2.0 * once.gamma[l]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((twice.beta[l] - 2.0 * once.beta[l]).cwiseAbs().maxCoeff(), 1e-12);
  }
  // Same under per-batch statistics, up to rounding in the batch moments.
  const MlpGradients batch_once = mlp_gradients(model, x, y, NormMode::kBatch, LossReduction::kSum);
  const MlpGradients batch_twice = mlp_gradients(model, x2, y2, NormMode::kBatch, LossReduction::kSum);
  for (std::size_t l = 0; l < once.dense.size(); ++l)
    EXPECT_LE((batch_twice.dense[l].weight - 2.0 * batch_once.dense[l].weight).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Sampler, BalancedWeightsAreEqual) {
  const std::vector<Label> labels{0, 1, 1, 0, 1, 0};
  const auto w = class_balanced_weights(labels);
  for (const double v : w) EXPECT_EQ(v, w.front());
}

TEST(Sampler, MinorityDrawnHalfTheTimeAtFiftyToOne) {
  std::vector<Label> labels(5100, 0);
  for (std::size_t i = 0; i < 100; ++i) labels[i * 51] = 1;
  const auto weights = class_balanced_weights(labels);
  const WeightedSampler sampler(weights);
  Rng rng(3);
  int minority = 0;
  for (int i = 0; i < 100000; ++i) minority += labels[sampler.draw(rng)];
  EXPECT_NEAR(minority / 100000.0, 0.5, 0.01);
}

TEST(MlpTrain, SeparableToyReachesPerfectAccuracy) {
  std::vector<FeatureVector> x;
  std::vector<Label> y;
  separable_toy(x, y, 1);
  MlpConfig config;
  config.input_dim = 2;
  config.seed = 7;
  const MlpModel model = mlp_train(x, y, config);
  const auto p = mlp_predict(model, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(p[i] >= 0.5 ? 1 : 0, y[i]) << "row " << i;
}

TEST(MlpTrain, LossDecreasesOnFixedBatch) {
  std::vector<FeatureVector> x;
  std::vector<Label> y;
  separable_toy(x, y, 2);
  MlpConfig config;
  config.input_dim = 2;
  config.dropout = 0.0;
  config.epochs = 1;
  config.batch_size = x.size();
  MlpModel model = MlpModel::create(config);
  const MatrixXd xm = to_matrix(x);
  VectorXd ym(static_cast<Eigen::Index>(y.size()));
  for (std::size_t i = 0; i < y.size(); ++i) ym[static_cast<Eigen::Index>(i)] = y[i];

  Adam adam(1e-3);
  double previous = mlp_loss(model, xm, ym, NormMode::kBatch);
  const double start = previous;
  for (int step = 1; step <= 10; ++step) {
    adam.step(model, mlp_gradients(model, xm, ym, NormMode::kBatch));
    const double loss = mlp_loss(model, xm, ym, NormMode::kBatch);
    EXPECT_LT(loss, previous) << "step " << step;
    previous = loss;
  }
  EXPECT_LT(previous, start);
}

TEST(MlpTrain, DeterministicForFixedSeed) {
  std::vector<FeatureVector> x;
  std::vector<Label> y;
  separable_toy(x, y, 3);
  MlpConfig config = small_config(2, 11);
  config.dropout = 0.25;
  config.epochs = 3;
  const Json a = mlp_train(x, y, config);
  const Json b = mlp_train(x, y, config);
  EXPECT_EQ(a.dump(), b.dump());
}

TEST(MlpTrain, Errors) {
  std::vector<FeatureVector> x{{0.0}, {1.0}, {2.0}};
  std::vector<Label> y{1, 1, 1};
  MlpConfig config = small_config(1, 0);
  EXPECT_THROW(mlp_train(x, y, config), ParameterError);
  config.epochs = 0;
  y = {0, 1, 0};
  EXPECT_THROW(mlp_train(x, y, config), ParameterError);
}

TEST(MlpPredict, ZeroWeightsGiveOneHalf) {
  MlpModel model = MlpModel::create(small_config(3, 1));
  for (auto& d : model.dense) {
    d.weight.setZero();
    d.bias.setZero();
  }
  const std::vector<FeatureVector> x{{1.0, 2.0, 3.0}, {-5.0, 0.0, 9.0}};
  for (const double p : mlp_predict(model, x)) EXPECT_EQ(p, 0.5);
}

TEST(MlpPredict, BatchIndependentAndInRange) {
  std::vector<FeatureVector> x;
  std::vector<Label> y;
  separable_toy(x, y, 4);
  MlpConfig config = small_config(2, 3);
  config.epochs = 2;
  const MlpModel model = mlp_train(x, y, config);
  const auto batch = mlp_predict(model, x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto one = mlp_predict(model, std::vector<FeatureVector>{x[i]});
    EXPECT_NEAR(one[0], batch[i], 1e-9);
    EXPECT_GT(batch[i], 0.0);
    EXPECT_LT(batch[i], 1.0);
  }
  EXPECT_THROW(mlp_predict(model, std::vector<FeatureVector>{{1.0, 2.0, 3.0}}), ParameterError);
}

TEST(MlpModel, JsonRoundTrip) {
  std::vector<FeatureVector> x;
  std::vector<Label> y;
  separable_toy(x, y, 5);
  MlpConfig config = small_config(2, 8);
  config.epochs = 1;
  const MlpModel model = mlp_train(x, y, config);
  const Json j = model;
  const MlpModel back = Json::parse(j.dump()).get<MlpModel>();
  EXPECT_EQ(mlp_predict(back, x), mlp_predict(model, x));
  EXPECT_EQ(Json(back).dump(), j.dump());
}

}  // namespace
}  // namespace hmme
