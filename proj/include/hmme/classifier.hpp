#pragma once

// Fully connected binary classifier trained on HMM-e feature vectors.
// Each hidden layer is linear -> batch-norm -> ReLU -> dropout; the output
// layer is a single logit. Forward and backward passes are written out by
// hand on Eigen matrices (rows are examples).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hmme/dataset.hpp"
#include "hmme/ensemble.hpp"
#include "hmme/rng.hpp"

namespace hmme {

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{512, 256, 128};
  double dropout = 0.25;
  double learning_rate = 1e-3;
  std::size_t batch_size = 64;
  std::size_t epochs = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct BatchNormLayer {
  Eigen::VectorXd gamma;
  Eigen::VectorXd beta;
  Eigen::VectorXd running_mean;
  Eigen::VectorXd running_var;
};

struct MlpModel {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims;
  double dropout = 0.0;
  std::vector<DenseLayer> dense;      // hidden_dims.size() + 1 layers
  std::vector<BatchNormLayer> norm;   // one per hidden layer

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases; identity
  // batch-norm.
  static MlpModel create(const MlpConfig& config);
  void validate() const;
};

// Gradients mirror the trainable parameters; running statistics have none.
struct MlpGradients {
  std::vector<DenseLayer> dense;
  std::vector<Eigen::VectorXd> gamma;
  std::vector<Eigen::VectorXd> beta;
};

enum class NormMode {
  kRunning,  // inference: running mean / variance
  kBatch,    // statistics of the current batch
};

enum class LossReduction { kMean, kSum };

constexpr double kBatchNormEps = 1e-5;
constexpr double kBatchNormMomentum = 0.1;

// Binary cross-entropy on logits, without dropout.
double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                NormMode mode, LossReduction reduction = LossReduction::kMean);

// Analytic gradients of mlp_loss.
MlpGradients mlp_gradients(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           NormMode mode, LossReduction reduction = LossReduction::kMean);

// Weight of example i is 1 / (count of its class).
std::vector<double> class_balanced_weights(std::span<const Label> labels);

// Draws indices with replacement in proportion to fixed weights.
class WeightedSampler {
 public:
  explicit WeightedSampler(std::span<const double> weights);
  std::size_t draw(Rng& rng) const;

 private:
  std::vector<double> cumulative_;
};

// Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and a constant rate.
class Adam {
 public:
  explicit Adam(double learning_rate) : lr_(learning_rate) {}
  void step(MlpModel& model, const MlpGradients& grads);

 private:
  double lr_;
  long t_ = 0;
  std::vector<Eigen::VectorXd> first_;
  std::vector<Eigen::VectorXd> second_;
};

MlpModel mlp_train(std::span<const FeatureVector> features, std::span<const Label> labels,
                   const MlpConfig& config);

// Probabilities in (0, 1); batch-norm uses running statistics.
std::vector<double> mlp_predict(const MlpModel& model, std::span<const FeatureVector> features);

// Largest |analytic - numeric| / max(|analytic| + |numeric|, 1e-6) over all
// trainable parameters, with central differences of step 1e-5. Runs in
// per-batch normalization mode with dropout off.
double gradient_check(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

Eigen::MatrixXd to_matrix(std::span<const FeatureVector> features);

void to_json(Json& j, const MlpModel& model);
void from_json(const Json& j, MlpModel& model);

}  // namespace hmme
