#include "hmme/classifier.hpp"

#include <algorithm>
#include <cmath>

#include "hmme/error.hpp"

namespace hmme {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct HiddenCache {
  MatrixXd input;
  MatrixXd xhat;
  VectorXd inv_std;
  VectorXd batch_mean;
  VectorXd batch_var;  // biased
  MatrixXd mask;       // ReLU indicator times dropout scale
};

struct ForwardPass {
  std::vector<HiddenCache> hidden;
  MatrixXd last;  // input to the output layer
  VectorXd logits;
};

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// max(z, 0) - z y + log(1 + exp(-|z|))
double bce_with_logits(double z, double y) {
  return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
}

ForwardPass forward(const MlpModel& model, const MatrixXd& x, NormMode mode, double dropout, Rng* rng) {
  ForwardPass pass;
  MatrixXd h = x;
  const auto rows = x.rows();
  for (std::size_t l = 0; l < model.hidden_dims.size(); ++l) {
    const DenseLayer& dense = model.dense[l];
    const BatchNormLayer& bn = model.norm[l];
    HiddenCache cache;
    cache.input = std::move(h);
    MatrixXd z = cache.input * dense.weight.transpose();
    z.rowwise() += dense.bias.transpose();

    if (mode == NormMode::kBatch) {
      cache.batch_mean = z.colwise().mean().transpose();
      cache.batch_var =
          (z.rowwise() - cache.batch_mean.transpose()).array().square().colwise().mean().transpose();
      cache.inv_std = (cache.batch_var.array() + kBatchNormEps).rsqrt().matrix();
      cache.xhat = (z.rowwise() - cache.batch_mean.transpose()).array().rowwise() *
                   cache.inv_std.transpose().array();
    } else {
      cache.inv_std = (bn.running_var.array() + kBatchNormEps).rsqrt().matrix();
      cache.xhat = (z.rowwise() - bn.running_mean.transpose()).array().rowwise() *
                   cache.inv_std.transpose().array();
    }
    MatrixXd y = cache.xhat.array().rowwise() * bn.gamma.transpose().array();
    y.rowwise() += bn.beta.transpose();

    cache.mask = (y.array() > 0.0).cast<double>().matrix();
    if (dropout > 0.0 && rng != nullptr) {
      const double keep_scale = 1.0 / (1.0 - dropout);
      for (Eigen::Index c = 0; c < cache.mask.cols(); ++c)
        for (Eigen::Index r = 0; r < rows; ++r)
          cache.mask(r, c) *= rng->uniform() < dropout ? 0.0 : keep_scale;
    }
    h = y.cwiseProduct(cache.mask);
    pass.hidden.push_back(std::move(cache));
  }
  const DenseLayer& out = model.dense.back();
  pass.logits = (h * out.weight.transpose()).col(0);
  pass.logits.array() += out.bias[0];
  pass.last = std::move(h);
  return pass;
}

MlpGradients backward(const MlpModel& model, const ForwardPass& pass, const VectorXd& dlogits,
                      NormMode mode) {
  const std::size_t hidden = model.hidden_dims.size();
  MlpGradients g;
  g.dense.resize(hidden + 1);
  g.gamma.resize(hidden);
  g.beta.resize(hidden);

  const DenseLayer& out = model.dense.back();
  g.dense[hidden].weight = dlogits.transpose() * pass.last;
  g.dense[hidden].bias = VectorXd::Constant(1, dlogits.sum());
  MatrixXd dh = dlogits * out.weight;

  for (std::size_t l = hidden; l-- > 0;) {
    const HiddenCache& cache = pass.hidden[l];
    const BatchNormLayer& bn = model.norm[l];
    const MatrixXd dy = dh.cwiseProduct(cache.mask);
    g.gamma[l] = dy.cwiseProduct(cache.xhat).colwise().sum().transpose();
    g.beta[l] = dy.colwise().sum().transpose();
    const MatrixXd dxhat = dy.array().rowwise() * bn.gamma.transpose().array();

    MatrixXd dz;
    if (mode == NormMode::kBatch) {
      const double rows = static_cast<double>(dxhat.rows());
      const Eigen::RowVectorXd sum_dxhat = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(cache.xhat).colwise().sum();
      MatrixXd centered = rows * dxhat;
      centered.rowwise() -= sum_dxhat;
      centered -= (cache.xhat.array().rowwise() * sum_dxhat_xhat.array()).matrix();
      dz = (centered.array().rowwise() * (cache.inv_std.transpose().array() / rows)).matrix();
    } else {
      dz = (dxhat.array().rowwise() * cache.inv_std.transpose().array()).matrix();
    }
    g.dense[l].weight = dz.transpose() * cache.input;
    g.dense[l].bias = dz.colwise().sum().transpose();
    dh = dz * model.dense[l].weight;
  }
  return g;
}

VectorXd loss_gradient(const VectorXd& logits, const VectorXd& y, LossReduction reduction) {
  VectorXd d(logits.size());
  for (Eigen::Index i = 0; i < logits.size(); ++i) d[i] = sigmoid(logits[i]) - y[i];
  if (reduction == LossReduction::kMean) d /= static_cast<double>(logits.size());
  return d;
}

double loss_value(const VectorXd& logits, const VectorXd& y, LossReduction reduction) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) total += bce_with_logits(logits[i], y[i]);
  return reduction == LossReduction::kMean ? total / static_cast<double>(logits.size()) : total;
}

void check_batch(const MlpModel& model, const MatrixXd& x, const VectorXd& y) {
  if (x.rows() < 1) throw ParameterError("empty batch");
  if (static_cast<std::size_t>(x.cols()) != model.input_dim)
    throw ParameterError("feature dimension " + std::to_string(x.cols()) + " does not match input_dim " +
                         std::to_string(model.input_dim));
  if (y.size() != x.rows()) throw ParameterError("label count does not match batch size");
}

// Flat views over every trainable tensor, in a fixed order shared by the
// model and its gradients.
template <typename Grads, typename Visitor>
void visit_blocks(MlpModel& model, Grads& grads, Visitor&& visit) {
  for (std::size_t l = 0; l < model.dense.size(); ++l) {
    visit(model.dense[l].weight.data(), grads.dense[l].weight.data(), model.dense[l].weight.size());
    visit(model.dense[l].bias.data(), grads.dense[l].bias.data(), model.dense[l].bias.size());
  }
  for (std::size_t l = 0; l < model.norm.size(); ++l) {
    visit(model.norm[l].gamma.data(), grads.gamma[l].data(), model.norm[l].gamma.size());
    visit(model.norm[l].beta.data(), grads.beta[l].data(), model.norm[l].beta.size());
  }
}


}  // namespace

void Adam::step(MlpModel& model, const MlpGradients& grads) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  std::size_t block = 0;
  visit_blocks(model, grads, [&](double* p, const double* g, Eigen::Index size) {
    if (block == first_.size()) {
      first_.push_back(VectorXd::Zero(size));
      second_.push_back(VectorXd::Zero(size));
    }
    VectorXd& m = first_[block];
    VectorXd& v = second_[block];
    for (Eigen::Index i = 0; i < size; ++i) {
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
      p[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + kEps);
    }
    ++block;
  });
}

void MlpConfig::validate() const {
  if (input_dim < 1) throw ParameterError("input_dim must be >= 1");
  if (hidden_dims.empty()) throw ParameterError("hidden_dims must be non-empty");
  for (const std::size_t h : hidden_dims)
    if (h < 1) throw ParameterError("hidden dimensions must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ParameterError("dropout must lie in [0, 1)");
  if (!(learning_rate > 0.0)) throw ParameterError("learning_rate must be > 0");
  if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
  if (epochs < 1) throw ParameterError("epochs must be >= 1");
}

MlpModel MlpModel::create(const MlpConfig& config) {
  if (config.input_dim < 1) throw ParameterError("input_dim must be >= 1");
  MlpModel model;
  model.input_dim = config.input_dim;
  model.hidden_dims = config.hidden_dims;
  model.dropout = config.dropout;
  Rng rng(derive_seed(config.seed, 0));
  std::size_t fan_in = config.input_dim;
  auto layer_sizes = config.hidden_dims;
  layer_sizes.push_back(1);
  for (const std::size_t fan_out : layer_sizes) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    DenseLayer dense{MatrixXd(fan_out, fan_in), VectorXd(fan_out)};
    for (Eigen::Index r = 0; r < dense.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < dense.weight.cols(); ++c)
        dense.weight(r, c) = (2.0 * rng.uniform() - 1.0) * bound;
    for (Eigen::Index r = 0; r < dense.bias.size(); ++r) dense.bias[r] = (2.0 * rng.uniform() - 1.0) * bound;
    model.dense.push_back(std::move(dense));
    fan_in = fan_out;
  }
  for (const std::size_t h : config.hidden_dims) {
    const auto hi = static_cast<Eigen::Index>(h);
    model.norm.push_back({VectorXd::Ones(hi), VectorXd::Zero(hi), VectorXd::Zero(hi), VectorXd::Ones(hi)});
  }
  return model;
}

void MlpModel::validate() const {
  if (dense.size() != hidden_dims.size() + 1 || norm.size() != hidden_dims.size())
    throw ParameterError("MLP layer counts do not match hidden_dims");
  auto fan_in = static_cast<Eigen::Index>(input_dim);
  for (std::size_t l = 0; l < dense.size(); ++l) {
    const Eigen::Index fan_out = l < hidden_dims.size() ? static_cast<Eigen::Index>(hidden_dims[l]) : 1;
    if (dense[l].weight.rows() != fan_out || dense[l].weight.cols() != fan_in || dense[l].bias.size() != fan_out)
      throw ParameterError("MLP layer " + std::to_string(l) + " has the wrong shape");
    if (l < norm.size()) {
      const auto& bn = norm[l];
      if (bn.gamma.size() != fan_out || bn.beta.size() != fan_out || bn.running_mean.size() != fan_out ||
          bn.running_var.size() != fan_out)
        throw ParameterError("MLP batch-norm " + std::to_string(l) + " has the wrong shape");
    }
    fan_in = fan_out;
  }
}

double mlp_loss(const MlpModel& model, const MatrixXd& x, const VectorXd& y, NormMode mode,
                LossReduction reduction) {
  check_batch(model, x, y);
  return loss_value(forward(model, x, mode, 0.0, nullptr).logits, y, reduction);
}

MlpGradients mlp_gradients(const MlpModel& model, const MatrixXd& x, const VectorXd& y, NormMode mode,
                           LossReduction reduction) {
  check_batch(model, x, y);
  const ForwardPass pass = forward(model, x, mode, 0.0, nullptr);
  return backward(model, pass, loss_gradient(pass.logits, y, reduction), mode);
}

std::vector<double> class_balanced_weights(std::span<const Label> labels) {
  std::size_t pos = 0;
  for (const Label l : labels) pos += l == 1 ? 1 : 0;
  const std::size_t neg = labels.size() - pos;
  std::vector<double> w(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    w[i] = 1.0 / static_cast<double>(labels[i] == 1 ? pos : neg);
  return w;
}

WeightedSampler::WeightedSampler(std::span<const double> weights) {
  if (weights.empty()) throw ParameterError("WeightedSampler: no weights");
  double acc = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0)) throw ParameterError("WeightedSampler: negative weight");
    acc += w;
    cumulative_.push_back(acc);
  }
  if (!(acc > 0.0)) throw ParameterError("WeightedSampler: weights sum to zero");
}

std::size_t WeightedSampler::draw(Rng& rng) const {
  const double u = rng.uniform() * cumulative_.back();
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

MatrixXd to_matrix(std::span<const FeatureVector> features) {
  if (features.empty()) throw ParameterError("no feature vectors");
  const std::size_t dim = features.front().size();
  MatrixXd x(features.size(), dim);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != dim) throw ParameterError("feature vectors differ in length");
    for (std::size_t k = 0; k < dim; ++k)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = features[i][k];
  }
  return x;
}

MlpModel mlp_train(std::span<const FeatureVector> features, std::span<const Label> labels,
                   const MlpConfig& config) {
  config.validate();
  if (features.size() != labels.size()) throw ParameterError("feature and label counts differ");
  std::size_t pos = 0;
  for (const Label l : labels) {
    if (l != 0 && l != 1) throw ParameterError("labels must be 0 or 1");
    pos += l == 1 ? 1 : 0;
  }
  if (pos < 2 || labels.size() - pos < 2) throw ParameterError("mlp_train needs >= 2 examples of each class");

  const MatrixXd x = to_matrix(features);
  MlpModel model = MlpModel::create(config);
  if (static_cast<std::size_t>(x.cols()) != model.input_dim)
    throw ParameterError("feature dimension does not match input_dim");

  const auto weights = class_balanced_weights(labels);
  const WeightedSampler sampler(weights);
  Rng rng(derive_seed(config.seed, 1));
  Adam adam(config.learning_rate);
  const std::size_t steps = (features.size() + config.batch_size - 1) / config.batch_size;
  const auto batch = static_cast<Eigen::Index>(config.batch_size);
  MatrixXd xb(batch, x.cols());
  VectorXd yb(batch);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t step = 0; step < steps; ++step) {
      for (Eigen::Index r = 0; r < batch; ++r) {
        const std::size_t i = sampler.draw(rng);
        xb.row(r) = x.row(static_cast<Eigen::Index>(i));
        yb[r] = labels[i];
      }
      const ForwardPass pass = forward(model, xb, NormMode::kBatch, config.dropout, &rng);
      const MlpGradients grads = backward(model, pass, loss_gradient(pass.logits, yb, LossReduction::kMean),
                                    NormMode::kBatch);
      // Running statistics: exponential moving average, unbiased variance.
      const double correction = batch > 1 ? static_cast<double>(batch) / static_cast<double>(batch - 1) : 1.0;
      for (std::size_t l = 0; l < model.norm.size(); ++l) {
        auto& bn = model.norm[l];
        bn.running_mean = (1.0 - kBatchNormMomentum) * bn.running_mean + kBatchNormMomentum * pass.hidden[l].batch_mean;
        bn.running_var = (1.0 - kBatchNormMomentum) * bn.running_var +
                         kBatchNormMomentum * correction * pass.hidden[l].batch_var;
      }
      adam.step(model, grads);
    }
  }
  return model;
}

std::vector<double> mlp_predict(const MlpModel& model, std::span<const FeatureVector> features) {
  const MatrixXd x = to_matrix(features);
  if (static_cast<std::size_t>(x.cols()) != model.input_dim)
    throw ParameterError("feature dimension does not match input_dim");
  const VectorXd logits = forward(model, x, NormMode::kRunning, 0.0, nullptr).logits;
  std::vector<double> out(static_cast<std::size_t>(logits.size()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(logits[static_cast<Eigen::Index>(i)]);
  return out;
}

double gradient_check(const MlpModel& model, const MatrixXd& x, const VectorXd& y) {
  constexpr double kStep = 1e-5;
  constexpr double kScaleFloor = 1e-6;
  MlpGradients analytic = mlp_gradients(model, x, y, NormMode::kBatch);
  MlpModel probe = model;
  double worst = 0.0;
  visit_blocks(probe, analytic, [&](double* p, const double* g, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) {
      const double saved = p[i];
      p[i] = saved + kStep;
      const double up = mlp_loss(probe, x, y, NormMode::kBatch);
      p[i] = saved - kStep;
      const double down = mlp_loss(probe, x, y, NormMode::kBatch);
      p[i] = saved;
      const double numeric = (up - down) / (2.0 * kStep);
      const double err = std::abs(g[i] - numeric) / std::max(std::abs(g[i]) + std::abs(numeric), kScaleFloor);
      worst = std::max(worst, err);
    }
  });
  return worst;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json vector_json(const VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

VectorXd vector_from(const Json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

void to_json(Json& j, const MlpModel& model) {
  j = Json::object();
  j["input_dim"] = model.input_dim;
  j["hidden_dims"] = model.hidden_dims;
  j["dropout"] = model.dropout;
  Json layers = Json::array();
  for (const auto& dense : model.dense) {
    // Row-major flattening: weight[r * cols + c].
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(dense.weight.size()));
    for (Eigen::Index r = 0; r < dense.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < dense.weight.cols(); ++c) flat.push_back(dense.weight(r, c));
    layers.push_back({{"rows", dense.weight.rows()},
                      {"cols", dense.weight.cols()},
                      {"weight", flat},
                      {"bias", vector_json(dense.bias)}});
  }
  j["layers"] = std::move(layers);
  Json norms = Json::array();
  for (const auto& bn : model.norm) {
    norms.push_back({{"gamma", vector_json(bn.gamma)},
                     {"beta", vector_json(bn.beta)},
                     {"running_mean", vector_json(bn.running_mean)},
                     {"running_var", vector_json(bn.running_var)}});
  }
  j["batch_norm"] = std::move(norms);
}

void from_json(const Json& j, MlpModel& model) {
  try {
    model.input_dim = j.at("input_dim").get<std::size_t>();
    model.hidden_dims = j.at("hidden_dims").get<std::vector<std::size_t>>();
    model.dropout = j.at("dropout").get<double>();
    model.dense.clear();
    for (const auto& layer : j.at("layers")) {
      const auto rows = layer.at("rows").get<Eigen::Index>();
      const auto cols = layer.at("cols").get<Eigen::Index>();
      const auto flat = layer.at("weight").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(flat.size()) != rows * cols) throw ParameterError("MLP JSON: weight size mismatch");
      DenseLayer dense{MatrixXd(rows, cols), vector_from(layer.at("bias"))};
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) dense.weight(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
      model.dense.push_back(std::move(dense));
    }
    model.norm.clear();
    for (const auto& bn : j.at("batch_norm")) {
      model.norm.push_back({vector_from(bn.at("gamma")), vector_from(bn.at("beta")),
                            vector_from(bn.at("running_mean")), vector_from(bn.at("running_var"))});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("MLP JSON: ") + e.what());
  }
  model.validate();
}

}  // namespace hmme
