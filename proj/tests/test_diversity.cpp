#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "hmme/diversity.hpp"
#include "hmme/error.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace hmme {
namespace {

std::vector<double> random_distribution(std::size_t k, Rng& rng) {
  std::vector<double> p(k);
  for (auto& v : p) v = rng.uniform();
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  for (auto& v : p) v /= total;
  return p;
}

HmmParams permuted(const HmmParams& model, const std::vector<Eigen::Index>& perm) {
  HmmParams out = model;
  const auto n = static_cast<Eigen::Index>(model.n());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.pi[perm[i]] = model.pi[i];
    out.B.row(perm[i]) = model.B.row(i);
    for (Eigen::Index j = 0; j < n; ++j) out.A(perm[i], perm[j]) = model.A(i, j);
  }
  return out;
}

TEST(Stationary, ErgodicChainByPowerIteration) {
  Matrix a(2, 2);
  a << 0.9, 0.1, 0.5, 0.5;
  const auto result = stationary_distribution(a);
  EXPECT_FALSE(result.degenerate);
  EXPECT_NEAR(result.distribution[0], 5.0 / 6.0, 1e-10);
  EXPECT_NEAR(result.distribution[1], 1.0 / 6.0, 1e-10);
  EXPECT_GT(result.iterations, 0U);
}

TEST(Stationary, IdentityIsDegenerate) {
  const auto result = stationary_distribution(Matrix::Identity(2, 2));
  EXPECT_TRUE(result.degenerate);
  EXPECT_NEAR(result.distribution[0], 0.5, 1e-9);
  EXPECT_NEAR(result.distribution[1], 0.5, 1e-9);
}

TEST(Stationary, PeriodicChainIsDegenerate) {
  Matrix a(2, 2);
  a << 0.0, 1.0, 1.0, 0.0;
  const auto result = stationary_distribution(a);
  EXPECT_TRUE(result.degenerate);
  EXPECT_NEAR(result.distribution[0], 0.5, 1e-9);
}

TEST(Stationary, FixedPointOnRandomChains) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const HmmParams model = init_random(1 + rng.below(6), 2, rng);
    const auto result = stationary_distribution(model.A);
    const Eigen::RowVectorXd v = result.distribution.transpose();
    EXPECT_NEAR(v.sum(), 1.0, 1e-12);
    EXPECT_LT((v * model.A - v).lpNorm<1>(), 1e-10);
  }
}

TEST(Stationary, RejectsNonStochastic) {
  EXPECT_THROW(stationary_distribution(Matrix::Constant(2, 2, 0.7)), ParameterError);
  EXPECT_THROW(stationary_distribution(Matrix(2, 3)), ParameterError);
}

TEST(Hellinger, WorkedExamples) {
  const std::vector<double> p{1.0, 0.0};
  const std::vector<double> q{0.0, 1.0};
  EXPECT_NEAR(hellinger(p, q), 1.0, 1e-15);
  const std::vector<double> a{0.5, 0.5};
  const std::vector<double> b{0.9, 0.1};
  const double expected =
      std::sqrt(std::pow(std::sqrt(0.5) - std::sqrt(0.9), 2) + std::pow(std::sqrt(0.5) - std::sqrt(0.1), 2)) /
      std::sqrt(2.0);
  EXPECT_NEAR(hellinger(a, b), expected, 1e-15);
  EXPECT_NEAR(hellinger(a, b), 0.32492, 1e-5);
}

TEST(Hellinger, MetricProperties) {
  Rng rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(6);
    const auto p = random_distribution(k, rng);
    const auto q = random_distribution(k, rng);
    const auto r = random_distribution(k, rng);
    const double pq = hellinger(p, q);
    EXPECT_GE(pq, 0.0);
    EXPECT_LE(pq, 1.0);
    EXPECT_NEAR(pq, hellinger(q, p), 1e-12);
    EXPECT_LE(pq, hellinger(p, r) + hellinger(r, q) + 1e-12);
    EXPECT_EQ(hellinger(p, p), 0.0);
  }
}

TEST(Hellinger, RejectsBadInput) {
  const std::vector<double> p{0.5, 0.5};
  const std::vector<double> q{0.5, 0.4};
  const std::vector<double> r{1.0};
  EXPECT_THROW(hellinger(p, q), ParameterError);
  EXPECT_THROW(hellinger(p, r), ParameterError);
}

TEST(Assignment, MatchesExhaustiveSearch) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const auto rows = static_cast<Eigen::Index>(1 + rng.below(5));
    const auto cols = rows + static_cast<Eigen::Index>(rng.below(3));
    Matrix cost(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) cost(i, j) = rng.below(4) == 0 ? 0.5 : rng.uniform();
    const auto match = solve_assignment(cost);
    ASSERT_EQ(match.size(), static_cast<std::size_t>(rows));
    std::vector<bool> used(static_cast<std::size_t>(cols), false);
    double total = 0.0;
    for (Eigen::Index i = 0; i < rows; ++i) {
      ASSERT_LT(match[static_cast<std::size_t>(i)], static_cast<std::size_t>(cols));
      ASSERT_FALSE(used[match[static_cast<std::size_t>(i)]]);
      used[match[static_cast<std::size_t>(i)]] = true;
      total += cost(i, static_cast<Eigen::Index>(match[static_cast<std::size_t>(i)]));
    }
    EXPECT_NEAR(total, oracle::assignment_cost(cost), 1e-12) << "trial " << trial;
  }
}

TEST(Assignment, RejectsMoreRowsThanColumns) {
  EXPECT_THROW(solve_assignment(Matrix::Zero(3, 2)), ParameterError);
}

TEST(HmmDistance, SelfDistanceIsZero) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const HmmParams model = init_random(1 + rng.below(5), 3, rng);
    EXPECT_EQ(hmm_distance(model, model), 0.0);
  }
}

TEST(HmmDistance, OppositeSingleStateModels) {
  HmmParams a{Vector::Ones(1), Matrix::Ones(1, 1), Matrix(1, 2)};
  HmmParams b = a;
  a.B << 1.0, 0.0;
  b.B << 0.0, 1.0;
  EXPECT_NEAR(hmm_distance(a, b), 1.0, 1e-15);
}

TEST(HmmDistance, PermutedEmissionsAreZero) {
  HmmParams a{Vector::Constant(2, 0.5), Matrix::Constant(2, 2, 0.5), Matrix(2, 3)};
  a.B << 0.7, 0.2, 0.1, 0.1, 0.3, 0.6;
  HmmParams b = a;
  b.B.row(0) = a.B.row(1);
  b.B.row(1) = a.B.row(0);
  EXPECT_NEAR(hmm_distance(a, b), 0.0, 1e-12);
}

TEST(HmmDistance, SymmetricAndPermutationInvariant) {
  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    const HmmParams a = init_random(2 + rng.below(4), 4, rng);
    const HmmParams b = init_random(2 + rng.below(4), 4, rng);
    const double d = hmm_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, 1.0);
    EXPECT_NEAR(d, hmm_distance(b, a), 1e-9);
    std::vector<Eigen::Index> perm(a.n());
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    EXPECT_NEAR(d, hmm_distance(permuted(a, perm), b), 1e-9);
  }
}

TEST(HmmDistance, UnmatchedStatesCostOne) {
  // Single-state a matches one state of b exactly; b's other state is left
  // over at weight v_b[1].
  HmmParams a{Vector::Ones(1), Matrix::Ones(1, 1), Matrix(1, 2)};
  a.B << 0.5, 0.5;
  HmmParams b{Vector::Constant(2, 0.5), Matrix::Constant(2, 2, 0.5), Matrix(2, 2)};
  b.B << 0.5, 0.5, 0.9, 0.1;
  // Matched weight (1 + 0.5) / 2 at cost 0; unmatched weight 0.5 at cost 1.
  EXPECT_NEAR(hmm_distance(a, b), 0.5 / 1.25, 1e-12);
}

TEST(HmmDistance, RejectsVocabularyMismatch) {
  Rng rng(1);
  EXPECT_THROW(hmm_distance(init_random(2, 3, rng), init_random(2, 4, rng)), ParameterError);
}

EnsembleModel tiny_ensemble(std::size_t n_pos, std::size_t n_neg) {
  const auto pair = testing::moderately_separated_pair();
  const auto data = testing::sample_dataset(pair.positive, pair.negative, 20, 20, 30, 5);
  EnsembleConfig config;
  config.n_positive = n_pos;
  config.n_negative = n_neg;
  config.subset_factor = 0.5;
  config.train.max_iters = 5;
  return train_ensemble(data, config);
}

TEST(SimilarityMatrix, SingleModelPerClass) {
  const auto sim = similarity_matrix(tiny_ensemble(1, 1));
  ASSERT_EQ(sim.values.rows(), 2);
  EXPECT_EQ(sim.values(0, 0), 1.0);
  EXPECT_EQ(sim.values(1, 1), 1.0);
  EXPECT_EQ(sim.labels, (std::vector<std::string>{"pos_0", "neg_0"}));
}

TEST(SimilarityMatrix, SymmetricAndSerialEqualsParallel) {
  const auto ensemble = tiny_ensemble(3, 4);
  const auto serial = similarity_matrix(ensemble, Execution::Serial);
  const auto parallel = similarity_matrix(ensemble, Execution::Parallel);
  EXPECT_EQ(serial.values, parallel.values);
  EXPECT_LE((serial.values - serial.values.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  for (Eigen::Index i = 0; i < serial.values.rows(); ++i) EXPECT_EQ(serial.values(i, i), 1.0);
}

TEST(SimilarityMatrix, IdenticalModelsHaveUnitSimilarity) {
  auto ensemble = tiny_ensemble(2, 2);
  ensemble.positive_models[1] = ensemble.positive_models[0];
  const auto sim = similarity_matrix(ensemble);
  EXPECT_EQ(sim.values(0, 1), 1.0);
}

TEST(SimilarityMatrix, IntraClassMeanAndCsv) {
  SimilarityMatrix sim;
  sim.labels = {"pos_0", "pos_1", "neg_0", "neg_1"};
  sim.values = Matrix::Ones(4, 4);
  sim.values(0, 1) = sim.values(1, 0) = 0.5;
  sim.values(2, 3) = sim.values(3, 2) = 0.7;
  sim.values(0, 2) = sim.values(2, 0) = 0.0;
  EXPECT_NEAR(mean_intra_class_similarity(sim, 2), 0.6, 1e-15);

  std::ostringstream out;
  write_csv(out, sim);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "model,pos_0,pos_1,neg_0,neg_1");
  std::getline(in, line);
  EXPECT_EQ(line, "pos_0,1,0.5,0,1");
}

}  // namespace
}  // namespace hmme
