#include <gtest/gtest.h>

#include <cmath>

#include "hmme/error.hpp"
#include "hmme/hmm.hpp"
#include "hmme/rng.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace hmme {
namespace {

HmmParams two_state_example() {
  HmmParams model{Vector(2), Matrix(2, 2), Matrix(2, 2)};
  model.pi << 0.6, 0.4;
  model.A << 0.7, 0.3, 0.4, 0.6;
  model.B << 0.9, 0.1, 0.2, 0.8;
  return model;
}

TokenSequence random_sequence(std::size_t length, std::size_t m, Rng& rng) {
  TokenSequence seq(length);
  for (auto& tok : seq) tok = static_cast<Token>(rng.below(m));
  return seq;
}

TEST(InitRandom, SingleStateForcesPiAndA) {
  Rng rng(3);
  const HmmParams model = init_random(1, 2, rng);
  EXPECT_EQ(model.pi[0], 1.0);
  EXPECT_EQ(model.A(0, 0), 1.0);
  EXPECT_NEAR(model.B.row(0).sum(), 1.0, 1e-15);
}

TEST(InitRandom, SameSeedIsBitwiseIdentical) {
  Rng a(99);
  Rng b(99);
  EXPECT_EQ(init_random(4, 3, a), init_random(4, 3, b));
}

TEST(InitRandom, RowsSumToOne) {
  Rng rng(7);
  const HmmParams model = init_random(3, 5, rng);
  EXPECT_NEAR(model.pi.sum(), 1.0, 1e-12);
  for (Eigen::Index i = 0; i < 3; ++i) {
    EXPECT_NEAR(model.A.row(i).sum(), 1.0, 1e-12);
    EXPECT_NEAR(model.B.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_NO_THROW(model.validate());
}

TEST(InitRandom, RejectsBadShapes) {
  Rng rng(1);
  EXPECT_THROW(init_random(0, 3, rng), ParameterError);
  EXPECT_THROW(init_random(2, 1, rng), ParameterError);
}

TEST(LogLikelihood, SingleStateIsProductOfEmissions) {
  HmmParams model{Vector::Ones(1), Matrix::Ones(1, 1), Matrix(1, 2)};
  model.B << 0.5, 0.5;
  const TokenSequence seq{0, 0};
  EXPECT_NEAR(log_likelihood(model, seq), std::log(0.25), 1e-15);
}

TEST(LogLikelihood, TwoStateMatchesHandEnumeration) {
  const HmmParams model = two_state_example();
  const TokenSequence seq{0, 1};
  // pi_a B_a0 A_ab B_b1 over the four paths.
  const double expected = 0.6 * 0.9 * 0.7 * 0.1 + 0.6 * 0.9 * 0.3 * 0.8 + 0.4 * 0.2 * 0.4 * 0.1 +
                          0.4 * 0.2 * 0.6 * 0.8;
  EXPECT_NEAR(std::exp(log_likelihood(model, seq)), expected, 1e-15);
}

TEST(LogLikelihood, MatchesPathEnumeration) {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t m = 2 + rng.below(3);
    const std::size_t T = 1 + rng.below(8);
    const HmmParams model = init_random(n, m, rng);
    const TokenSequence seq = random_sequence(T, m, rng);
    const double brute = oracle::likelihood(model, seq);
    const double fast = std::exp(log_likelihood(model, seq));
    EXPECT_LE(std::abs(fast - brute) / brute, 1e-10) << "trial " << trial;
  }
}

TEST(LogLikelihood, SumsToOneOverAllSequences) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const HmmParams model = init_random(1 + rng.below(4), 2, rng);
    double total = 0.0;
    for (unsigned code = 0; code < 64; ++code) {
      TokenSequence seq(6);
      for (unsigned t = 0; t < 6; ++t) seq[t] = (code >> t) & 1U;
      total += std::exp(log_likelihood(model, seq));
    }
    EXPECT_NEAR(total, 1.0, 1e-8);
  }
}

TEST(LogLikelihood, LongSequenceStaysFinite) {
  Rng rng(8);
  const HmmParams model = init_random(5, 4, rng);
  const TokenSequence seq = random_sequence(100000, 4, rng);
  const double ll = log_likelihood(model, seq);
  EXPECT_TRUE(std::isfinite(ll));
  EXPECT_LT(ll, 0.0);
}

TEST(LogLikelihood, RejectsOutOfVocabularyToken) {
  const HmmParams model = two_state_example();
  const TokenSequence seq{0, 2};
  EXPECT_THROW(log_likelihood(model, seq), DomainError);
}

TEST(Viterbi, SingleStatePathIsAllZero) {
  HmmParams model{Vector::Ones(1), Matrix::Ones(1, 1), Matrix(1, 3)};
  model.B << 0.2, 0.3, 0.5;
  const auto result = viterbi(model, TokenSequence{2, 1, 0, 2});
  EXPECT_EQ(result.path, (std::vector<std::size_t>{0, 0, 0, 0}));
  EXPECT_NEAR(result.log_prob, log_likelihood(model, TokenSequence{2, 1, 0, 2}), 1e-15);
}

TEST(Viterbi, TwoStateExampleMatchesEnumeration) {
  const HmmParams model = two_state_example();
  const TokenSequence seq{0, 1};
  const auto best = oracle::best_path(model, seq);
  const auto result = viterbi(model, seq);
  EXPECT_EQ(result.path, best.path);
  EXPECT_NEAR(result.log_prob, std::log(best.probability), 1e-12);
}

TEST(Viterbi, MatchesEnumerationOnRandomModels) {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(4);
    const std::size_t m = 2 + rng.below(3);
    const std::size_t T = 1 + rng.below(7);
    const HmmParams model = init_random(n, m, rng);
    const TokenSequence seq = random_sequence(T, m, rng);
    const auto best = oracle::best_path(model, seq);
    const auto result = viterbi(model, seq);
    ASSERT_EQ(result.path.size(), T);
    EXPECT_EQ(result.path, best.path) << "trial " << trial;
    EXPECT_NEAR(result.log_prob, std::log(best.probability), 1e-10);
    EXPECT_LE(result.log_prob, log_likelihood(model, seq) + 1e-12);
  }
}

TEST(Viterbi, TiesGoToLowerStateId) {
  // Two interchangeable states: every path has the same probability.
  HmmParams model{Vector::Constant(2, 0.5), Matrix::Constant(2, 2, 0.5), Matrix::Constant(2, 2, 0.5)};
  const auto result = viterbi(model, TokenSequence{0, 1, 1});
  EXPECT_EQ(result.path, (std::vector<std::size_t>{0, 0, 0}));
}

TEST(BaumWelch, OneIterationMatchesPosteriorOracle) {
  Rng rng(31);
  TrainConfig config;
  config.max_iters = 1;
  config.floor = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const HmmParams initial = init_random(2, 2 + rng.below(2), rng);
    std::vector<TokenSequence> seqs;
    const std::size_t count = 1 + rng.below(3);
    for (std::size_t s = 0; s < count; ++s) seqs.push_back(random_sequence(2 + rng.below(6), initial.m(), rng));
    const HmmParams expected = oracle::em_step(initial, seqs);
    const HmmParams got = baum_welch(initial, seqs, config).model;
    EXPECT_LE((got.pi - expected.pi).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
    EXPECT_LE((got.A - expected.A).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
    EXPECT_LE((got.B - expected.B).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
  }
}

TEST(BaumWelch, HistoryIsMonotoneWithoutFloor) {
  const HmmParams generator = testing::sticky_model(2, 2, 0.8, 0.85);
  Rng data_rng(4);
  std::vector<TokenSequence> seqs;
  for (int s = 0; s < 20; ++s) seqs.push_back(sample(generator, 6, data_rng));
  TrainConfig config;
  config.n_states = 2;
  config.max_iters = 50;
  config.tol = 0.0;
  config.floor = 0.0;
  Rng rng(9);
  const auto result = baum_welch(seqs, config, rng, 2);
  ASSERT_GE(result.history.size(), 2U);
  for (std::size_t i = 1; i < result.history.size(); ++i)
    EXPECT_GE(result.history[i], result.history[i - 1] - 1e-8) << "iteration " << i;
}

TEST(BaumWelch, HistoryIsMonotoneWithDefaultFloor) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const HmmParams generator = init_random(3, 4, rng);
    std::vector<TokenSequence> seqs;
    for (int s = 0; s < 15; ++s) seqs.push_back(sample(generator, 20, rng));
    TrainConfig config;
    config.n_states = 3;
    const auto result = baum_welch(seqs, config, rng, 4);
    for (std::size_t i = 1; i < result.history.size(); ++i)
      EXPECT_GE(result.history[i], result.history[i - 1] - 1e-6);
    EXPECT_NO_THROW(result.model.validate());
  }
}

TEST(BaumWelch, SingleTokenDataHitsTheFloor) {
  const std::vector<TokenSequence> seqs(5, TokenSequence(10, 0));
  TrainConfig config;
  config.n_states = 1;
  config.floor = 1e-6;
  Rng rng(1);
  const HmmParams model = baum_welch(seqs, config, rng, 3).model;
  const double top = 1.0 / (1.0 + 2e-6);
  EXPECT_NEAR(model.B(0, 0), top, 1e-12);
  EXPECT_NEAR(model.B(0, 1), 1e-6 * top, 1e-15);
  EXPECT_NEAR(model.B(0, 2), 1e-6 * top, 1e-15);
}

TEST(BaumWelch, StopsWhenImprovementFallsBelowTol) {
  const HmmParams generator = testing::sticky_model(2, 3, 0.9, 0.8);
  Rng rng(6);
  std::vector<TokenSequence> seqs;
  for (int s = 0; s < 10; ++s) seqs.push_back(sample(generator, 30, rng));
  TrainConfig config;
  config.n_states = 2;
  config.max_iters = 500;
  config.tol = 1e-3;
  const auto result = baum_welch(seqs, config, rng, 3);
  ASSERT_LT(result.history.size(), 500U);
  const std::size_t last = result.history.size() - 1;
  EXPECT_LT(result.history[last] - result.history[last - 1], 1e-3);
}

TEST(BaumWelch, RejectsBadInput) {
  TrainConfig config;
  config.n_states = 2;
  Rng rng(0);
  EXPECT_THROW(baum_welch(std::vector<TokenSequence>{}, config, rng), ParameterError);
  EXPECT_THROW(baum_welch(std::vector<TokenSequence>{TokenSequence{}}, config, rng), ParameterError);
  config.max_iters = 0;
  EXPECT_THROW(baum_welch(std::vector<TokenSequence>{TokenSequence{0, 1}}, config, rng), ParameterError);
}

TEST(BaumWelch, RecoversGeneratorLikelihood) {
  const HmmParams generator = testing::sticky_model(2, 3, 0.9, 0.9);
  Rng rng(17);
  std::vector<TokenSequence> train;
  for (int s = 0; s < 5000; ++s) train.push_back(sample(generator, 10, rng));
  std::vector<TokenSequence> held_out;
  for (int s = 0; s < 1000; ++s) held_out.push_back(sample(generator, 10, rng));
  TrainConfig config;
  config.n_states = 2;
  config.max_iters = 100;
  config.tol = 1e-6;
  const HmmParams learned = baum_welch(train, config, rng, 3).model;
  double gen_ll = 0.0;
  double fit_ll = 0.0;
  for (const auto& seq : held_out) {
    gen_ll += log_likelihood(generator, seq);
    fit_ll += log_likelihood(learned, seq);
  }
  const double tokens = 10.0 * static_cast<double>(held_out.size());
  EXPECT_LT(std::abs(gen_ll - fit_ll) / tokens, 0.05);
}

TEST(Sample, OneHotModelIsDeterministic) {
  HmmParams model{Vector(2), Matrix(2, 2), Matrix(2, 3)};
  model.pi << 1.0, 0.0;
  model.A << 0.0, 1.0, 1.0, 0.0;
  model.B << 0.0, 0.0, 1.0, 1.0, 0.0, 0.0;
  Rng rng(123);
  EXPECT_EQ(sample(model, 5, rng), (TokenSequence{2, 0, 2, 0, 2}));
}

TEST(Sample, EmissionFrequencyMatches) {
  HmmParams model{Vector::Ones(1), Matrix::Ones(1, 1), Matrix(1, 2)};
  model.B << 0.3, 0.7;
  Rng rng(55);
  int zeros = 0;
  for (int i = 0; i < 100000; ++i) zeros += sample(model, 1, rng)[0] == 0 ? 1 : 0;
  EXPECT_NEAR(zeros / 100000.0, 0.3, 0.01);
}

TEST(Sample, SameSeedSameSequence) {
  Rng init(2);
  const HmmParams model = init_random(3, 4, init);
  Rng a(10);
  Rng b(10);
  EXPECT_EQ(sample(model, 50, a), sample(model, 50, b));
  EXPECT_THROW(sample(model, 0, a), ParameterError);
}

TEST(HmmParams, ValidateRejectsBrokenRows) {
  HmmParams model = two_state_example();
  model.A(0, 0) = 0.8;
  EXPECT_THROW(model.validate(), ParameterError);
}

TEST(HmmParams, JsonRoundTripIsBitExact) {
  Rng rng(42);
  const HmmParams model = init_random(4, 5, rng);
  const Json j = model;
  const HmmParams back = Json::parse(j.dump()).get<HmmParams>();
  EXPECT_EQ(back, model);
  EXPECT_EQ(j.at("n").get<int>(), 4);
  EXPECT_EQ(j.at("m").get<int>(), 5);
}

TEST(ApplyFloor, RenormalizesRows) {
  HmmParams model = two_state_example();
  model.B << 1.0, 0.0, 0.5, 0.5;
  apply_floor(model, 0.01);
  EXPECT_NEAR(model.B(0, 1), 0.01 / 1.01, 1e-15);
  EXPECT_NEAR(model.B.row(0).sum(), 1.0, 1e-15);
}

TEST(Vocabulary, EncodesCharacters) {
  const Vocabulary vocab({"A", "C", "G", "T"});
  EXPECT_EQ(vocab.encode_chars("GATC"), (TokenSequence{2, 0, 3, 1}));
  EXPECT_EQ(vocab.decode_chars(TokenSequence{3, 3, 0}), "TTA");
  EXPECT_THROW(vocab.encode_chars("ACGN"), DomainError);
  EXPECT_THROW(Vocabulary({"A", "A"}), ParameterError);
}

TEST(Vocabulary, DefaultConstructedKnowsNoCharacters) {
  const Vocabulary vocab;
  EXPECT_EQ(vocab.size(), 0U);
  EXPECT_THROW(vocab.encode_chars("A"), DomainError);
}

TEST(DeriveSeed, StreamsDiffer) {
  EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
  EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
  EXPECT_EQ(derive_seed(5, 9), derive_seed(5, 9));
}

TEST(Rng, SampleWithoutReplacementIsSortedAndDistinct) {
  Rng rng(4);
  const auto picks = rng.sample_without_replacement(100, 30);
  ASSERT_EQ(picks.size(), 30U);
  for (std::size_t i = 1; i < picks.size(); ++i) EXPECT_LT(picks[i - 1], picks[i]);
  EXPECT_LT(picks.back(), 100U);
}

}  // namespace
}  // namespace hmme
