#pragma once

// HMM-e: per-class ensembles of HMMs trained on random subsets, combined
// by counting pairwise likelihood matchups between positive-class and
// negative-class models.

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "hmme/dataset.hpp"
#include "hmme/hmm.hpp"
#include "hmme/parallel.hpp"

namespace hmme {

struct EnsembleConfig {
  std::size_t n_positive = 250;
  std::size_t n_negative = 250;
  double subset_factor = 0.01;
  std::vector<std::size_t> state_counts{3, 4, 5};
  TrainConfig train;
  std::uint64_t master_seed = 0;
  // Number of distinct initializations shared round-robin across each
  // class's models. 0 gives every model its own initialization.
  std::size_t shared_init_count = 0;

  void validate() const;
};

struct JobSeeds {
  std::uint64_t subset = 0;
  std::uint64_t init = 0;
  bool operator==(const JobSeeds&) const = default;
};

// Job k < N trains positive model k; job N + j trains negative model j.
struct TrainingJob {
  std::size_t index = 0;
  Label label = 0;
  std::vector<std::size_t> subset;  // dataset rows, ascending
  JobSeeds seeds;
  std::size_t n_states = 0;
};

struct EnsembleModel {
  std::vector<HmmParams> positive_models;
  std::vector<HmmParams> negative_models;
  Vocabulary vocabulary;
  EnsembleConfig config;
  std::vector<JobSeeds> seeds;  // job order
  Provenance provenance;
  // Per-job EM log-likelihood histories. Not part of the serialized model.
  std::vector<std::vector<double>> histories;

  std::size_t size() const noexcept { return positive_models.size() + negative_models.size(); }
  // Concatenated order: positives then negatives.
  const HmmParams& model(std::size_t k) const;
  void validate() const;
};

struct CompositeScore {
  std::uint64_t value = 0;
  auto operator<=>(const CompositeScore&) const = default;
};

using FeatureVector = std::vector<double>;

std::vector<TrainingJob> make_training_jobs(const LabeledDataset& dataset,
                                            const EnsembleConfig& config);

// Probability that a given training sequence lands in none of n_models
// independent subsets drawn at rate s: (1 - s)^n_models.
double expected_unsampled_fraction(double s, std::size_t n_models);

EnsembleModel train_ensemble(const LabeledDataset& dataset, const EnsembleConfig& config,
                             Execution exec = Execution::Parallel);

// N + M log-likelihoods, positives first.
std::vector<double> model_log_likelihoods(const EnsembleModel& ensemble, std::span<const Token> seq);

// Number of (i, j) with positive_ll[i] > negative_ll[j]. Ties count 0.
CompositeScore composite_score(std::span<const double> positive_ll, std::span<const double> negative_ll);
CompositeScore composite_score(const EnsembleModel& ensemble, std::span<const Token> seq);

// Rows are sequences, columns the N + M models.
Matrix corpus_log_likelihoods(const EnsembleModel& ensemble, std::span<const TokenSequence> corpus,
                              Execution exec = Execution::Parallel);

std::vector<CompositeScore> score_corpus(const EnsembleModel& ensemble,
                                         std::span<const TokenSequence> corpus,
                                         Execution exec = Execution::Parallel);

// Composite scores from an already computed log-likelihood matrix.
std::vector<CompositeScore> scores_from_log_likelihoods(const Matrix& log_likelihoods,
                                                        std::size_t n_positive);

// Max-F1 threshold over {distinct scores} U {max + 1}; ties go to the
// larger threshold.
std::uint64_t choose_threshold(std::span<const CompositeScore> scores, std::span<const Label> labels);

std::vector<Label> classify(std::span<const CompositeScore> scores, std::uint64_t threshold);

Label singleton_classify(const HmmParams& positive, const HmmParams& negative,
                         std::span<const Token> seq);

FeatureVector l2_normalize(FeatureVector raw);

std::vector<FeatureVector> feature_vectors(const EnsembleModel& ensemble,
                                           std::span<const TokenSequence> corpus,
                                           Execution exec = Execution::Parallel);

std::vector<double> to_doubles(std::span<const CompositeScore> scores);

void to_json(Json& j, const EnsembleConfig& config);
void from_json(const Json& j, EnsembleConfig& config);
void to_json(Json& j, const EnsembleModel& ensemble);
void from_json(const Json& j, EnsembleModel& ensemble);

}  // namespace hmme
