#include "hmme/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <omp.h>

#include "hmme/error.hpp"

namespace hmme {

namespace {

// Stream ids for derive_seed. Subset and initialization streams are kept
// apart so that sharing initializations leaves the subsets untouched.
constexpr std::uint64_t kSubsetStream = 0x5u;
constexpr std::uint64_t kInitStream = 0x1u;

std::size_t subset_size(double s, std::size_t class_size) {
  // The small offset keeps products like 0.1 * 2000 from rounding up.
  return static_cast<std::size_t>(std::ceil(s * static_cast<double>(class_size) - 1e-9));
}

template <typename E>
[[noreturn]] void rethrow_with_job(const E& e, std::size_t job) {
  throw E("training job " + std::to_string(job) + ": " + e.what());
}

HmmParams train_job(const LabeledDataset& dataset, const TrainingJob& job,
                    const TrainConfig& train, std::vector<double>& history) {
  try {
    std::vector<TokenSequence> data;
    data.reserve(job.subset.size());
    for (const std::size_t row : job.subset) data.push_back(dataset.sequences[row]);
    Rng init_rng(job.seeds.init);
    const HmmParams initial = init_random(job.n_states, dataset.vocabulary.size(), init_rng);
    TrainResult result = baum_welch(initial, data, train);
    history = std::move(result.history);
    return std::move(result.model);
  } catch (const NumericError& e) {
    rethrow_with_job(e, job.index);
  } catch (const ParameterError& e) {
    rethrow_with_job(e, job.index);
  } catch (const DomainError& e) {
    rethrow_with_job(e, job.index);
  }
}

}  // namespace

void set_thread_count(int threads) {
  omp_set_num_threads(threads > 0 ? threads : omp_get_num_procs());
}

int thread_count() { return omp_get_max_threads(); }

void EnsembleConfig::validate() const {
  if (n_positive < 1 || n_negative < 1) throw ParameterError("ensemble needs N >= 1 and M >= 1");
  if (!(subset_factor > 0.0 && subset_factor <= 1.0))
    throw ParameterError("subset_factor must lie in (0, 1]");
  if (state_counts.empty()) throw ParameterError("state_counts must be non-empty");
  for (const std::size_t n : state_counts)
    if (n < 1) throw ParameterError("state counts must be >= 1");
}

const HmmParams& EnsembleModel::model(std::size_t k) const {
  return k < positive_models.size() ? positive_models.at(k)
                                    : negative_models.at(k - positive_models.size());
}

void EnsembleModel::validate() const {
  if (positive_models.size() != config.n_positive || negative_models.size() != config.n_negative)
    throw ParameterError("ensemble model counts disagree with its config");
  const std::size_t m = vocabulary.size();
  for (std::size_t k = 0; k < size(); ++k) {
    if (model(k).m() != m) throw ParameterError("ensemble model " + std::to_string(k) +
                                                " has a different vocabulary size");
    model(k).validate(1e-6);
  }
}

std::vector<TrainingJob> make_training_jobs(const LabeledDataset& dataset,
                                            const EnsembleConfig& config) {
  config.validate();
  const auto positives = dataset.indices_of(1);
  const auto negatives = dataset.indices_of(0);
  if (positives.empty()) throw DataError("training data has no positive sequences");
  if (negatives.empty()) throw DataError("training data has no negative sequences");

  std::vector<TrainingJob> jobs;
  jobs.reserve(config.n_positive + config.n_negative);
  const auto add_class = [&](Label label, const std::vector<std::size_t>& members, std::size_t count) {
    const std::size_t k = subset_size(config.subset_factor, members.size());
    if (k < 1) throw ParameterError("subset factor yields empty subsets");
    for (std::size_t local = 0; local < count; ++local) {
      TrainingJob job;
      job.index = jobs.size();
      job.label = label;
      job.n_states = config.state_counts[job.index % config.state_counts.size()];
      job.seeds.subset = derive_seed(derive_seed(config.master_seed, kSubsetStream), job.index);
      const std::uint64_t group =
          config.shared_init_count > 0 ? local % config.shared_init_count : job.index;
      job.seeds.init = derive_seed(derive_seed(config.master_seed, kInitStream), group);
      Rng rng(job.seeds.subset);
      for (const std::size_t pick : rng.sample_without_replacement(members.size(), k))
        job.subset.push_back(members[pick]);
      jobs.push_back(std::move(job));
    }
  };
  add_class(1, positives, config.n_positive);
  add_class(0, negatives, config.n_negative);
  return jobs;
}

double expected_unsampled_fraction(double s, std::size_t n_models) {
  if (!(s > 0.0 && s <= 1.0)) throw ParameterError("subset factor must lie in (0, 1]");
  if (n_models < 1) throw ParameterError("model count must be >= 1");
  return std::pow(1.0 - s, static_cast<double>(n_models));
}

EnsembleModel train_ensemble(const LabeledDataset& dataset, const EnsembleConfig& config,
                             Execution exec) {
  dataset.validate();
  config.train.validate(dataset.vocabulary.size());
  const auto jobs = make_training_jobs(dataset, config);

  std::vector<HmmParams> models(jobs.size());
  std::vector<std::vector<double>> histories(jobs.size());
  for_each_index(jobs.size(), exec, [&](std::size_t k) {
    models[k] = train_job(dataset, jobs[k], config.train, histories[k]);
  });

  EnsembleModel ensemble;
  ensemble.config = config;
  ensemble.vocabulary = dataset.vocabulary;
  ensemble.provenance = dataset.provenance;
  ensemble.histories = std::move(histories);
  for (const auto& job : jobs) ensemble.seeds.push_back(job.seeds);
  for (std::size_t k = 0; k < jobs.size(); ++k) {
    (k < config.n_positive ? ensemble.positive_models : ensemble.negative_models)
        .push_back(std::move(models[k]));
  }
  return ensemble;
}

std::vector<double> model_log_likelihoods(const EnsembleModel& ensemble, std::span<const Token> seq) {
  std::vector<double> out(ensemble.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = log_likelihood(ensemble.model(k), seq);
  return out;
}

CompositeScore composite_score(std::span<const double> positive_ll, std::span<const double> negative_ll) {
  std::vector<double> sorted(negative_ll.begin(), negative_ll.end());
  const auto has_nan = [](std::span<const double> v) {
    return std::any_of(v.begin(), v.end(), [](double x) { return std::isnan(x); });
  };
  if (has_nan(positive_ll) || has_nan(sorted)) throw NumericError("composite_score: NaN log-likelihood");
  std::sort(sorted.begin(), sorted.end());
  std::uint64_t wins = 0;
  for (const double p : positive_ll) {
    // Negatives strictly below p.
    wins += static_cast<std::uint64_t>(std::lower_bound(sorted.begin(), sorted.end(), p) - sorted.begin());
  }
  return CompositeScore{wins};
}

CompositeScore composite_score(const EnsembleModel& ensemble, std::span<const Token> seq) {
  const auto ll = model_log_likelihoods(ensemble, seq);
  const std::span<const double> all(ll);
  const std::size_t n = ensemble.positive_models.size();
  return composite_score(all.first(n), all.subspan(n));
}

Matrix corpus_log_likelihoods(const EnsembleModel& ensemble, std::span<const TokenSequence> corpus,
                              Execution exec) {
  if (corpus.empty()) throw ParameterError("empty corpus");
  const auto rows = static_cast<Eigen::Index>(corpus.size());
  const auto cols = static_cast<Eigen::Index>(ensemble.size());
  Matrix out(rows, cols);
  for_each_index(corpus.size(), exec, [&](std::size_t i) {
    try {
      for (Eigen::Index k = 0; k < cols; ++k)
        out(static_cast<Eigen::Index>(i), k) =
            log_likelihood(ensemble.model(static_cast<std::size_t>(k)), corpus[i]);
    } catch (const DomainError& e) {
      throw DomainError("sequence " + std::to_string(i) + ": " + e.what());
    } catch (const ParameterError& e) {
      throw ParameterError("sequence " + std::to_string(i) + ": " + e.what());
    }
  });
  return out;
}

std::vector<CompositeScore> scores_from_log_likelihoods(const Matrix& log_likelihoods,
                                                        std::size_t n_positive) {
  const auto n = static_cast<Eigen::Index>(n_positive);
  if (n < 1 || n >= log_likelihoods.cols()) throw ParameterError("invalid positive block size");
  std::vector<CompositeScore> scores(static_cast<std::size_t>(log_likelihoods.rows()));
  for (Eigen::Index i = 0; i < log_likelihoods.rows(); ++i) {
    const std::span<const double> row(log_likelihoods.row(i).data(),
                                      static_cast<std::size_t>(log_likelihoods.cols()));
    scores[static_cast<std::size_t>(i)] = composite_score(row.first(n_positive), row.subspan(n_positive));
  }
  return scores;
}

std::vector<CompositeScore> score_corpus(const EnsembleModel& ensemble,
                                         std::span<const TokenSequence> corpus, Execution exec) {
  return scores_from_log_likelihoods(corpus_log_likelihoods(ensemble, corpus, exec),
                                     ensemble.positive_models.size());
}

std::uint64_t choose_threshold(std::span<const CompositeScore> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) throw ParameterError("choose_threshold: length mismatch");
  const auto n_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0 || n_pos == labels.size()) throw ParameterError("choose_threshold needs both classes");

  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a].value > scores[b].value; });

  // Sweep thresholds from high to low; the first candidate is max + 1 (no
  // positives predicted, F1 = 0). A later candidate replaces the best only
  // when strictly better, so ties keep the larger threshold.
  std::uint64_t best_threshold = scores[order.front()].value + 1;
  double best_f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const std::uint64_t t = scores[order[k]].value;
    for (; k < order.size() && scores[order[k]].value == t; ++k) (labels[order[k]] == 1 ? tp : fp)++;
    const std::size_t fn = n_pos - tp;
    const double f1 = tp == 0 ? 0.0 : 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    if (f1 > best_f1) {
      best_f1 = f1;
      best_threshold = t;
    }
  }
  return best_threshold;
}

std::vector<Label> classify(std::span<const CompositeScore> scores, std::uint64_t threshold) {
  std::vector<Label> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i].value >= threshold ? 1 : 0;
  return out;
}

Label singleton_classify(const HmmParams& positive, const HmmParams& negative,
                         std::span<const Token> seq) {
  if (positive.m() != negative.m()) throw ParameterError("singleton models disagree on vocabulary size");
  return log_likelihood(positive, seq) > log_likelihood(negative, seq) ? 1 : 0;
}

FeatureVector l2_normalize(FeatureVector raw) {
  double sq = 0.0;
  for (const double x : raw) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("feature vector has non-finite entries");
  if (norm > 0.0)
    for (double& x : raw) x /= norm;
  return raw;
}

std::vector<FeatureVector> feature_vectors(const EnsembleModel& ensemble,
                                           std::span<const TokenSequence> corpus, Execution exec) {
  const Matrix ll = corpus_log_likelihoods(ensemble, corpus, exec);
  std::vector<FeatureVector> out(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto row = ll.row(static_cast<Eigen::Index>(i));
    out[i] = l2_normalize(FeatureVector(row.data(), row.data() + row.size()));
  }
  return out;
}

std::vector<double> to_doubles(std::span<const CompositeScore> scores) {
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = static_cast<double>(scores[i].value);
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const EnsembleConfig& config) {
  j = Json::object();
  j["n_positive"] = config.n_positive;
  j["n_negative"] = config.n_negative;
  j["subset_factor"] = config.subset_factor;
  j["state_counts"] = config.state_counts;
  j["shared_init_count"] = config.shared_init_count;
  j["master_seed"] = config.master_seed;
  j["train"] = {{"max_iters", config.train.max_iters},
                {"tol", config.train.tol},
                {"floor", config.train.floor}};
}

void from_json(const Json& j, EnsembleConfig& config) {
  config.n_positive = j.at("n_positive").get<std::size_t>();
  config.n_negative = j.at("n_negative").get<std::size_t>();
  config.subset_factor = j.at("subset_factor").get<double>();
  config.state_counts = j.at("state_counts").get<std::vector<std::size_t>>();
  config.shared_init_count = j.value("shared_init_count", std::size_t{0});
  config.master_seed = j.at("master_seed").get<std::uint64_t>();
  const auto& train = j.at("train");
  config.train.max_iters = train.at("max_iters").get<std::size_t>();
  config.train.tol = train.at("tol").get<double>();
  config.train.floor = train.at("floor").get<double>();
  config.train.seed = config.master_seed;
}

void to_json(Json& j, const EnsembleModel& ensemble) {
  j = Json::object();
  j["config"] = ensemble.config;
  j["vocabulary"] = ensemble.vocabulary.tokens();
  j["positive_models"] = ensemble.positive_models;
  j["negative_models"] = ensemble.negative_models;
  Json seeds = Json::array();
  for (const auto& s : ensemble.seeds) seeds.push_back({{"subset", s.subset}, {"init", s.init}});
  j["seeds"] = std::move(seeds);
  j["provenance"] = {{"source", ensemble.provenance.source},
                     {"seed", ensemble.provenance.seed},
                     {"imbalance_ratio", ensemble.provenance.imbalance_ratio}};
}

void from_json(const Json& j, EnsembleModel& ensemble) {
  try {
    ensemble.config = j.at("config").get<EnsembleConfig>();
    ensemble.vocabulary = Vocabulary(j.at("vocabulary").get<std::vector<std::string>>());
    ensemble.positive_models = j.at("positive_models").get<std::vector<HmmParams>>();
    ensemble.negative_models = j.at("negative_models").get<std::vector<HmmParams>>();
    ensemble.seeds.clear();
    for (const auto& s : j.at("seeds"))
      ensemble.seeds.push_back({s.at("subset").get<std::uint64_t>(), s.at("init").get<std::uint64_t>()});
    ensemble.provenance = {};
    if (j.contains("provenance")) {
      const auto& p = j.at("provenance");
      ensemble.provenance.source = p.value("source", std::string{});
      ensemble.provenance.seed = p.value("seed", std::uint64_t{0});
      ensemble.provenance.imbalance_ratio = p.value("imbalance_ratio", 1.0);
    }
    ensemble.histories.clear();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("ensemble JSON: ") + e.what());
  }
  ensemble.validate();
}

}  // namespace hmme
