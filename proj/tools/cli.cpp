#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hmme/classifier.hpp"
#include "hmme/dataset.hpp"
#include "hmme/diversity.hpp"
#include "hmme/ensemble.hpp"
#include "hmme/error.hpp"
#include "hmme/metrics.hpp"
#include "run_config.hpp"

namespace hmme::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::optional<int> threads;
  std::string model_path;
  std::string corpus_path;
  std::string features_path;
  std::string labels_path;
  std::string generate_class;
  std::optional<std::size_t> count;
  std::optional<std::size_t> length;
};

struct Context {
  RunConfig config;
  std::string hash;
  std::ostream& out;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string provenance_line(const Context& ctx, const std::string& source) {
  return "# hmme config_hash=" + ctx.hash + " seed=" + std::to_string(ctx.config.seed) + " source=" + source +
         " imbalance_ratio=" + num(ctx.config.imbalance_ratio) + "\n";
}

Json provenance_json(const Context& ctx, const std::string& source) {
  return {{"config_hash", ctx.hash},
          {"seed", ctx.config.seed},
          {"source", source},
          {"imbalance_ratio", ctx.config.imbalance_ratio}};
}

std::ofstream open_output(const Context& ctx, const std::string& name) {
  fs::create_directories(ctx.config.out_dir);
  const fs::path path = ctx.config.out_dir / name;
  std::ofstream file(path);
  if (!file) throw DataError("cannot write " + path.string());
  return file;
}

void write_json(const Context& ctx, const std::string& name, const Json& j) {
  auto file = open_output(ctx, name);
  file << j.dump(2) << '\n';
  ctx.out << "wrote " << (ctx.config.out_dir / name).string() << '\n';
}

EnsembleModel load_model(const std::string& path) {
  if (path.empty()) throw ConfigError("--model is required");
  std::ifstream in(path);
  if (!in) throw DataError("cannot open model file: " + path);
  try {
    return Json::parse(in).get<EnsembleModel>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  } catch (const ParameterError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string corpus_path(const Options& opt, const RunConfig& config) {
  if (!opt.corpus_path.empty()) return opt.corpus_path;
  if (!config.test_path.empty()) return config.test_path.string();
  throw ConfigError("--corpus (or data.test) is required");
}

LabeledDataset load_corpus(const std::string& path, const RunConfig& config, const Vocabulary& vocab,
                           bool require_labels) {
  CsvOptions csv;
  csv.sequence_column = config.sequence_column;
  csv.label_column = config.label_column;
  csv.require_labels = require_labels;
  csv.vocabulary = &vocab;
  try {
    return load_csv(path, csv);
  } catch (const DomainError& e) {
    throw DataError(e.what());
  }
}

std::vector<std::string> model_columns(const EnsembleModel& model) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < model.positive_models.size(); ++i) names.push_back("pos_" + std::to_string(i));
  for (std::size_t j = 0; j < model.negative_models.size(); ++j) names.push_back("neg_" + std::to_string(j));
  return names;
}

// ---------------------------------------------------------------------------

int cmd_train(Context& ctx) {
  const RunConfig& config = ctx.config;
  if (config.train_path.empty()) throw ConfigError("data.train is required for train");
  CsvOptions csv;
  csv.sequence_column = config.sequence_column;
  csv.label_column = config.label_column;
  LabeledDataset data = load_csv(config.train_path, csv);
  data.provenance = {config.train_path.string(), config.seed, config.imbalance_ratio};
  if (config.imbalance_ratio > 1.0) {
    try {
      data = subsample_imbalance(data, config.imbalance_ratio, stream_seed(config, SeedStream::kImbalance));
    } catch (const ParameterError& e) {
      throw DataError(std::string("data.imbalance_ratio: ") + e.what());
    }
  }
  if (data.count(1) == 0 || data.count(0) == 0) throw DataError(config.train_path.string() + ": needs both classes");

  const EnsembleModel model = train_ensemble(data, config.ensemble, Execution::Parallel);

  Json j = model;
  j["provenance"] = provenance_json(ctx, config.train_path.string());
  write_json(ctx, "model.json", j);

  auto log = open_output(ctx, "training_log.csv");
  log << provenance_line(ctx, config.train_path.string());
  log << "job,class,n_states,subset_size,iteration,log_likelihood\n";
  const auto jobs = make_training_jobs(data, config.ensemble);
  for (std::size_t k = 0; k < model.histories.size(); ++k) {
    const auto& history = model.histories[k];
    for (std::size_t it = 0; it < history.size(); ++it) {
      log << k << ',' << (jobs[k].label == 1 ? "positive" : "negative") << ',' << jobs[k].n_states << ','
          << jobs[k].subset.size() << ',' << it << ',' << num(history[it]) << '\n';
    }
  }
  ctx.out << "wrote " << (config.out_dir / "training_log.csv").string() << '\n';

  auto echo = open_output(ctx, "config.ini");
  echo << "# hmme config_hash=" << ctx.hash << " seed=" << config.seed << '\n' << render_config(config);
  ctx.out << "wrote " << (config.out_dir / "config.ini").string() << '\n';
  ctx.out << "trained " << model.positive_models.size() << " positive and " << model.negative_models.size()
          << " negative models on " << data.size() << " sequences\n";
  return kExitOk;
}

int cmd_score(Context& ctx, const Options& opt) {
  const EnsembleModel model = load_model(opt.model_path);
  const std::string path = corpus_path(opt, ctx.config);
  const LabeledDataset corpus = load_corpus(path, ctx.config, model.vocabulary, false);
  const Matrix ll = corpus_log_likelihoods(model, corpus.sequences);
  const auto scores = scores_from_log_likelihoods(ll, model.positive_models.size());

  auto file = open_output(ctx, "scores.csv");
  file << provenance_line(ctx, path);
  file << "index,score";
  for (const auto& name : model_columns(model)) file << ",ll_" << name;
  file << '\n';
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    file << i << ',' << scores[i].value;
    for (Eigen::Index k = 0; k < ll.cols(); ++k) file << ',' << num(ll(static_cast<Eigen::Index>(i), k));
    file << '\n';
  }
  ctx.out << "wrote " << (ctx.config.out_dir / "scores.csv").string() << '\n';
  return kExitOk;
}

int cmd_evaluate(Context& ctx, const Options& opt) {
  const EnsembleModel model = load_model(opt.model_path);
  const std::string path = corpus_path(opt, ctx.config);
  const LabeledDataset corpus = load_corpus(path, ctx.config, model.vocabulary, true);
  if (corpus.count(1) == 0 || corpus.count(0) == 0) throw DataError(path + ": evaluation needs both classes");

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> parts;
  try {
    parts = split_indices(corpus.labels, ctx.config.calibration_fraction,
                          stream_seed(ctx.config, SeedStream::kCalibration));
  } catch (const ParameterError& e) {
    throw DataError(path + ": " + e.what());
  }
  const auto& [calibration, held_out] = parts;

  const auto scores = score_corpus(model, corpus.sequences);
  auto gather = [&](const std::vector<std::size_t>& rows) {
    std::vector<CompositeScore> s;
    std::vector<Label> l;
    for (const std::size_t r : rows) {
      s.push_back(scores[r]);
      l.push_back(corpus.labels[r]);
    }
    return std::pair{s, l};
  };
  const auto [cal_scores, cal_labels] = gather(calibration);
  const auto [eval_scores, eval_labels] = gather(held_out);
  const std::uint64_t threshold = choose_threshold(cal_scores, cal_labels);
  const auto eval_doubles = to_doubles(eval_scores);
  const EvalReport report = evaluate(eval_labels, eval_doubles, static_cast<double>(threshold));

  Json j = report;
  j["n_calibration"] = calibration.size();
  j["provenance"] = provenance_json(ctx, path);
  write_json(ctx, "report.json", j);

  auto file = open_output(ctx, "evaluation_scores.csv");
  file << provenance_line(ctx, path);
  file << "index,label,score\n";
  for (std::size_t k = 0; k < held_out.size(); ++k)
    file << held_out[k] << ',' << eval_labels[k] << ',' << eval_scores[k].value << '\n';
  ctx.out << "wrote " << (ctx.config.out_dir / "evaluation_scores.csv").string() << '\n';

  char line[128];
  std::snprintf(line, sizeof line, "AUC-ROC x100: %.2f\nAP x100: %.2f\n", 100.0 * report.auc_roc,
                100.0 * report.average_precision);
  ctx.out << line << "threshold: " << threshold << '\n';
  return kExitOk;
}

int cmd_features(Context& ctx, const Options& opt) {
  const EnsembleModel model = load_model(opt.model_path);
  const std::string path = corpus_path(opt, ctx.config);
  const LabeledDataset corpus = load_corpus(path, ctx.config, model.vocabulary, false);
  const auto features = feature_vectors(model, corpus.sequences);

  auto file = open_output(ctx, "features.csv");
  file << provenance_line(ctx, path);
  file << "index";
  for (const auto& name : model_columns(model)) file << ",f_" << name;
  file << '\n';
  for (std::size_t i = 0; i < features.size(); ++i) {
    file << i;
    for (const double v : features[i]) file << ',' << num(v);
    file << '\n';
  }
  ctx.out << "wrote " << (ctx.config.out_dir / "features.csv").string() << '\n';
  return kExitOk;
}

int cmd_diversity(Context& ctx, const Options& opt) {
  const EnsembleModel model = load_model(opt.model_path);
  const SimilarityMatrix sim = similarity_matrix(model);
  auto file = open_output(ctx, "similarity.csv");
  file << provenance_line(ctx, opt.model_path);
  write_csv(file, sim);
  ctx.out << "wrote " << (ctx.config.out_dir / "similarity.csv").string() << '\n';
  if (!model.positive_models.empty() && !model.negative_models.empty() &&
      (model.positive_models.size() > 1 || model.negative_models.size() > 1)) {
    ctx.out << "mean intra-class similarity: "
            << num(mean_intra_class_similarity(sim, model.positive_models.size())) << '\n';
  }
  return kExitOk;
}

int cmd_generate(Context& ctx, const Options& opt) {
  const EnsembleModel model = load_model(opt.model_path);
  const RunConfig& config = ctx.config;
  const bool positive = config.generate_class == "positive";
  const auto& pool = positive ? model.positive_models : model.negative_models;
  if (pool.empty()) throw DataError("model has no " + config.generate_class + " models");

  // Each sequence comes from a uniformly chosen model of the class.
  Rng rng(stream_seed(config, SeedStream::kGenerate));
  LabeledDataset out;
  out.vocabulary = model.vocabulary;
  for (std::size_t i = 0; i < config.generate_count; ++i) {
    const auto& hmm = pool[rng.below(pool.size())];
    out.sequences.push_back(sample(hmm, config.generate_length, rng));
    out.labels.push_back(positive ? 1 : 0);
  }
  auto file = open_output(ctx, "generated.csv");
  file << provenance_line(ctx, opt.model_path);
  write_csv(file, out);
  ctx.out << "wrote " << (config.out_dir / "generated.csv").string() << '\n';
  return kExitOk;
}

std::vector<FeatureVector> read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open features file: " + path);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  std::vector<FeatureVector> rows;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (header) {
      if (cells.size() < 2 || cells[0] != "index") throw DataError(path + ":" + std::to_string(line_no) + ": expected header 'index,...'");
      width = cells.size() - 1;
      header = false;
      continue;
    }
    if (cells.size() != width + 1)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width + 1) + " fields");
    FeatureVector v;
    for (std::size_t k = 1; k < cells.size(); ++k) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cells[k], &used));
        if (used != cells[k].size()) throw std::invalid_argument(cells[k]);
      } catch (const std::exception&) {
        throw DataError(path + ":" + std::to_string(line_no) + ": bad number '" + cells[k] + "'");
      }
    }
    rows.push_back(std::move(v));
  }
  if (rows.empty()) throw DataError(path + ": no feature rows");
  return rows;
}

int cmd_classify_nn(Context& ctx, const Options& opt) {
  if (opt.features_path.empty()) throw ConfigError("--features is required");
  if (opt.labels_path.empty()) throw ConfigError("--labels is required");
  const auto features = read_features(opt.features_path);
  CsvOptions csv;
  csv.sequence_column = ctx.config.sequence_column;
  csv.label_column = ctx.config.label_column;
  const LabeledDataset labeled = load_csv(opt.labels_path, csv);
  if (labeled.size() != features.size())
    throw DataError("features and labels differ in row count (" + std::to_string(features.size()) + " vs " +
                    std::to_string(labeled.size()) + ")");

  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> parts;
  try {
    parts = split_indices(labeled.labels, ctx.config.mlp_holdout_fraction,
                          stream_seed(ctx.config, SeedStream::kMlpHoldout));
  } catch (const ParameterError& e) {
    throw DataError(opt.labels_path + ": " + e.what());
  }
  const auto& [holdout, train_rows] = parts;
  auto gather = [&](const std::vector<std::size_t>& rows) {
    std::vector<FeatureVector> f;
    std::vector<Label> l;
    for (const std::size_t r : rows) {
      f.push_back(features[r]);
      l.push_back(labeled.labels[r]);
    }
    return std::pair{f, l};
  };
  const auto [train_f, train_l] = gather(train_rows);
  const auto [test_f, test_l] = gather(holdout);

  MlpConfig mlp = ctx.config.mlp;
  mlp.input_dim = features.front().size();
  MlpModel model;
  try {
    model = mlp_train(train_f, train_l, mlp);
  } catch (const ParameterError& e) {
    throw DataError(std::string("classify-nn: ") + e.what());
  }
  const auto probs = mlp_predict(model, test_f);
  const EvalReport report = evaluate(test_l, probs, 0.5);

  Json jm = model;
  jm["provenance"] = provenance_json(ctx, opt.features_path);
  write_json(ctx, "mlp.json", jm);
  Json jr = report;
  jr["n_train"] = train_rows.size();
  jr["provenance"] = provenance_json(ctx, opt.features_path);
  write_json(ctx, "mlp_report.json", jr);

  auto file = open_output(ctx, "mlp_scores.csv");
  file << provenance_line(ctx, opt.features_path);
  file << "index,label,probability\n";
  for (std::size_t k = 0; k < holdout.size(); ++k) file << holdout[k] << ',' << test_l[k] << ',' << num(probs[k]) << '\n';
  ctx.out << "wrote " << (ctx.config.out_dir / "mlp_scores.csv").string() << '\n';

  char line[128];
  std::snprintf(line, sizeof line, "AUC-ROC x100: %.2f\nAP x100: %.2f\n", 100.0 * report.auc_roc,
                100.0 * report.average_precision);
  ctx.out << line;
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"HMM-e: ensembles of hidden Markov models for imbalanced sequence classification", "hmme-cli"};
  app.require_subcommand(1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "INI run configuration");
  app.add_option("--seed", opt.seed, "master seed (overrides run.seed)");
  app.add_option("--out", opt.out_dir, "output directory (overrides run.out)");
  app.add_option("--threads", opt.threads, "worker threads, 0 = auto (overrides run.threads)");

  auto* train = app.add_subcommand("train", "train an ensemble on data.train");
  auto* score = app.add_subcommand("score", "composite scores and per-model log-likelihoods");
  auto* evaluate_cmd = app.add_subcommand("evaluate", "AUC-ROC / AP with a calibrated threshold");
  auto* features = app.add_subcommand("features", "normalized likelihood feature vectors");
  auto* diversity = app.add_subcommand("diversity", "pairwise model similarity matrix");
  auto* generate = app.add_subcommand("generate", "sample sequences from a trained ensemble");
  auto* classify_nn = app.add_subcommand("classify-nn", "train and evaluate the MLP head on features");

  for (auto* sub : {score, evaluate_cmd, features, diversity, generate})
    sub->add_option("--model", opt.model_path, "model JSON written by train")->required();
  for (auto* sub : {score, evaluate_cmd, features})
    sub->add_option("--corpus", opt.corpus_path, "sequence CSV (defaults to data.test)");
  generate->add_option("--class", opt.generate_class, "positive or negative");
  generate->add_option("--count", opt.count, "number of sequences");
  generate->add_option("--length", opt.length, "sequence length");
  classify_nn->add_option("--features", opt.features_path, "CSV written by features")->required();
  classify_nn->add_option("--labels", opt.labels_path, "labeled CSV aligned with the features")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitConfig;
  }

  try {
    RunConfig config = opt.config_path.empty() ? default_run_config() : load_run_config(opt.config_path);
    if (opt.seed) config.apply_seed(*opt.seed);
    if (!opt.out_dir.empty()) config.out_dir = opt.out_dir;
    if (opt.threads) config.threads = *opt.threads;
    if (!opt.generate_class.empty()) config.generate_class = opt.generate_class;
    if (opt.count) config.generate_count = *opt.count;
    if (opt.length) config.generate_length = *opt.length;
    config.validate();
    set_thread_count(config.threads);

    Context ctx{config, config_hash(config), out};
    if (*train) return cmd_train(ctx);
    if (*score) return cmd_score(ctx, opt);
    if (*evaluate_cmd) return cmd_evaluate(ctx, opt);
    if (*features) return cmd_features(ctx, opt);
    if (*diversity) return cmd_diversity(ctx, opt);
    if (*generate) return cmd_generate(ctx, opt);
    if (*classify_nn) return cmd_classify_nn(ctx, opt);
    return kExitConfig;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ParameterError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DomainError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace hmme::cli
