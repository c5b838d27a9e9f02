#pragma once

// Run configuration for hmme-cli: an INI file with one section per module.

#include <cstdint>
#include <filesystem>
#include <string>

#include "hmme/classifier.hpp"
#include "hmme/ensemble.hpp"

namespace hmme::cli {

struct RunConfig {
  // [data]
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::string sequence_column = "sequence";
  std::string label_column = "label";
  double imbalance_ratio = 1.0;
  double calibration_fraction = 0.2;

  // [ensemble] and [train]
  EnsembleConfig ensemble;

  // [mlp]
  MlpConfig mlp;
  double mlp_holdout_fraction = 0.2;

  // [generate]
  std::string generate_class = "positive";
  std::size_t generate_count = 10;
  std::size_t generate_length = 100;

  // [run]
  std::filesystem::path out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 0;

  // Copies seed into every seeded sub-config.
  void apply_seed(std::uint64_t master);
  void validate() const;
};

// Throws ConfigError naming the offending key. Unknown keys are errors.
RunConfig load_run_config(const std::filesystem::path& path);

// Defaults, as written by render_config.
RunConfig default_run_config();

// The fully resolved config in INI form; round-trips through
// load_run_config.
std::string render_config(const RunConfig& config);

// FNV-1a 64 over render_config (output directory excluded), as 16 hex
// digits.
std::string config_hash(const RunConfig& config);

// Streams derived from the master seed, one per randomized step.
enum class SeedStream : std::uint64_t {
  kImbalance = 101,
  kCalibration = 102,
  kMlp = 103,
  kMlpHoldout = 104,
  kGenerate = 105,
};

std::uint64_t stream_seed(const RunConfig& config, SeedStream stream);

}  // namespace hmme::cli
