#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hmme/hmm.hpp"

namespace hmme {

// Label 1 is the positive (minority) class, 0 the negative (majority) class.
using Label = int;

struct Provenance {
  std::string source;
  std::uint64_t seed = 0;
  double imbalance_ratio = 1.0;
};

struct LabeledDataset {
  std::vector<TokenSequence> sequences;
  std::vector<Label> labels;  // empty for an unlabeled corpus
  Vocabulary vocabulary;
  Provenance provenance;

  std::size_t size() const noexcept { return sequences.size(); }
  bool labeled() const noexcept { return !labels.empty(); }
  std::size_t count(Label label) const;
  std::vector<std::size_t> indices_of(Label label) const;
  // Rows at the given indices, in the given order.
  LabeledDataset subset(std::span<const std::size_t> indices) const;

  void validate() const;
};

struct CsvOptions {
  std::string sequence_column = "sequence";
  std::string label_column = "label";
  bool require_labels = true;
  // When set, characters are encoded with this vocabulary and unknown ones
  // are rejected; otherwise the vocabulary is built in first-seen order.
  const Vocabulary* vocabulary = nullptr;
};

LabeledDataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});

// Writes `sequence,label` (or just `sequence` for unlabeled data).
void write_csv(const std::filesystem::path& path, const LabeledDataset& dataset);
void write_csv(std::ostream& out, const LabeledDataset& dataset);

// Keeps every negative and floor(n_neg / ratio) uniformly chosen positives.
LabeledDataset subsample_imbalance(const LabeledDataset& dataset, double ratio, std::uint64_t seed);

// Stratified split; part_a receives round-half-up(fraction * n_c) items of
// each class c.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::span<const Label> labels,
                                                                        double fraction, std::uint64_t seed);
std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset, double fraction,
                                                std::uint64_t seed);

}  // namespace hmme
