#include "hmme/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hmme/error.hpp"
#include "hmme/rng.hpp"

namespace hmme {

namespace {

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  std::ostringstream msg;
  msg << path.string() << ":" << line << ": " << what;
  throw DataError(msg.str());
}

}  // namespace

std::size_t LabeledDataset::count(Label label) const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
}

std::vector<std::size_t> LabeledDataset::indices_of(Label label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) out.push_back(i);
  return out;
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
  LabeledDataset out;
  out.vocabulary = vocabulary;
  out.provenance = provenance;
  out.sequences.reserve(indices.size());
  for (const std::size_t i : indices) {
    out.sequences.push_back(sequences.at(i));
    if (labeled()) out.labels.push_back(labels.at(i));
  }
  return out;
}

void LabeledDataset::validate() const {
  if (labeled() && labels.size() != sequences.size())
    throw DataError("dataset: sequence and label counts differ");
  const std::size_t m = vocabulary.size();
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    if (sequences[i].empty()) throw DataError("dataset: sequence " + std::to_string(i) + " is empty");
    for (const Token t : sequences[i])
      if (t >= m) throw DataError("dataset: sequence " + std::to_string(i) + " has invalid token id");
  }
  for (const Label l : labels)
    if (l != 0 && l != 1) throw DataError("dataset: labels must be 0 or 1");
}

LabeledDataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path.string());

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    header = split_fields(line);
    break;
  }
  if (header.empty()) fail(path, line_no, "empty file (no header row)");

  const auto column = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : std::distance(header.begin(), it);
  };
  const std::ptrdiff_t seq_col = column(options.sequence_column);
  const std::ptrdiff_t label_col = column(options.label_column);
  if (seq_col < 0) fail(path, line_no, "missing column '" + options.sequence_column + "'");
  if (label_col < 0 && options.require_labels)
    fail(path, line_no, "missing column '" + options.label_column + "'");

  std::vector<std::string> raw;
  std::vector<Label> labels;
  std::vector<std::size_t> lines;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty() || line[0] == '#') continue;
    const auto fields = split_fields(line);
    const auto needed = static_cast<std::size_t>(std::max(seq_col, label_col)) + 1;
    if (fields.size() < needed) fail(path, line_no, "too few fields");
    const std::string& seq = fields[static_cast<std::size_t>(seq_col)];
    if (seq.empty()) fail(path, line_no, "empty sequence");
    raw.push_back(seq);
    lines.push_back(line_no);
    if (label_col >= 0) {
      const std::string& label = fields[static_cast<std::size_t>(label_col)];
      if (label == "0") labels.push_back(0);
      else if (label == "1") labels.push_back(1);
      else fail(path, line_no, "label '" + label + "' is not 0 or 1");
    }
  }
  if (raw.empty()) fail(path, line_no, "no data rows");

  LabeledDataset dataset;
  dataset.labels = std::move(labels);
  dataset.provenance.source = path.string();
  if (options.vocabulary) {
    dataset.vocabulary = *options.vocabulary;
  } else {
    std::vector<std::string> tokens;
    std::vector<bool> seen(256, false);
    for (const auto& seq : raw)
      for (const char c : seq) {
        const auto uc = static_cast<unsigned char>(c);
        if (!seen[uc]) {
          seen[uc] = true;
          tokens.emplace_back(1, c);
        }
      }
    if (tokens.size() < 2) fail(path, line_no, "vocabulary has fewer than two distinct characters");
    dataset.vocabulary = Vocabulary(std::move(tokens));
  }
  dataset.sequences.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    try {
      dataset.sequences.push_back(dataset.vocabulary.encode_chars(raw[i]));
    } catch (const DomainError& e) {
      fail(path, lines[i], std::string("vocabulary mismatch: ") + e.what());
    }
  }
  return dataset;
}

void write_csv(std::ostream& out, const LabeledDataset& dataset) {
  out << (dataset.labeled() ? "sequence,label\n" : "sequence\n");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    out << dataset.vocabulary.decode_chars(dataset.sequences[i]);
    if (dataset.labeled()) out << ',' << dataset.labels[i];
    out << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const LabeledDataset& dataset) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out, dataset);
}

LabeledDataset subsample_imbalance(const LabeledDataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio >= 1.0)) throw ParameterError("imbalance ratio must be >= 1");
  const auto positives = dataset.indices_of(1);
  const std::size_t n_neg = dataset.count(0);
  const auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(n_neg) / ratio));
  if (keep < 1) throw ParameterError("imbalance ratio leaves no positives");
  if (keep > positives.size()) {
    throw ParameterError("imbalance ratio needs " + std::to_string(keep) + " positives but only " +
                         std::to_string(positives.size()) + " exist");
  }
  Rng rng(seed);
  const auto chosen = rng.sample_without_replacement(positives.size(), keep);
  std::vector<bool> retain(dataset.size(), false);
  for (const std::size_t i : dataset.indices_of(0)) retain[i] = true;
  for (const std::size_t c : chosen) retain[positives[c]] = true;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (retain[i]) rows.push_back(i);
  LabeledDataset out = dataset.subset(rows);
  out.provenance.seed = seed;
  out.provenance.imbalance_ratio = ratio;
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::span<const Label> labels,
                                                                        double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("split fraction must be in (0, 1)");
  Rng rng(seed);
  std::vector<bool> in_a(labels.size(), false);
  for (const Label label : {0, 1}) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) members.push_back(i);
    const auto take = static_cast<std::size_t>(
        std::floor(fraction * static_cast<double>(members.size()) + 0.5));
    if (take == 0 || take == members.size()) {
      throw ParameterError("split leaves class " + std::to_string(label) + " empty in one part");
    }
    rng.shuffle(members);
    for (std::size_t k = 0; k < take; ++k) in_a[members[k]] = true;
  }
  std::vector<std::size_t> rows_a;
  std::vector<std::size_t> rows_b;
  for (std::size_t i = 0; i < labels.size(); ++i) (in_a[i] ? rows_a : rows_b).push_back(i);
  return {rows_a, rows_b};
}

std::pair<LabeledDataset, LabeledDataset> split(const LabeledDataset& dataset, double fraction,
                                                std::uint64_t seed) {
  if (!dataset.labeled()) throw ParameterError("split requires a labeled dataset");
  const auto [rows_a, rows_b] = split_indices(dataset.labels, fraction, seed);
  return {dataset.subset(rows_a), dataset.subset(rows_b)};
}

}  // namespace hmme
