#pragma once

#include <cstddef>
#include <span>

#include "hmme/dataset.hpp"
#include "hmme/hmm.hpp"

namespace hmme {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  bool operator==(const Confusion&) const = default;
};

struct EvalReport {
  double auc_roc = 0.0;
  double average_precision = 0.0;
  double threshold = 0.0;
  Confusion confusion;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
};

// Mann-Whitney statistic with midranks for tied scores.
double roc_auc(std::span<const Label> labels, std::span<const double> scores);

// Sum over distinct thresholds (descending) of (R_k - R_{k-1}) * P_k, no
// interpolation.
double average_precision(std::span<const Label> labels, std::span<const double> scores);

// Predicted positive iff score >= threshold.
Confusion confusion_at(std::span<const Label> labels, std::span<const double> scores, double threshold);

EvalReport evaluate(std::span<const Label> labels, std::span<const double> scores, double threshold);

void to_json(Json& j, const EvalReport& report);

}  // namespace hmme
