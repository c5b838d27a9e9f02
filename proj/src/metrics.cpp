#include "hmme/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "hmme/error.hpp"

namespace hmme {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts check_inputs(std::span<const Label> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ParameterError("labels and scores differ in length");
  ClassCounts counts;
  for (const Label l : labels) {
    if (l == 1) ++counts.pos;
    else if (l == 0) ++counts.neg;
    else throw ParameterError("labels must be 0 or 1");
  }
  if (counts.pos == 0 || counts.neg == 0) throw ParameterError("metric needs both classes present");
  for (const double s : scores)
    if (std::isnan(s)) throw ParameterError("NaN score");
  return counts;
}

// Indices sorted by descending score; equal scores keep index order.
std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace

double roc_auc(std::span<const Label> labels, std::span<const double> scores) {
  const auto counts = check_inputs(labels, scores);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Rank sums are kept doubled so that midranks stay integral.
  std::size_t doubled_rank_sum = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::size_t doubled_midrank = (i + 1) + j;  // 2 * (i + 1 + j) / 2
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) doubled_rank_sum += doubled_midrank;
    i = j;
  }
  const double pos = static_cast<double>(counts.pos);
  const double u = static_cast<double>(doubled_rank_sum) / 2.0 - pos * (pos + 1.0) / 2.0;
  return u / (pos * static_cast<double>(counts.neg));
}

double average_precision(std::span<const Label> labels, std::span<const double> scores) {
  const auto counts = check_inputs(labels, scores);
  const auto order = descending_order(scores);
  double ap = 0.0;
  std::size_t tp = 0;
  std::size_t seen = 0;
  std::size_t prev_tp = 0;
  std::size_t k = 0;
  while (k < order.size()) {
    const double t = scores[order[k]];
    for (; k < order.size() && scores[order[k]] == t; ++k) {
      ++seen;
      if (labels[order[k]] == 1) ++tp;
    }
    if (tp != prev_tp) {
      const double recall_step = static_cast<double>(tp - prev_tp) / static_cast<double>(counts.pos);
      ap += recall_step * static_cast<double>(tp) / static_cast<double>(seen);
      prev_tp = tp;
    }
  }
  return ap;
}

Confusion confusion_at(std::span<const Label> labels, std::span<const double> scores, double threshold) {
  if (labels.size() != scores.size()) throw ParameterError("labels and scores differ in length");
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) (predicted ? c.tp : c.fn)++;
    else (predicted ? c.fp : c.tn)++;
  }
  return c;
}

EvalReport evaluate(std::span<const Label> labels, std::span<const double> scores, double threshold) {
  EvalReport report;
  report.auc_roc = roc_auc(labels, scores);
  report.average_precision = average_precision(labels, scores);
  report.threshold = threshold;
  report.confusion = confusion_at(labels, scores, threshold);
  report.n_pos = report.confusion.tp + report.confusion.fn;
  report.n_neg = report.confusion.fp + report.confusion.tn;
  return report;
}

void to_json(Json& j, const EvalReport& report) {
  j = Json::object();
  j["auc_roc"] = report.auc_roc;
  j["average_precision"] = report.average_precision;
  j["threshold"] = report.threshold;
  j["tp"] = report.confusion.tp;
  j["fp"] = report.confusion.fp;
  j["tn"] = report.confusion.tn;
  j["fn"] = report.confusion.fn;
  j["n_pos"] = report.n_pos;
  j["n_neg"] = report.n_neg;
}

}  // namespace hmme
