#pragma once

// Ensemble-diversity diagnostics: stationary distributions, Hellinger
// distance, and an assignment-matched distance between HMMs.

#include <cstddef>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hmme/ensemble.hpp"
#include "hmme/hmm.hpp"

namespace hmme {

struct StationaryResult {
  Vector distribution;
  // Set when the chain is reducible or periodic (or power iteration failed
  // to settle); distribution is then the fixed point of the chain damped
  // by 1e-8 toward uniform.
  bool degenerate = false;
  std::size_t iterations = 0;
};

StationaryResult stationary_distribution(const Matrix& transitions);

// (1/sqrt 2) * || sqrt(p) - sqrt(q) ||_2, in [0, 1].
double hellinger(std::span<const double> p, std::span<const double> q);

// Minimum-cost assignment for a rows x cols cost matrix with rows <= cols.
// Returns the column assigned to each row (Hungarian method, O(rows^2 cols)).
std::vector<std::size_t> solve_assignment(const Matrix& cost);

// Stationary-weighted Hellinger distance between emission rows matched by
// linear sum assignment. States left unmatched when the state counts differ
// cost 1 at weight v[k].
double hmm_distance(const HmmParams& a, const HmmParams& b);

struct SimilarityMatrix {
  std::vector<std::string> labels;  // pos_0..pos_{N-1}, neg_0..neg_{M-1}
  Matrix values;                    // 1 - hmm_distance
};

SimilarityMatrix similarity_matrix(const EnsembleModel& ensemble,
                                   Execution exec = Execution::Parallel);

// Mean of off-diagonal cells within the positive block and within the
// negative block (pooled).
double mean_intra_class_similarity(const SimilarityMatrix& sim, std::size_t n_positive);

// Header row and first column carry the model labels.
void write_csv(std::ostream& out, const SimilarityMatrix& sim);

}  // namespace hmme
