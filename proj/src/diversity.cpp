#include "hmme/diversity.hpp"

#include <cmath>
#include <numeric>
#include <queue>
#include <utility>

#include "hmme/error.hpp"

namespace hmme {

namespace {

constexpr double kConvergenceL1 = 1e-12;
constexpr std::size_t kMaxPowerIterations = 100000;
constexpr double kDamping = 1e-8;

std::vector<long> bfs_levels(const Matrix& a, bool reverse) {
  const auto n = a.rows();
  std::vector<long> level(static_cast<std::size_t>(n), -1);
  std::queue<Eigen::Index> frontier;
  level[0] = 0;
  frontier.push(0);
  while (!frontier.empty()) {
    const Eigen::Index u = frontier.front();
    frontier.pop();
    for (Eigen::Index w = 0; w < n; ++w) {
      const double edge = reverse ? a(w, u) : a(u, w);
      if (edge > 0.0 && level[static_cast<std::size_t>(w)] < 0) {
        level[static_cast<std::size_t>(w)] = level[static_cast<std::size_t>(u)] + 1;
        frontier.push(w);
      }
    }
  }
  return level;
}

// Irreducible (strongly connected) and aperiodic (gcd of cycle lengths 1).
bool is_ergodic(const Matrix& a) {
  const auto forward = bfs_levels(a, false);
  const auto backward = bfs_levels(a, true);
  for (std::size_t i = 0; i < forward.size(); ++i)
    if (forward[i] < 0 || backward[i] < 0) return false;
  long period = 0;
  for (Eigen::Index u = 0; u < a.rows(); ++u)
    for (Eigen::Index w = 0; w < a.cols(); ++w)
      if (a(u, w) > 0.0) {
        const long diff = forward[static_cast<std::size_t>(u)] + 1 - forward[static_cast<std::size_t>(w)];
        period = std::gcd(period, std::labs(diff));
      }
  return period == 1;
}

// Exact fixed point of the damped chain (1 - d) A + d/n.
Vector damped_fixed_point(const Matrix& a) {
  const Eigen::Index n = a.rows();
  // damped - I written as (A - I) - d (A - 1/n), which avoids cancelling
  // 1 - d against 1 on the diagonal.
  const Eigen::MatrixXd at = a.transpose();
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd system = (at - Eigen::MatrixXd::Identity(n, n)) - kDamping * (at - uniform);
  system.row(n - 1).setOnes();
  Vector rhs = Vector::Zero(n);
  rhs[n - 1] = 1.0;
  Vector v = system.fullPivLu().solve(rhs);
  v = v.cwiseMax(0.0);
  return v / v.sum();
}

}  // namespace

StationaryResult stationary_distribution(const Matrix& transitions) {
  const Eigen::Index n = transitions.rows();
  if (n < 1 || transitions.cols() != n) throw ParameterError("stationary_distribution: A must be square");
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto row = transitions.row(i);
    if (!row.allFinite() || (row.array() < 0.0).any() || std::abs(row.sum() - 1.0) > 1e-6)
      throw ParameterError("stationary_distribution: A is not row-stochastic");
  }

  StationaryResult result;
  if (!is_ergodic(transitions)) {
    result.distribution = damped_fixed_point(transitions);
    result.degenerate = true;
    return result;
  }

  Eigen::RowVectorXd v = Eigen::RowVectorXd::Constant(n, 1.0 / static_cast<double>(n));
  Eigen::RowVectorXd next(n);
  for (std::size_t it = 1; it <= kMaxPowerIterations; ++it) {
    next.noalias() = v * transitions;
    next /= next.sum();
    const double change = (next - v).lpNorm<1>();
    v.swap(next);
    if (change < kConvergenceL1) {
      result.distribution = v.transpose();
      result.iterations = it;
      return result;
    }
  }
  // Nearly decomposable chains can mix too slowly for power iteration.
  result.distribution = damped_fixed_point(transitions);
  result.degenerate = true;
  result.iterations = kMaxPowerIterations;
  return result;
}

double hellinger(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ParameterError("hellinger: length mismatch");
  if (p.empty()) throw ParameterError("hellinger: empty distributions");
  double sum_p = 0.0;
  double sum_q = 0.0;
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] < 0.0 || q[k] < 0.0) throw ParameterError("hellinger: negative probability");
    sum_p += p[k];
    sum_q += q[k];
    const double d = std::sqrt(p[k]) - std::sqrt(q[k]);
    acc += d * d;
  }
  if (std::abs(sum_p - 1.0) > 1e-6 || std::abs(sum_q - 1.0) > 1e-6)
    throw ParameterError("hellinger: inputs are not probability vectors");
  return std::min(1.0, std::sqrt(acc) / std::sqrt(2.0));
}

namespace {

std::span<const double> row_span(const Matrix& m, Eigen::Index i) {
  return {m.row(i).data(), static_cast<std::size_t>(m.cols())};
}

double weighted_matched_distance(const HmmParams& a, const Vector& va, const HmmParams& b,
                                 const Vector& vb) {
  if (a.m() != b.m()) throw ParameterError("hmm_distance: vocabulary sizes differ");
  // Orient so that the assignment rows are the smaller model.
  const bool swap = a.n() > b.n();
  const HmmParams& small = swap ? b : a;
  const HmmParams& large = swap ? a : b;
  const Vector& v_small = swap ? vb : va;
  const Vector& v_large = swap ? va : vb;

  const auto ns = static_cast<Eigen::Index>(small.n());
  const auto nl = static_cast<Eigen::Index>(large.n());
  Matrix cost(ns, nl);
  for (Eigen::Index i = 0; i < ns; ++i)
    for (Eigen::Index j = 0; j < nl; ++j) cost(i, j) = hellinger(row_span(small.B, i), row_span(large.B, j));

  const auto match = solve_assignment(cost);
  std::vector<bool> matched(static_cast<std::size_t>(nl), false);
  double weighted = 0.0;
  double total_weight = 0.0;
  for (Eigen::Index i = 0; i < ns; ++i) {
    const auto j = static_cast<Eigen::Index>(match[static_cast<std::size_t>(i)]);
    matched[static_cast<std::size_t>(j)] = true;
    const double w = 0.5 * (v_small[i] + v_large[j]);
    weighted += w * cost(i, j);
    total_weight += w;
  }
  for (Eigen::Index j = 0; j < nl; ++j) {
    if (matched[static_cast<std::size_t>(j)]) continue;
    weighted += v_large[j];
    total_weight += v_large[j];
  }
  if (!(total_weight > 0.0)) throw NumericError("hmm_distance: zero total weight");
  return std::clamp(weighted / total_weight, 0.0, 1.0);
}

}  // namespace

double hmm_distance(const HmmParams& a, const HmmParams& b) {
  return weighted_matched_distance(a, stationary_distribution(a.A).distribution, b,
                                   stationary_distribution(b.A).distribution);
}

SimilarityMatrix similarity_matrix(const EnsembleModel& ensemble, Execution exec) {
  const std::size_t count = ensemble.size();
  SimilarityMatrix sim;
  for (std::size_t i = 0; i < ensemble.positive_models.size(); ++i) sim.labels.push_back("pos_" + std::to_string(i));
  for (std::size_t j = 0; j < ensemble.negative_models.size(); ++j) sim.labels.push_back("neg_" + std::to_string(j));

  std::vector<Vector> stationary(count);
  for_each_index(count, exec, [&](std::size_t k) {
    stationary[k] = stationary_distribution(ensemble.model(k).A).distribution;
  });

  std::vector<std::pair<std::size_t, std::size_t>> cells;
  cells.reserve(count * (count + 1) / 2);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = i; j < count; ++j) cells.emplace_back(i, j);

  const auto n = static_cast<Eigen::Index>(count);
  sim.values = Matrix::Zero(n, n);
  for_each_index(cells.size(), exec, [&](std::size_t c) {
    const auto [i, j] = cells[c];
    const double s = i == j ? 1.0
                            : 1.0 - weighted_matched_distance(ensemble.model(i), stationary[i],
                                                              ensemble.model(j), stationary[j]);
    sim.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = s;
    sim.values(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = s;
  });
  return sim;
}

double mean_intra_class_similarity(const SimilarityMatrix& sim, std::size_t n_positive) {
  const auto n = static_cast<std::size_t>(sim.values.rows());
  double sum = 0.0;
  std::size_t cells = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j || (i < n_positive) != (j < n_positive)) continue;
      sum += sim.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      ++cells;
    }
  if (cells == 0) throw ParameterError("no intra-class off-diagonal cells");
  return sum / static_cast<double>(cells);
}

void write_csv(std::ostream& out, const SimilarityMatrix& sim) {
  out << "model";
  for (const auto& label : sim.labels) out << ',' << label;
  out << '\n';
  out.precision(17);
  for (Eigen::Index i = 0; i < sim.values.rows(); ++i) {
    out << sim.labels[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < sim.values.cols(); ++j) out << ',' << sim.values(i, j);
    out << '\n';
  }
}

}  // namespace hmme
