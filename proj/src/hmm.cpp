#include "hmme/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "hmme/error.hpp"

namespace hmme {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void check_sequence(const HmmParams& model, std::span<const Token> seq) {
  if (seq.empty()) throw ParameterError("empty observation sequence");
  const std::size_t m = model.m();
  for (std::size_t t = 0; t < seq.size(); ++t) {
    if (seq[t] >= m) {
      std::ostringstream msg;
      msg << "token id " << seq[t] << " at position " << t << " is outside vocabulary of size "
          << m;
      throw DomainError(msg.str());
    }
  }
}

double log_sum_exp(const Vector& v) {
  const double mx = v.maxCoeff();
  if (mx == kNegInf) return kNegInf;
  return mx + std::log((v.array() - mx).exp().sum());
}

// Forward pass in log space. Row t of log_alpha holds ln p(o_1..o_t, a_t = i).
// The sum over predecessors is taken as max + ln(sum exp(x - max) A_ij).
double forward(const HmmParams& model, std::span<const Token> seq, Matrix* log_alpha) {
  const Eigen::Index n = model.A.rows();
  const std::size_t T = seq.size();
  Vector cur(n);
  Vector scaled(n);
  Eigen::RowVectorXd mixed(n);

  for (Eigen::Index i = 0; i < n; ++i) cur[i] = std::log(model.pi[i] * model.B(i, seq[0]));
  if (log_alpha) log_alpha->row(0) = cur.transpose();

  for (std::size_t t = 1; t < T; ++t) {
    const double mx = cur.maxCoeff();
    if (mx == kNegInf) {
      cur.setConstant(kNegInf);
    } else {
      scaled = (cur.array() - mx).exp();
      mixed.noalias() = scaled.transpose() * model.A;
      for (Eigen::Index j = 0; j < n; ++j) cur[j] = mx + std::log(mixed[j] * model.B(j, seq[t]));
    }
    if (log_alpha) log_alpha->row(static_cast<Eigen::Index>(t)) = cur.transpose();
  }
  return log_sum_exp(cur);
}

// Backward pass. Row t of log_beta holds ln p(o_{t+1}..o_T | a_t = i).
void backward(const HmmParams& model, std::span<const Token> seq, Matrix& log_beta) {
  const Eigen::Index n = model.A.rows();
  const auto T = static_cast<Eigen::Index>(seq.size());
  Vector weighted(n);
  Vector mixed(n);
  log_beta.row(T - 1).setZero();
  for (Eigen::Index t = T - 2; t >= 0; --t) {
    const double mx = log_beta.row(t + 1).maxCoeff();
    if (mx == kNegInf) {
      log_beta.row(t).setConstant(kNegInf);
      continue;
    }
    const Token next = seq[static_cast<std::size_t>(t + 1)];
    for (Eigen::Index j = 0; j < n; ++j) {
      weighted[j] = std::exp(log_beta(t + 1, j) - mx) * model.B(j, next);
    }
    mixed.noalias() = model.A * weighted;
    for (Eigen::Index i = 0; i < n; ++i) log_beta(t, i) = mx + std::log(mixed[i]);
  }
}

struct ExpectedCounts {
  Vector initial;
  Matrix transitions;
  Matrix emissions;
  double total_log_likelihood = 0.0;

  ExpectedCounts(Eigen::Index n, Eigen::Index m)
      : initial(Vector::Zero(n)), transitions(Matrix::Zero(n, n)), emissions(Matrix::Zero(n, m)) {}
};

void accumulate_sequence(const HmmParams& model, std::span<const Token> seq, std::size_t index,
                         Matrix& log_alpha, Matrix& log_beta, ExpectedCounts& counts) {
  const Eigen::Index n = model.A.rows();
  const auto T = static_cast<Eigen::Index>(seq.size());
  log_alpha.resize(T, n);
  log_beta.resize(T, n);

  const double ll = forward(model, seq, &log_alpha);
  if (!std::isfinite(ll)) {
    std::ostringstream msg;
    msg << "training sequence " << index << " has zero likelihood under the current model";
    throw NumericError(msg.str());
  }
  backward(model, seq, log_beta);
  counts.total_log_likelihood += ll;

  for (Eigen::Index t = 0; t < T; ++t) {
    const Token o = seq[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double g = std::exp(log_alpha(t, i) + log_beta(t, i) - ll);
      if (t == 0) counts.initial[i] += g;
      counts.emissions(i, o) += g;
    }
  }

  // xi_t(i,j) = exp(alpha_t(i) + ln A_ij + ln B_j(o_{t+1}) + beta_{t+1}(j) - ll),
  // factored so that only 2n exponentials are needed per step. The A_ij
  // factor is common to every t and applied once at the end.
  Matrix pair_mass = Matrix::Zero(n, n);
  Vector a(n);
  Vector b(n);
  for (Eigen::Index t = 0; t + 1 < T; ++t) {
    const double mu = log_alpha.row(t).maxCoeff();
    const double mw = log_beta.row(t + 1).maxCoeff();
    if (mu == kNegInf || mw == kNegInf) continue;
    const Token next = seq[static_cast<std::size_t>(t + 1)];
    for (Eigen::Index i = 0; i < n; ++i) a[i] = std::exp(log_alpha(t, i) - mu);
    for (Eigen::Index j = 0; j < n; ++j) b[j] = std::exp(log_beta(t + 1, j) - mw) * model.B(j, next);
    pair_mass.noalias() += std::exp(mu + mw - ll) * (a * b.transpose());
  }
  counts.transitions += pair_mass.cwiseProduct(model.A);
}

// Rows with no expected mass keep their previous value.
void normalize_rows_into(const Matrix& counts, Matrix& target) {
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    const double total = counts.row(i).sum();
    if (total > 0.0) target.row(i) = counts.row(i) / total;
  }
}

void floor_and_normalize(auto&& row, double floor) {
  if (floor > 0.0) row = row.cwiseMax(floor);
  row /= row.sum();
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) throw ParameterError("vocabulary needs at least two tokens");
  char_ids_.fill(-1);
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] = index_.emplace(tokens_[i], static_cast<Token>(i));
    if (!inserted) throw ParameterError("duplicate vocabulary token '" + tokens_[i] + "'");
    if (tokens_[i].size() == 1) {
      char_ids_[static_cast<unsigned char>(tokens_[i][0])] = static_cast<std::int32_t>(i);
    }
  }
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

Token Vocabulary::encode(std::string_view token) const {
  const auto it = index_.find(std::string(token));
  if (it == index_.end()) throw DomainError("token '" + std::string(token) + "' not in vocabulary");
  return it->second;
}

const std::string& Vocabulary::lookup(Token id) const {
  if (id >= tokens_.size()) throw DomainError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

TokenSequence Vocabulary::encode_chars(std::string_view text) const {
  TokenSequence ids;
  ids.reserve(text.size());
  for (const char c : text) {
    const std::int32_t id = char_ids_[static_cast<unsigned char>(c)];
    if (id < 0) throw DomainError(std::string("character '") + c + "' not in vocabulary");
    ids.push_back(static_cast<Token>(id));
  }
  return ids;
}

std::string Vocabulary::decode_chars(std::span<const Token> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (const Token id : ids) out += lookup(id);
  return out;
}

// ---------------------------------------------------------------------------
// HmmParams

void HmmParams::validate(double tol) const {
  const Eigen::Index n = pi.size();
  if (n < 1) throw ParameterError("HMM needs at least one state");
  if (A.rows() != n || A.cols() != n) throw ParameterError("transition matrix must be n x n");
  if (B.rows() != n || B.cols() < 1) throw ParameterError("emission matrix must be n x m");
  auto check = [tol](const auto& row, const char* what) {
    if (!row.allFinite() || (row.array() < 0.0).any()) {
      throw ParameterError(std::string(what) + " has negative or non-finite entries");
    }
    if (std::abs(row.sum() - 1.0) > tol) {
      throw ParameterError(std::string(what) + " does not sum to one");
    }
  };
  check(pi, "initial distribution");
  for (Eigen::Index i = 0; i < n; ++i) {
    check(A.row(i), "transition row");
    check(B.row(i), "emission row");
  }
}

bool HmmParams::operator==(const HmmParams& other) const {
  return pi.size() == other.pi.size() && B.cols() == other.B.cols() && pi == other.pi &&
         A == other.A && B == other.B;
}

void TrainConfig::validate(std::size_t vocab_size) const {
  if (n_states < 1) throw ParameterError("n_states must be >= 1");
  if (max_iters < 1) throw ParameterError("max_iters must be >= 1");
  if (!(tol >= 0.0)) throw ParameterError("tol must be >= 0");
  const double limit = 1.0 / static_cast<double>(std::max(n_states, vocab_size));
  if (!(floor >= 0.0) || floor >= limit) {
    throw ParameterError("floor must lie in [0, 1/max(n_states, m))");
  }
}

// ---------------------------------------------------------------------------
// Operations

HmmParams init_random(std::size_t n, std::size_t m, Rng& rng) {
  if (n < 1) throw ParameterError("init_random: n must be >= 1");
  if (m < 2) throw ParameterError("init_random: m must be >= 2");
  const auto ni = static_cast<Eigen::Index>(n);
  const auto mi = static_cast<Eigen::Index>(m);
  HmmParams model{Vector(ni), Matrix(ni, ni), Matrix(ni, mi)};
  for (Eigen::Index i = 0; i < ni; ++i) model.pi[i] = rng.uniform();
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index j = 0; j < ni; ++j) model.A(i, j) = rng.uniform();
  for (Eigen::Index i = 0; i < ni; ++i)
    for (Eigen::Index k = 0; k < mi; ++k) model.B(i, k) = rng.uniform();
  // A zero draw is possible in principle; the row sums cannot all vanish.
  model.pi /= model.pi.sum();
  for (Eigen::Index i = 0; i < ni; ++i) {
    model.A.row(i) /= model.A.row(i).sum();
    model.B.row(i) /= model.B.row(i).sum();
  }
  return model;
}

double log_likelihood(const HmmParams& model, std::span<const Token> seq) {
  check_sequence(model, seq);
  return forward(model, seq, nullptr);
}

ViterbiResult viterbi(const HmmParams& model, std::span<const Token> seq) {
  check_sequence(model, seq);
  const Eigen::Index n = model.A.rows();
  const auto T = static_cast<Eigen::Index>(seq.size());
  const Matrix log_a = model.A.array().log().matrix();
  Matrix delta(T, n);
  Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> back(T, n);

  for (Eigen::Index i = 0; i < n; ++i) {
    delta(0, i) = std::log(model.pi[i]) + std::log(model.B(i, seq[0]));
    back(0, i) = 0;
  }
  for (Eigen::Index t = 1; t < T; ++t) {
    const Token o = seq[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < n; ++j) {
      Eigen::Index best = 0;
      double best_score = delta(t - 1, 0) + log_a(0, j);
      for (Eigen::Index i = 1; i < n; ++i) {
        const double score = delta(t - 1, i) + log_a(i, j);
        if (score > best_score) {  // strict: ties keep the lower state id
          best_score = score;
          best = i;
        }
      }
      delta(t, j) = best_score + std::log(model.B(j, o));
      back(t, j) = best;
    }
  }

  ViterbiResult result;
  result.path.resize(static_cast<std::size_t>(T));
  Eigen::Index state = 0;
  result.log_prob = delta(T - 1, 0);
  for (Eigen::Index i = 1; i < n; ++i) {
    if (delta(T - 1, i) > result.log_prob) {
      result.log_prob = delta(T - 1, i);
      state = i;
    }
  }
  for (Eigen::Index t = T - 1; t >= 0; --t) {
    result.path[static_cast<std::size_t>(t)] = static_cast<std::size_t>(state);
    state = back(t, state);
  }
  return result;
}

void apply_floor(HmmParams& model, double floor) {
  floor_and_normalize(model.pi, floor);
  for (Eigen::Index i = 0; i < model.A.rows(); ++i) {
    floor_and_normalize(model.A.row(i), floor);
    floor_and_normalize(model.B.row(i), floor);
  }
}

TrainResult baum_welch(const HmmParams& initial, std::span<const TokenSequence> sequences,
                       const TrainConfig& config) {
  if (sequences.empty()) throw ParameterError("baum_welch: no training sequences");
  initial.validate(1e-6);
  TrainConfig effective = config;
  effective.n_states = initial.n();
  effective.validate(initial.m());
  for (const auto& seq : sequences) check_sequence(initial, seq);

  const auto n = static_cast<Eigen::Index>(initial.n());
  const auto m = static_cast<Eigen::Index>(initial.m());
  TrainResult result{initial, {}};
  HmmParams& model = result.model;
  Matrix log_alpha;
  Matrix log_beta;

  for (std::size_t iter = 0; iter < config.max_iters; ++iter) {
    ExpectedCounts counts(n, m);
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      accumulate_sequence(model, sequences[s], s, log_alpha, log_beta, counts);
    }
    result.history.push_back(counts.total_log_likelihood);
    if (iter > 0 && counts.total_log_likelihood - result.history[iter - 1] < config.tol) break;

    model.pi = counts.initial / counts.initial.sum();
    normalize_rows_into(counts.transitions, model.A);
    normalize_rows_into(counts.emissions, model.B);
    apply_floor(model, config.floor);
  }
  return result;
}

TrainResult baum_welch(std::span<const TokenSequence> sequences, const TrainConfig& config,
                       Rng& rng, std::size_t vocab_size) {
  if (sequences.empty()) throw ParameterError("baum_welch: no training sequences");
  Token max_token = 0;
  for (const auto& seq : sequences) {
    if (seq.empty()) throw ParameterError("baum_welch: empty training sequence");
    max_token = std::max(max_token, *std::max_element(seq.begin(), seq.end()));
  }
  const std::size_t m =
      vocab_size > 0 ? vocab_size : std::max<std::size_t>(2, std::size_t{max_token} + 1);
  config.validate(m);
  return baum_welch(init_random(config.n_states, m, rng), sequences, config);
}

TokenSequence sample(const HmmParams& model, std::size_t length, Rng& rng) {
  if (length == 0) throw ParameterError("sample: length must be >= 1");
  model.validate(1e-6);
  TokenSequence out(length);
  const std::span<const double> pi(model.pi.data(), model.n());
  std::size_t state = rng.categorical(pi);
  for (std::size_t t = 0; t < length; ++t) {
    if (t > 0) {
      state = rng.categorical(
          std::span<const double>(model.A.row(static_cast<Eigen::Index>(state)).data(), model.n()));
    }
    out[t] = static_cast<Token>(rng.categorical(
        std::span<const double>(model.B.row(static_cast<Eigen::Index>(state)).data(), model.m())));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON

void to_json(Json& j, const HmmParams& model) {
  const auto n = static_cast<Eigen::Index>(model.n());
  const auto m = static_cast<Eigen::Index>(model.m());
  Json pi = Json::array();
  for (Eigen::Index i = 0; i < n; ++i) pi.push_back(model.pi[i]);
  Json a = Json::array();
  Json b = Json::array();
  for (Eigen::Index i = 0; i < n; ++i) {
    Json arow = Json::array();
    for (Eigen::Index k = 0; k < n; ++k) arow.push_back(model.A(i, k));
    a.push_back(std::move(arow));
    Json brow = Json::array();
    for (Eigen::Index k = 0; k < m; ++k) brow.push_back(model.B(i, k));
    b.push_back(std::move(brow));
  }
  j = Json::object();
  j["n"] = model.n();
  j["m"] = model.m();
  j["pi"] = std::move(pi);
  j["A"] = std::move(a);
  j["B"] = std::move(b);
}

void from_json(const Json& j, HmmParams& model) {
  try {
    const auto n = j.at("n").get<Eigen::Index>();
    const auto m = j.at("m").get<Eigen::Index>();
    if (n < 1 || m < 2) throw ParameterError("HMM JSON: invalid n or m");
    const auto& pi = j.at("pi");
    const auto& a = j.at("A");
    const auto& b = j.at("B");
    if (static_cast<Eigen::Index>(pi.size()) != n || static_cast<Eigen::Index>(a.size()) != n ||
        static_cast<Eigen::Index>(b.size()) != n) {
      throw ParameterError("HMM JSON: array lengths disagree with n");
    }
    model.pi.resize(n);
    model.A.resize(n, n);
    model.B.resize(n, m);
    for (Eigen::Index i = 0; i < n; ++i) {
      model.pi[i] = pi[static_cast<std::size_t>(i)].get<double>();
      const auto& arow = a[static_cast<std::size_t>(i)];
      const auto& brow = b[static_cast<std::size_t>(i)];
      if (static_cast<Eigen::Index>(arow.size()) != n || static_cast<Eigen::Index>(brow.size()) != m) {
        throw ParameterError("HMM JSON: row length mismatch");
      }
      for (Eigen::Index k = 0; k < n; ++k) model.A(i, k) = arow[static_cast<std::size_t>(k)].get<double>();
      for (Eigen::Index k = 0; k < m; ++k) model.B(i, k) = brow[static_cast<std::size_t>(k)].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParameterError(std::string("HMM JSON: ") + e.what());
  }
  model.validate(1e-6);
}

}  // namespace hmme
