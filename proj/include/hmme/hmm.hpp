#pragma once

// Discrete-emission hidden Markov models: parameters, forward likelihood,
// Viterbi decoding, multi-sequence Baum-Welch, and ancestral sampling.
// All probabilities of sequences are handled in natural-log space.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include "json.hpp"

#include "hmme/rng.hpp"

namespace hmme {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

using Token = std::uint32_t;
using TokenSequence = std::vector<Token>;

// Ordered set of distinct token strings; ids are positions in the list.
class Vocabulary {
 public:
  Vocabulary() { char_ids_.fill(-1); }
  // Throws ParameterError on duplicates or fewer than two tokens.
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }

  bool contains(std::string_view token) const;
  Token encode(std::string_view token) const;  // throws DomainError
  const std::string& lookup(Token id) const;   // throws DomainError

  // One token per character.
  TokenSequence encode_chars(std::string_view text) const;
  std::string decode_chars(std::span<const Token> ids) const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, Token> index_;
  std::array<std::int32_t, 256> char_ids_{};
};

// lambda = (A, B, pi) for an n-state model over m symbols.
struct HmmParams {
  Vector pi;  // n
  Matrix A;   // n x n, row-stochastic
  Matrix B;   // n x m, row-stochastic

  std::size_t n() const noexcept { return static_cast<std::size_t>(pi.size()); }
  std::size_t m() const noexcept { return static_cast<std::size_t>(B.cols()); }

  // Throws ParameterError unless shapes agree, entries are >= 0 and every
  // distribution sums to one within tol.
  void validate(double tol = 1e-9) const;

  bool operator==(const HmmParams& other) const;
};

struct TrainConfig {
  std::size_t n_states = 5;
  std::size_t max_iters = 25;
  double tol = 1e-4;           // nats of total log-likelihood improvement
  std::uint64_t seed = 0;
  double floor = 1e-10;        // 0 disables flooring

  void validate(std::size_t vocab_size) const;
};

struct TrainResult {
  HmmParams model;
  // Total log-likelihood of the training set evaluated at the start of
  // every EM iteration.
  std::vector<double> history;
};

struct ViterbiResult {
  std::vector<std::size_t> path;
  double log_prob = 0.0;
};

// Entries uniform(0,1) then row-normalized.
HmmParams init_random(std::size_t n, std::size_t m, Rng& rng);

// ln p(O | lambda) by the log-space forward recursion.
double log_likelihood(const HmmParams& model, std::span<const Token> seq);

ViterbiResult viterbi(const HmmParams& model, std::span<const Token> seq);

// Multi-sequence EM from a random initialization drawn from rng. A
// vocab_size of 0 infers m from the largest token id present (minimum 2).
TrainResult baum_welch(std::span<const TokenSequence> sequences, const TrainConfig& config,
                       Rng& rng, std::size_t vocab_size = 0);

// Multi-sequence EM from an explicit starting point. config.n_states is
// ignored in favour of initial.n().
TrainResult baum_welch(const HmmParams& initial, std::span<const TokenSequence> sequences,
                       const TrainConfig& config);

TokenSequence sample(const HmmParams& model, std::size_t length, Rng& rng);

// Clamp every entry to at least floor and renormalize each distribution.
void apply_floor(HmmParams& model, double floor);

using Json = nlohmann::ordered_json;

void to_json(Json& j, const HmmParams& model);
void from_json(const Json& j, HmmParams& model);

}  // namespace hmme
