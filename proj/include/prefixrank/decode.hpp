#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "prefixrank/generator.hpp"
#include "prefixrank/sampling.hpp"
#include "prefixrank/scorers.hpp"

namespace prefixrank::decode {

struct DecodeConfig {
  /// L: new tokens per block between scoring rounds.
  std::size_t rerank_length = 20;
  /// B: hypotheses kept after each round.
  std::size_t beam_size = 2;
  /// N: samples drawn per kept hypothesis.
  std::size_t samples_per_beam = 10;
  /// Total new tokens.
  std::size_t max_length = 128;
  SamplingStrategy strategy = SamplingStrategy::nucleus(0.9);
  std::uint64_t seed = 0;
  /// Workers for the generations and scorings inside one round.
  std::size_t jobs = 1;

  void validate() const;
};

struct Beam {
  Tokens tokens;
  /// Scorer value against the original prefix.
  double score = 0.0;
  /// Generation hit end-of-sequence.
  bool finished = false;

  friend bool operator==(const Beam&, const Beam&) = default;
};

/// A generator or scorer failure inside rankgen_search.
class DecodeError : public Error {
 public:
  DecodeError(std::size_t round, const std::string& what);
  std::size_t round() const noexcept { return round_; }

 private:
  std::size_t round_;
};

/// Ranking order: higher score first, then the lexicographically smaller
/// token sequence.
bool ranks_before(const Beam& a, const Beam& b);

/// Beam search with reranking.
///
/// Starts from one empty beam. Round r extends every live beam with N samples
/// of min(L, remaining) tokens, generated from prefix + beam. Beam b's samples
/// use streams b*N .. b*N + N - 1 and counters from r*L, so B = N = 1
/// reproduces a single generate() call token for token. Every hypothesis is
/// scored against the original prefix (never the extended context). Finished
/// beams are carried into the next round's pool unchanged. The top B of the
/// pool survive; the loop ends when no beam is live. A hypothesis left empty
/// by an immediate end-of-sequence scores -infinity. Returns up to B beams,
/// best first.
std::vector<Beam> rankgen_search(std::span<const Token> prefix, const Generator& generator,
                                 const scoring::Scorer& scorer, const DecodeConfig& cfg);

/// Draws num_samples full-length samples in one call (streams 0..n-1) and
/// returns all of them ranked. Its first entry equals rankgen_search with
/// L = max_length, B = 1, N = num_samples.
std::vector<Beam> rerank_full(std::span<const Token> prefix, const Generator& generator,
                              const scoring::Scorer& scorer, std::size_t num_samples, std::size_t max_length,
                              const SamplingStrategy& strategy, std::uint64_t seed);

/// Longest leading run that ends right after a sentence terminator and has at
/// most max_words word tokens. Input without a terminator is returned whole;
/// if the first sentence is already too long the result is empty.
Tokens truncate_to_sentence(std::span<const Token> tokens, std::size_t max_words);

}  // namespace prefixrank::decode
