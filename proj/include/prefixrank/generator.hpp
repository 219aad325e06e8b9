#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "prefixrank/sampling.hpp"
#include "prefixrank/types.hpp"

namespace prefixrank {

/// One call's worth of sampling work.
///
/// Sample j draws its randomness from the counter stream
/// (seed, stream_base + j), and the t-th new token of that sample reads
/// counter (counter_base + t). Sample j therefore never depends on how many
/// other samples were requested, and a continuation generated in blocks with
/// advancing counter_base reproduces a single long generation exactly.
struct GenerationRequest {
  Tokens context;
  std::size_t num_new_tokens = 1;
  std::size_t num_samples = 1;
  SamplingStrategy strategy = SamplingStrategy::ancestral();
  std::uint64_t seed = 0;
  std::uint64_t stream_base = 0;
  std::uint64_t counter_base = 0;
};

struct GeneratedSample {
  Tokens tokens;
  /// True when generation stopped at end-of-sequence before num_new_tokens.
  bool finished = false;

  bool operator==(const GeneratedSample&) const = default;
};

/// An autoregressive text source.
class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::vector<GeneratedSample> generate(const GenerationRequest& request) const = 0;
  virtual std::string describe() const = 0;
  /// Whether identical requests are guaranteed to give identical samples.
  virtual bool deterministic() const { return true; }
};

/// A model that assigns exact conditional log-probabilities (natural log).
class LikelihoodModel {
 public:
  virtual ~LikelihoodModel() = default;
  /// log P(continuation | prefix); 0 for an empty continuation.
  virtual double sequence_logprob(std::span<const Token> prefix,
                                  std::span<const Token> continuation) const = 0;
};

}  // namespace prefixrank
