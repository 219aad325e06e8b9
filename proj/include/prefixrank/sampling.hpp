#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace prefixrank {

/// Normalized probability vector indexed by token id.
struct NextTokenDistribution {
  std::vector<double> probs;

  std::size_t size() const noexcept { return probs.size(); }
  double sum() const noexcept;
};

struct SamplingStrategy {
  enum class Kind { greedy, ancestral, nucleus, top_k, typical };

  Kind kind = Kind::ancestral;
  /// p for nucleus, k for top_k, tau for typical; unused otherwise.
  double param = 0.0;

  static SamplingStrategy greedy() { return {Kind::greedy, 0.0}; }
  static SamplingStrategy ancestral() { return {Kind::ancestral, 0.0}; }
  static SamplingStrategy nucleus(double p = 0.9) { return {Kind::nucleus, p}; }
  static SamplingStrategy top_k(std::size_t k = 40) { return {Kind::top_k, static_cast<double>(k)}; }
  static SamplingStrategy typical(double tau = 0.9) { return {Kind::typical, tau}; }

  /// Parses "greedy", "ancestral", "nucleus:0.9", "top_k:40" (or "top-k:40"),
  /// "typical:0.9". A bare parametric name takes its default.
  static SamplingStrategy parse(std::string_view text);

  /// Throws prefixrank::Error when the parameter is out of range.
  void validate() const;
  std::string to_string() const;

  friend bool operator==(const SamplingStrategy&, const SamplingStrategy&) = default;
};

/// Applies a truncation rule and renormalizes.
///
///   greedy    point mass on the argmax (ties: lowest id)
///   top_k     k most probable tokens
///   nucleus   shortest prefix of the (prob desc, id asc) order with mass >= p
///   typical   shortest prefix of the order by |-log q(w) - H(q)| asc
///             (ties: prob desc, id asc) with mass >= tau
///   ancestral identity
///
/// Zero-probability tokens are never kept. p = 1 and tau = 1 return the input.
NextTokenDistribution truncate_distribution(const NextTokenDistribution& dist,
                                            const SamplingStrategy& strategy);

/// Inverse-CDF draw over token-id order: the first id whose cumulative mass
/// exceeds `u` in [0, 1). Falls back to the last positive entry when rounding
/// leaves the total just below `u`.
std::size_t sample_inverse_cdf(std::span<const double> probs, double u);

}  // namespace prefixrank
