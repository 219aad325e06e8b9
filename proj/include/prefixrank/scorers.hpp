#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefixrank/encoder.hpp"
#include "prefixrank/generator.hpp"
#include "prefixrank/types.hpp"

namespace prefixrank::scoring {

/// score(prefix, candidate) -> real; higher is better. Implementations are
/// immutable after construction and safe to call concurrently.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual double score(std::span<const Token> prefix, std::span<const Token> candidate) const = 0;
  /// One score per candidate, in order.
  virtual std::vector<double> score_all(std::span<const Token> prefix, std::span<const Tokens> candidates) const;
  virtual std::string describe() const = 0;
};

/// encode(prefix as prefix) . encode(candidate as suffix). Throws on empty input.
double score_rankgen(const encoder::EncoderParams& params, std::span<const Token> prefix,
                     std::span<const Token> candidate);

/// Fraction of distinct candidate tokens that also occur in the prefix. No
/// stopword removal; punctuation tokens count like any other token. Throws
/// on an empty candidate.
double score_unigram_overlap(std::span<const Token> prefix, std::span<const Token> candidate);

enum class LikelihoodKind { cll, avg_cll, avg_ull, pmi };

LikelihoodKind parse_likelihood_kind(std::string_view text);
std::string to_string(LikelihoodKind kind);

/// Natural-log likelihood scores; lengths count every token.
///
///   cll     = log P(c | p)
///   avg_cll = log P(c | p) / |c|
///   avg_ull = log P(p + c) / (|p| + |c|)   (no conditioning context)
///   pmi     = log P(c | p) - log P(c)
double score_likelihood(LikelihoodKind kind, const LikelihoodModel& lm, std::span<const Token> prefix,
                        std::span<const Token> candidate);

class RankGenScorer final : public Scorer {
 public:
  explicit RankGenScorer(std::shared_ptr<const encoder::EncoderParams> params);
  double score(std::span<const Token> prefix, std::span<const Token> candidate) const override;
  /// Encodes the prefix once.
  std::vector<double> score_all(std::span<const Token> prefix, std::span<const Tokens> candidates) const override;
  std::string describe() const override { return "rankgen"; }
  const encoder::EncoderParams& params() const noexcept { return *params_; }

 private:
  std::shared_ptr<const encoder::EncoderParams> params_;
};

class UnigramOverlapScorer final : public Scorer {
 public:
  double score(std::span<const Token> prefix, std::span<const Token> candidate) const override {
    return score_unigram_overlap(prefix, candidate);
  }
  std::string describe() const override { return "overlap"; }
};

class LikelihoodScorer final : public Scorer {
 public:
  LikelihoodScorer(LikelihoodKind kind, std::shared_ptr<const LikelihoodModel> lm);
  double score(std::span<const Token> prefix, std::span<const Token> candidate) const override {
    return score_likelihood(kind_, *lm_, prefix, candidate);
  }
  std::string describe() const override { return to_string(kind_); }
  LikelihoodKind kind() const noexcept { return kind_; }

 private:
  LikelihoodKind kind_;
  std::shared_ptr<const LikelihoodModel> lm_;
};

/// Builds a scorer from a CLI string:
///   rankgen:<encoder.ckpt>
///   overlap | unigram_overlap
///   cll:<lm> | avg_cll:<lm> | avg_ull:<lm> | pmi:<lm>
/// where <lm> is an n-gram checkpoint path or bridge:<base_url>.
std::unique_ptr<Scorer> make_scorer(std::string_view spec);

}  // namespace prefixrank::scoring
