#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string_view>
#include <vector>

#include "prefixrank/corpus.hpp"
#include "prefixrank/generator.hpp"
#include "prefixrank/sampling.hpp"
#include "prefixrank/vocab.hpp"

namespace prefixrank::lm {

struct NGramOptions {
  std::size_t order = 3;
  /// Interpolation weights, lowest order first; must sum to 1.
  std::vector<double> weights = {0.1, 0.3, 0.6};
  /// Add-alpha smoothing of the unigram level.
  double alpha = 0.1;

  void validate() const;
};

/// Interpolated n-gram language model over word tokens.
///
///   P(w | ctx) = sum_k lambda_k * P_k(w | last k-1 tokens of ctx)
///
/// P_1 is add-alpha smoothed relative frequency over every id except BOS,
/// which is never predicted. P_k for k >= 2 is the relative frequency of w
/// after the (k-1)-token history. A level whose history is unseen or longer
/// than the context passes its weight down to the next lower level, so every
/// distribution is normalized and an empty context gives the smoothed unigram.
/// Training sequences are not padded; UNK and EOS only carry smoothing mass
/// unless they occur in training data.
class NGramModel final : public Generator, public LikelihoodModel {
 public:
  using Id = std::uint32_t;
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::string_view kBos = "<s>";
  static constexpr std::string_view kEos = "</s>";
  static constexpr Id kUnkId = 0;
  static constexpr Id kBosId = 1;
  static constexpr Id kEosId = 2;

  static NGramModel train(std::span<const Tokens> sequences, const NGramOptions& options = {});
  static NGramModel train(std::span<const corpus::Document> docs, const NGramOptions& options = {});

  NextTokenDistribution next_distribution(std::span<const Token> context) const;
  NextTokenDistribution next_distribution_ids(std::span<const Id> context) const;
  /// Single entry of next_distribution_ids, computed with the same arithmetic.
  double token_probability(std::span<const Id> context, Id next) const;

  double sequence_logprob(std::span<const Token> prefix, std::span<const Token> continuation) const override;

  std::vector<GeneratedSample> generate(const GenerationRequest& request) const override;
  /// Convenience overload returning only token sequences.
  std::vector<Tokens> generate(std::span<const Token> prefix, std::size_t num_new_tokens, std::size_t num_samples,
                               const SamplingStrategy& strategy, std::uint64_t seed) const;
  std::string describe() const override;

  Id id_of(std::string_view token) const;
  std::vector<Id> ids_of(std::span<const Token> tokens) const;

  std::size_t order() const noexcept { return order_; }
  double alpha() const noexcept { return alpha_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  std::size_t vocab_size() const noexcept { return vocab_.size(); }

  /// Layout documented in docs/FORMATS.md.
  void save(std::ostream& out) const;
  void save(const std::filesystem::path& path) const;
  static NGramModel load(std::istream& in);
  static NGramModel load(const std::filesystem::path& path);

  static constexpr std::uint32_t kFormatVersion = 1;

  friend bool operator==(const NGramModel& a, const NGramModel& b);

 private:
  struct Successors {
    std::uint64_t total = 0;
    /// (next id, count), sorted by id.
    std::vector<std::pair<Id, std::uint64_t>> next;
  };
  using History = std::vector<Id>;

  NGramModel() = default;
  /// Effective per-level weights for a context (index 0 = unigram) and the
  /// matched successor list per level (nullptr when the level is skipped).
  void resolve(std::span<const Id> context, std::vector<double>& weights,
               std::vector<const Successors*>& levels) const;
  double unigram_probability(Id id) const noexcept;

  std::size_t order_ = 1;
  std::vector<double> weights_;
  double alpha_ = 0.1;
  Vocabulary vocab_;
  std::vector<std::uint64_t> unigram_counts_;
  std::uint64_t unigram_total_ = 0;
  /// histories_[k-2] holds the (k-1)-token histories of order-k n-grams.
  std::vector<std::map<History, Successors>> histories_;
};

}  // namespace prefixrank::lm
