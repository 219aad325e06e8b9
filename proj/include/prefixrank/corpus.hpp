#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefixrank/generator.hpp"
#include "prefixrank/sampling.hpp"
#include "prefixrank/types.hpp"

namespace prefixrank::corpus {

/// Half-open token range [begin, end) into a Document.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
  friend auto operator<=>(const Span&, const Span&) = default;
};

struct Document {
  std::string doc_id;
  Tokens tokens;
  /// Strictly increasing token indices where sentences begin; starts at 0.
  std::vector<std::size_t> sentence_starts;

  /// Checks the sentence_starts invariants; throws Error on violation.
  void validate() const;
};

struct Tokenized {
  Tokens tokens;
  std::vector<std::size_t> sentence_starts;
};

/// Whitespace split, then every leading/trailing character from
/// . , ! ? ; : " ' ( ) becomes its own token. Sentences start at token 0 and
/// after every ".", "!" or "?" token.
Tokenized tokenize(std::string_view text);

bool is_punctuation(std::string_view token) noexcept;
bool is_sentence_terminator(std::string_view token) noexcept;
/// Tokens that are not single punctuation characters; all length rules count these.
std::size_t word_count(std::span<const Token> tokens) noexcept;
/// Recomputes sentence starts for an existing token sequence.
std::vector<std::size_t> sentence_starts_of(std::span<const Token> tokens);

Document make_document(std::string doc_id, std::string_view text);

enum class CorpusFormat { jsonl, plain_dir };

/// JSONL: one {"doc_id", "text"} object per line (blank lines skipped).
/// plain_dir: every regular file in the directory, sorted by name, doc_id = file stem.
std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format);
std::vector<Document> parse_jsonl_corpus(std::istream& in);
void write_jsonl_corpus(std::ostream& out, std::span<const Document> docs);

/// Sentence-boundary index with cumulative word counts.
///
/// Boundaries are the sentence starts plus the document end; words(i, j) is
/// the number of word tokens between boundary i and boundary j.
class BoundaryIndex {
 public:
  explicit BoundaryIndex(const Document& doc);

  std::size_t size() const noexcept { return bounds_.size(); }
  std::size_t position(std::size_t i) const noexcept { return bounds_[i]; }
  std::size_t words(std::size_t i, std::size_t j) const noexcept { return cum_[j] - cum_[i]; }
  /// Boundary index for a token position, if that position is a boundary.
  std::optional<std::size_t> find(std::size_t token_pos) const noexcept;
  std::size_t token_count() const noexcept { return bounds_.back(); }

 private:
  std::vector<std::size_t> bounds_;
  std::vector<std::size_t> cum_;
};

struct CorpusConfig {
  std::size_t prefix_len_words = 256;
  std::size_t cont_min_words = 10;
  std::size_t cont_max_words = 128;
  std::uint64_t seed = 0;

  void validate() const;
  /// Shortest acceptable prefix when no boundary gives exactly prefix_len_words: ceil(3/4 of it).
  std::size_t min_prefix_words() const noexcept { return (3 * prefix_len_words + 3) / 4; }
};

struct PairSpans {
  Span prefix;
  Span continuation;
  friend bool operator==(const PairSpans&, const PairSpans&) = default;
};

/// At most one (prefix, continuation) pair per sentence start.
///
/// The prefix runs from the sentence start to the furthest later sentence
/// start that keeps it within prefix_len_words words, and is skipped if that
/// leaves fewer than min_prefix_words(). The continuation ends at a boundary;
/// the achievable word lengths in [cont_min, cont_max] are collected (first
/// boundary for each length) and one is chosen with
/// CounterRng(combine_seed(seed, fnv1a64(doc_id)), prefix.begin).below(0, n).
std::vector<PairSpans> extract_pairs(const Document& doc, const CorpusConfig& cfg);

/// Insufficient sentence-aligned, length-matched spans for the request.
class InsufficientCandidates : public Error {
 public:
  InsufficientCandidates(std::size_t requested, std::size_t available);
  std::size_t available() const noexcept { return available_; }

 private:
  std::size_t available_;
};

/// Every sentence-aligned span with the gold span's word count, excluding the
/// gold span itself, ordered by (begin, end).
std::vector<Span> inbook_candidates(const Document& doc, Span gold);

/// Draws `count` distinct InBook negatives without replacement.
///
/// Partial Fisher-Yates over inbook_candidates(): for i in [0, count),
/// j = i + rng.below(i, m - i), swap(c[i], c[j]); returns c[0..count). The
/// rng is CounterRng(combine_seed(seed, fnv1a64(doc_id)), gold.begin * 2^32 + gold.end).
std::vector<Span> sample_inbook_negatives(const Document& doc, Span gold, std::size_t count,
                                          std::uint64_t seed);

Tokens slice(const Document& doc, Span span);

struct TrainingTriple {
  std::string doc_id;
  Tokens prefix;
  Tokens continuation;
  std::optional<Tokens> generation;

  friend bool operator==(const TrainingTriple&, const TrainingTriple&) = default;
};

TrainingTriple make_triple(const Document& doc, const PairSpans& pair);

/// Pairs for all documents, in document order then pair order.
std::vector<TrainingTriple> build_triples(std::span<const Document> docs, const CorpusConfig& cfg,
                                          std::size_t jobs = 1);

/// Seeded 50/50 split: first = floor(n/2) triples reserved for training the
/// generator, second = the rest (to receive generations). Both keep input order.
std::pair<std::vector<TrainingTriple>, std::vector<TrainingTriple>> split_for_generator(
    std::vector<TrainingTriple> triples, std::uint64_t seed);

struct GenerativeNegativeOptions {
  std::size_t min_words = 10;
  std::size_t max_words = 128;
  SamplingStrategy strategy = SamplingStrategy::nucleus(0.9);
  std::uint64_t seed = 0;
  /// Re-draws (with a fresh stream) when a generation copies a document span.
  std::size_t max_attempts = 8;
};

/// Failure while generating for one triple.
class GenerationFailure : public Error {
 public:
  GenerationFailure(std::size_t index, const std::string& what);
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Gives every triple one generation conditioned on its prefix.
///
/// Triple i draws its target word count from CounterRng(seed, i) counter 0,
/// then asks the generator for 2 * words + 16 tokens with seed
/// combine_seed(seed, i) (stream = attempt number) and truncates right after
/// the target-th word token. When `sources` is given, a generation that
/// reproduces a contiguous span of its source document is re-drawn.
std::vector<TrainingTriple> build_generative_negatives(std::vector<TrainingTriple> triples,
                                                       const Generator& generator,
                                                       const GenerativeNegativeOptions& options,
                                                       std::span<const Document> sources = {});

/// True if `needle` occurs contiguously in `haystack`.
bool contains_span(std::span<const Token> haystack, std::span<const Token> needle);

void write_dataset(std::ostream& out, std::span<const TrainingTriple> triples);
std::vector<TrainingTriple> read_dataset(std::istream& in);

}  // namespace prefixrank::corpus
