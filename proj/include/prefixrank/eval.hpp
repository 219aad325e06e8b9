#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefixrank/corpus.hpp"
#include "prefixrank/decode.hpp"
#include "prefixrank/generator.hpp"
#include "prefixrank/scorers.hpp"

namespace prefixrank::eval {

/// Gold plus distractors for one prefix.
struct SuffixIdInstance {
  Tokens prefix;
  std::vector<Tokens> candidates;
  std::size_t gold_index = 0;

  /// At least 2 candidates and gold_index in range.
  void validate() const;
  friend bool operator==(const SuffixIdInstance&, const SuffixIdInstance&) = default;
};

struct EvalReport {
  std::string metric;
  double value = 0.0;
  std::size_t n = 0;
  nlohmann::json config = nlohmann::json::object();
  /// Optional per-instance values.
  std::vector<double> per_instance;

  void validate() const;
  nlohmann::json to_json() const;
};

/// JSONL of {"prefix": [..], "candidates": [[..], ..], "gold_index": i}.
std::vector<SuffixIdInstance> read_suffix_id_instances(std::istream& in);
void write_suffix_id_instances(std::ostream& out, std::span<const SuffixIdInstance> instances);

/// For every extracted pair: the gold continuation plus `distractors` InBook
/// negatives (pairs without enough negatives are skipped). The gold slot is
/// CounterRng(combine_seed(seed, fnv1a64(doc_id)), prefix begin) counter 1,
/// below distractors + 1.
std::vector<SuffixIdInstance> make_inbook_instances(std::span<const corpus::Document> docs,
                                                    const corpus::CorpusConfig& cfg, std::size_t distractors,
                                                    std::uint64_t seed);

/// Two-way instances pairing each triple's continuation with its generation;
/// gold at index 0. Triples without a generation are skipped.
std::vector<SuffixIdInstance> make_generative_instances(std::span<const corpus::TrainingTriple> triples);

/// Fraction of instances whose gold candidate scores strictly highest; a tie
/// with any distractor counts as a failure. per_instance holds 1/0.
EvalReport suffix_id_accuracy(std::span<const SuffixIdInstance> instances, const scoring::Scorer& scorer,
                              std::size_t jobs = 1);

struct ScoredSpan {
  corpus::Span span;
  double score = 0.0;
  friend bool operator==(const ScoredSpan&, const ScoredSpan&) = default;
};

/// For each sentence start, the longest sentence-aligned span holding at most
/// window_words words (spans whose first sentence alone is longer are skipped).
std::vector<corpus::Span> sentence_windows(const corpus::Document& doc, std::size_t window_words);

/// Scores every window except the gold span against the prefix and returns
/// the best `count`, by score descending then span ascending.
std::vector<ScoredSpan> mine_hard_negatives(const corpus::Document& doc, std::span<const Token> prefix,
                                            corpus::Span gold, const scoring::Scorer& scorer,
                                            std::size_t window_words = 128, std::size_t count = 10);

/// One instance per extracted pair whose candidates are every pair
/// continuation of the same document.
std::vector<SuffixIdInstance> make_retrieval_instances(std::span<const corpus::Document> docs,
                                                       const corpus::CorpusConfig& cfg);

/// Gold rank = 1 + #{distractors scoring >= gold}; recall@k = fraction with
/// rank <= k. One report per k, in the order given.
std::vector<EvalReport> retrieval_recall(std::span<const SuffixIdInstance> instances, const scoring::Scorer& scorer,
                                         std::span<const std::size_t> ks, std::size_t jobs = 1);

inline const std::vector<std::size_t> kDefaultRecallKs = {1, 3, 5, 10, 50};

/// Per sequence: tokens that also appear among the previous `window` tokens,
/// divided by the sequence length. Averaged over sequences.
double rep_of(std::span<const Token> tokens, std::size_t window = 20);
EvalReport rep_score(std::span<const Tokens> continuations, std::size_t window = 20);

/// Corpus mean of score_unigram_overlap(prefix, continuation).
EvalReport prefix_overlap(std::span<const std::pair<Tokens, Tokens>> pairs);

struct GridPoint {
  std::size_t rerank_length = 20;
  std::size_t beam_size = 1;
  std::size_t samples_per_beam = 1;
  friend bool operator==(const GridPoint&, const GridPoint&) = default;
};

/// L in {5, 10, 20, 50, max_length} (values above max_length dropped) crossed
/// with (B, N) in {(1,1), (1,5), (1,10), (2,5), (1,20), (2,10), (4,5), (1,40), (2,20)}.
std::vector<GridPoint> default_grid(std::size_t max_length);

struct GridRow {
  GridPoint point;
  double metric = 0.0;
  double seconds_per_generation = 0.0;
};

/// metric(prefixes, top continuations) -> value.
using GridMetric = std::function<double(std::span<const Tokens>, std::span<const Tokens>)>;

/// Runs rankgen_search for every grid point over every prefix, sequentially,
/// timing wall-clock seconds per prefix.
std::vector<GridRow> grid_search(std::span<const Tokens> prefixes, const Generator& generator,
                                 const scoring::Scorer& scorer, std::span<const GridPoint> grid,
                                 std::size_t max_length, const SamplingStrategy& strategy, std::uint64_t seed,
                                 const GridMetric& metric);

void write_grid_csv(std::ostream& out, std::span<const GridRow> rows);

struct BenchResult {
  std::size_t generations = 0;
  double seconds_per_generation = 0.0;
  double tokens_per_second = 0.0;
};

/// Sequential timing of rankgen_search over the prefixes, `repeats` times.
BenchResult bench(std::span<const Tokens> prefixes, const Generator& generator, const scoring::Scorer& scorer,
                  const decode::DecodeConfig& cfg, std::size_t repeats = 1);

/// Aligned plain-text rendering of reports.
std::string format_table(std::span<const EvalReport> reports);

}  // namespace prefixrank::eval
