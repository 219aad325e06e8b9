#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "prefixrank/corpus.hpp"

namespace prefixrank::corpus {

/// Topic-structured toy corpus.
///
/// Each document walks through `segments_per_doc` distinct topics (a seeded
/// sample of the topic inventory). Every sentence in a segment mixes function
/// words, the document's recurring names, and words of the segment's topic,
/// so a continuation shares its topic with the end of its prefix while text
/// from elsewhere in the same document mostly does not.
struct SyntheticCorpusConfig {
  std::size_t num_docs = 200;
  std::size_t num_topics = 24;
  std::size_t words_per_topic = 18;
  std::size_t num_function_words = 40;
  std::size_t num_names = 40;
  std::size_t names_per_doc = 3;
  std::size_t segments_per_doc = 18;
  std::size_t min_sentences_per_segment = 20;
  std::size_t max_sentences_per_segment = 28;
  std::size_t min_words_per_sentence = 6;
  std::size_t max_words_per_sentence = 10;
  double p_topic_word = 0.35;
  double p_name = 0.08;
  /// Fraction of topic slots filled from a random other topic.
  double p_off_topic = 0.05;
  std::uint64_t seed = 20220527;
};

struct SyntheticCorpus {
  std::vector<Document> documents;
  /// topic_words[t] = the vocabulary of topic t.
  std::vector<Tokens> topic_words;
  Tokens function_words;
  Tokens names;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& cfg = {});

}  // namespace prefixrank::corpus
