#include "prefixrank/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "prefixrank/rng.hpp"

namespace prefixrank::corpus {
namespace {

constexpr std::array<const char*, 60> kFunctionWords = {
    "the",  "of",    "and",   "a",     "to",    "in",    "was",   "that",  "it",    "with",
    "on",   "for",   "as",    "by",    "at",    "from",  "they",  "this",  "had",   "but",
    "his",  "her",   "their", "one",   "all",   "were",  "when",  "there", "which", "into",
    "then", "some",  "more",  "very",  "after", "over",  "under", "still", "only",  "again",
    "many", "most",  "where", "while", "never", "often", "also",  "just",  "even",  "here",
    "near", "until", "upon",  "those", "these", "has",   "have",  "been",  "so",    "yet"};

constexpr std::string_view kConsonants = "bdfgklmnprstvz";
constexpr std::string_view kVowels = "aeiou";

std::string pseudo_word(RngStream& rng, std::size_t syllables) {
  std::string w;
  for (std::size_t s = 0; s < syllables; ++s) {
    w += kConsonants[rng.below(kConsonants.size())];
    w += kVowels[rng.below(kVowels.size())];
  }
  if (rng.unit() < 0.5) w += kConsonants[rng.below(kConsonants.size())];
  return w;
}

std::size_t uniform_between(RngStream& rng, std::size_t lo, std::size_t hi) {
  return lo + rng.below(hi - lo + 1);
}

}  // namespace

SyntheticCorpus make_synthetic_corpus(const SyntheticCorpusConfig& cfg) {
  if (cfg.num_function_words > kFunctionWords.size()) throw Error("too many function words requested");
  if (cfg.segments_per_doc > cfg.num_topics) throw Error("segments_per_doc must not exceed num_topics");
  if (cfg.names_per_doc > cfg.num_names) throw Error("names_per_doc must not exceed num_names");

  SyntheticCorpus out;
  for (std::size_t i = 0; i < cfg.num_function_words; ++i) out.function_words.emplace_back(kFunctionWords[i]);

  // Topic words and names are unique pseudo-words disjoint from function words.
  RngStream lex(cfg.seed, 1);
  std::set<std::string> used(out.function_words.begin(), out.function_words.end());
  auto fresh = [&](std::size_t syllables) {
    for (;;) {
      std::string w = pseudo_word(lex, syllables);
      if (used.insert(w).second) return w;
    }
  };
  out.topic_words.resize(cfg.num_topics);
  for (auto& topic : out.topic_words) {
    for (std::size_t w = 0; w < cfg.words_per_topic; ++w) topic.push_back(fresh(2 + lex.below(2)));
  }
  for (std::size_t n = 0; n < cfg.num_names; ++n) {
    std::string name = fresh(2);
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    out.names.push_back(name);
  }

  // Zipf-like weights over function words.
  std::vector<double> fw_cdf(out.function_words.size());
  double total = 0.0;
  for (std::size_t i = 0; i < fw_cdf.size(); ++i) {
    total += 1.0 / std::pow(static_cast<double>(i + 1), 0.8);
    fw_cdf[i] = total;
  }
  for (double& c : fw_cdf) c /= total;

  for (std::size_t d = 0; d < cfg.num_docs; ++d) {
    RngStream rng(cfg.seed, 1000 + d);
    std::vector<std::size_t> topics(cfg.num_topics);
    std::iota(topics.begin(), topics.end(), std::size_t{0});
    for (std::size_t i = 0; i + 1 < topics.size(); ++i) std::swap(topics[i], topics[i + rng.below(topics.size() - i)]);
    std::vector<std::size_t> names(cfg.num_names);
    std::iota(names.begin(), names.end(), std::size_t{0});
    for (std::size_t i = 0; i < cfg.names_per_doc; ++i) std::swap(names[i], names[i + rng.below(names.size() - i)]);

    std::string text;
    for (std::size_t seg = 0; seg < cfg.segments_per_doc; ++seg) {
      const auto& topic = out.topic_words[topics[seg]];
      const std::size_t sentences =
          uniform_between(rng, cfg.min_sentences_per_segment, cfg.max_sentences_per_segment);
      for (std::size_t s = 0; s < sentences; ++s) {
        const std::size_t len = uniform_between(rng, cfg.min_words_per_sentence, cfg.max_words_per_sentence);
        for (std::size_t w = 0; w < len; ++w) {
          const double u = rng.unit();
          std::string word;
          if (u < cfg.p_topic_word) {
            const auto& pool = rng.unit() < cfg.p_off_topic ? out.topic_words[rng.below(cfg.num_topics)] : topic;
            word = pool[rng.below(pool.size())];
          } else if (u < cfg.p_topic_word + cfg.p_name && cfg.names_per_doc > 0) {
            word = out.names[names[rng.below(cfg.names_per_doc)]];
          } else {
            const double v = rng.unit();
            const auto it = std::lower_bound(fw_cdf.begin(), fw_cdf.end(), v);
            word = out.function_words[std::min<std::size_t>(it - fw_cdf.begin(), fw_cdf.size() - 1)];
          }
          if (!text.empty()) text += ' ';
          text += word;
          if (w + 1 < len && rng.unit() < 0.05) text += ',';
        }
        const double t = rng.unit();
        text += t < 0.85 ? "." : (t < 0.93 ? "?" : "!");
      }
    }
    out.documents.push_back(make_document("doc" + std::to_string(d), text));
  }
  return out;
}

}  // namespace prefixrank::corpus
