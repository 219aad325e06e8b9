#pragma once

// Test-side oracles and toy components. Nothing here calls into the code it
// is used to check: encodings, losses and rankings are recomputed with plain
// loops.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "prefixrank/corpus.hpp"
#include "prefixrank/encoder.hpp"
#include "prefixrank/eval.hpp"
#include "prefixrank/generator.hpp"
#include "prefixrank/rng.hpp"
#include "prefixrank/scorers.hpp"
#include "prefixrank/trainer.hpp"

namespace prefixrank::testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> next{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("prefixrank_" + tag + "_" + std::to_string(stamp) + "_" + std::to_string(next++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// Mean of embedding rows followed by the projection, with explicit loops.
inline std::vector<double> oracle_encode(const encoder::EncoderParams& params, const Tokens& tokens, bool prefix) {
  std::vector<std::size_t> ids;
  ids.push_back(prefix ? encoder::EncoderParams::kPreId : encoder::EncoderParams::kSufId);
  for (const auto& t : tokens) {
    const auto id = params.vocab.find(t);
    ids.push_back(id ? *id : encoder::EncoderParams::kUnkId);
  }
  const auto d_emb = static_cast<std::size_t>(params.embedding.cols());
  const auto d_out = static_cast<std::size_t>(params.projection.cols());
  std::vector<double> mean(d_emb, 0.0);
  for (const auto id : ids)
    for (std::size_t k = 0; k < d_emb; ++k) mean[k] += params.embedding(static_cast<Eigen::Index>(id), static_cast<Eigen::Index>(k));
  for (auto& m : mean) m /= static_cast<double>(ids.size());
  std::vector<double> out(d_out, 0.0);
  for (std::size_t o = 0; o < d_out; ++o)
    for (std::size_t k = 0; k < d_emb; ++k)
      out[o] += mean[k] * params.projection(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(o));
  return out;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// The contrastive loss by listing every denominator term explicitly.
inline double oracle_loss(const encoder::EncoderParams& params, const trainer::ContrastiveBatch& batch,
                          const trainer::LossOptions& options) {
  using trainer::NegativeMode;
  const auto n = batch.items.size();
  std::vector<std::vector<double>> p(n), c(n), g(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = oracle_encode(params, batch.items[i].prefix, true);
    c[i] = oracle_encode(params, batch.items[i].continuation, false);
    if (batch.items[i].generation) g[i] = oracle_encode(params, *batch.items[i].generation, false);
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> terms;
    for (std::size_t j = 0; j < n; ++j) {
      if (options.mode == NegativeMode::generative_only && j != i) continue;
      terms.push_back(dot(p[i], c[j]));
    }
    if (options.mode != NegativeMode::inbook_only) {
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i && !options.own_generation_in_denominator) continue;
        terms.push_back(dot(p[i], g[j]));
      }
    }
    long double z = 0.0L;
    for (const double t : terms) z += std::exp(static_cast<long double>(t));
    loss += static_cast<double>(std::log(z) - static_cast<long double>(dot(p[i], c[i])));
  }
  return loss;
}

/// Central differences of oracle_loss over every entry of E and then W.
inline std::vector<double> numeric_gradient(encoder::EncoderParams params, const trainer::ContrastiveBatch& batch,
                                            const trainer::LossOptions& options, double h = 1e-5) {
  std::vector<double> out;
  auto probe = [&](double& x) {
    const double saved = x;
    x = saved + h;
    const double up = oracle_loss(params, batch, options);
    x = saved - h;
    const double down = oracle_loss(params, batch, options);
    x = saved;
    out.push_back((up - down) / (2.0 * h));
  };
  for (Eigen::Index r = 0; r < params.embedding.rows(); ++r)
    for (Eigen::Index c = 0; c < params.embedding.cols(); ++c) probe(params.embedding(r, c));
  for (Eigen::Index r = 0; r < params.projection.rows(); ++r)
    for (Eigen::Index c = 0; c < params.projection.cols(); ++c) probe(params.projection(r, c));
  return out;
}

inline std::vector<double> flatten(const trainer::Gradient& g) {
  std::vector<double> out;
  for (Eigen::Index r = 0; r < g.embedding.rows(); ++r)
    for (Eigen::Index c = 0; c < g.embedding.cols(); ++c) out.push_back(g.embedding(r, c));
  for (Eigen::Index r = 0; r < g.projection.rows(); ++r)
    for (Eigen::Index c = 0; c < g.projection.cols(); ++c) out.push_back(g.projection(r, c));
  return out;
}

/// max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|): the largest entry error
/// relative to the gradient's scale (0 when both vectors vanish).
inline double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    err = std::max(err, std::abs(analytic[i] - numeric[i]));
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
  }
  return scale == 0.0 ? 0.0 : err / scale;
}

/// Uniformly random token sequences over `alphabet`.
inline Tokens random_tokens(CounterRng rng, std::uint64_t& counter, const Tokens& alphabet, std::size_t min_len,
                            std::size_t max_len) {
  const auto len = min_len + rng.below(counter++, max_len - min_len + 1);
  Tokens out;
  for (std::size_t i = 0; i < len; ++i) out.push_back(alphabet[rng.below(counter++, alphabet.size())]);
  return out;
}

inline trainer::ContrastiveBatch random_batch(std::uint64_t seed, std::size_t size, const Tokens& alphabet,
                                              bool with_generations) {
  const CounterRng rng(seed, 77);
  std::uint64_t counter = 0;
  trainer::ContrastiveBatch batch;
  batch.doc_id = "doc";
  for (std::size_t i = 0; i < size; ++i) {
    trainer::BatchItem item;
    item.prefix = random_tokens(rng, counter, alphabet, 1, 6);
    item.continuation = random_tokens(rng, counter, alphabet, 1, 5);
    if (with_generations) item.generation = random_tokens(rng, counter, alphabet, 1, 5);
    batch.items.push_back(std::move(item));
  }
  return batch;
}

/// Sample j is the j-th sequence of num_new_tokens symbols in lexicographic
/// order (mod alphabet^length), whatever the seed or stream.
class EnumeratingGenerator final : public Generator {
 public:
  explicit EnumeratingGenerator(Tokens alphabet) : alphabet_(std::move(alphabet)) {}

  std::vector<GeneratedSample> generate(const GenerationRequest& request) const override {
    std::vector<GeneratedSample> out;
    std::uint64_t total = 1;
    for (std::size_t t = 0; t < request.num_new_tokens; ++t) total *= alphabet_.size();
    for (std::size_t j = 0; j < request.num_samples; ++j) {
      std::uint64_t code = j % total;
      Tokens tokens(request.num_new_tokens);
      for (std::size_t t = request.num_new_tokens; t-- > 0;) {
        tokens[t] = alphabet_[code % alphabet_.size()];
        code /= alphabet_.size();
      }
      out.push_back({std::move(tokens), false});
    }
    return out;
  }
  std::string describe() const override { return "enumerating"; }

 private:
  Tokens alphabet_;
};

/// Deterministic pseudo-random score per (prefix, candidate) content.
class HashScorer final : public scoring::Scorer {
 public:
  explicit HashScorer(std::uint64_t seed, std::uint64_t levels = 0) : seed_(seed), levels_(levels) {}

  double score(std::span<const Token> prefix, std::span<const Token> candidate) const override {
    std::string key;
    for (const auto& t : prefix) key += t + '\x1f';
    key += '\x1e';
    for (const auto& t : candidate) key += t + '\x1f';
    const double u = CounterRng(seed_, fnv1a64(key)).unit(0);
    // Coarse levels force ties so tie-breaking gets exercised.
    return levels_ == 0 ? u : std::floor(u * static_cast<double>(levels_));
  }
  std::string describe() const override { return "hash"; }

 private:
  std::uint64_t seed_;
  std::uint64_t levels_;
};

/// Topic-style toy document: sentences drawn from a fixed word list.
inline corpus::Document random_document(std::uint64_t seed, std::size_t sentences, std::size_t min_words,
                                        std::size_t max_words, const std::string& id = "doc") {
  static const Tokens words = {"amber", "birch", "cedar", "dune", "ember", "fjord", "grove", "heath",
                               "inlet", "juniper", "knoll", "larch", "marsh", "nettle", "oak", "pine"};
  RngStream rng(seed, 3);
  std::string text;
  for (std::size_t s = 0; s < sentences; ++s) {
    const auto n = min_words + rng.below(max_words - min_words + 1);
    for (std::size_t w = 0; w < n; ++w) text += words[rng.below(words.size())] + ' ';
    text += ". ";
  }
  return corpus::make_document(id, text);
}

inline std::size_t words_between(const corpus::Document& doc, std::size_t a, std::size_t b) {
  std::size_t n = 0;
  for (std::size_t i = a; i < b; ++i) n += corpus::is_punctuation(doc.tokens[i]) ? 0 : 1;
  return n;
}

/// Every sentence start paired with its longest in-budget end, all scored, then sorted.
inline std::vector<eval::ScoredSpan> exhaustive_hard_negatives(const corpus::Document& doc, const Tokens& prefix,
                                                               corpus::Span gold, const scoring::Scorer& scorer,
                                                               std::size_t window, std::size_t count) {
  auto bounds = doc.sentence_starts;
  bounds.push_back(doc.tokens.size());
  std::vector<eval::ScoredSpan> all;
  for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
    std::size_t end = 0;
    for (std::size_t j = i + 1; j < bounds.size(); ++j)
      if (words_between(doc, bounds[i], bounds[j]) <= window) end = bounds[j];
    if (end == 0 || words_between(doc, bounds[i], end) == 0) continue;
    const corpus::Span s{bounds[i], end};
    if (s == gold) continue;
    const Tokens text(doc.tokens.begin() + static_cast<std::ptrdiff_t>(s.begin),
                      doc.tokens.begin() + static_cast<std::ptrdiff_t>(s.end));
    all.push_back({s, scorer.score(prefix, text)});
  }
  std::sort(all.begin(), all.end(), [](const eval::ScoredSpan& a, const eval::ScoredSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.span < b.span;
  });
  if (all.size() > count) all.resize(count);
  return all;
}

}  // namespace prefixrank::testutil
