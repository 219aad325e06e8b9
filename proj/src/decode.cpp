#include "prefixrank/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "prefixrank/corpus.hpp"
#include "prefixrank/parallel.hpp"

namespace prefixrank::decode {
namespace {

/// An empty hypothesis (end-of-sequence before any token) ranks last.
double score_hypothesis(const scoring::Scorer& scorer, std::span<const Token> prefix, const Tokens& tokens) {
  if (tokens.empty()) return -std::numeric_limits<double>::infinity();
  const double s = scorer.score(prefix, tokens);
  if (std::isnan(s)) throw Error("scorer returned NaN");
  return s;
}

}  // namespace

void DecodeConfig::validate() const {
  if (rerank_length < 1) throw Error("rerank length L must be >= 1");
  if (beam_size < 1) throw Error("beam size B must be >= 1");
  if (samples_per_beam < 1) throw Error("samples per beam N must be >= 1");
  if (max_length < rerank_length) throw Error("max_length must be >= rerank length L");
  strategy.validate();
}

DecodeError::DecodeError(std::size_t round, const std::string& what)
    : Error("decode round " + std::to_string(round) + ": " + what), round_(round) {}

bool ranks_before(const Beam& a, const Beam& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.tokens < b.tokens;
}

std::vector<Beam> rankgen_search(std::span<const Token> prefix, const Generator& generator,
                                 const scoring::Scorer& scorer, const DecodeConfig& cfg) {
  cfg.validate();
  if (prefix.empty()) throw Error("rankgen_search needs a non-empty prefix");
  const std::size_t n = cfg.samples_per_beam;

  std::vector<Beam> beams(1);
  for (std::size_t round = 0;; ++round) {
    std::vector<std::size_t> live;
    for (std::size_t b = 0; b < beams.size(); ++b)
      if (!beams[b].finished && beams[b].tokens.size() < cfg.max_length) live.push_back(b);
    if (live.empty()) break;

    std::vector<Beam> hypotheses(live.size() * n);
    try {
      parallel_for(live.size(), cfg.jobs, [&](std::size_t slot) {
        const Beam& beam = beams[live[slot]];
        GenerationRequest request;
        request.context.assign(prefix.begin(), prefix.end());
        request.context.insert(request.context.end(), beam.tokens.begin(), beam.tokens.end());
        request.num_new_tokens = std::min(cfg.rerank_length, cfg.max_length - beam.tokens.size());
        request.num_samples = n;
        request.strategy = cfg.strategy;
        request.seed = cfg.seed;
        request.stream_base = live[slot] * n;
        request.counter_base = round * cfg.rerank_length;
        auto samples = generator.generate(request);
        if (samples.size() != n) {
          throw Error("generator returned " + std::to_string(samples.size()) + " samples, expected " + std::to_string(n));
        }
        for (std::size_t j = 0; j < n; ++j) {
          Beam& h = hypotheses[slot * n + j];
          h.tokens = beam.tokens;
          h.tokens.insert(h.tokens.end(), samples[j].tokens.begin(), samples[j].tokens.end());
          h.finished = samples[j].finished;
        }
      });
      parallel_for(hypotheses.size(), cfg.jobs, [&](std::size_t i) {
        hypotheses[i].score = score_hypothesis(scorer, prefix, hypotheses[i].tokens);
      });
    } catch (const DecodeError&) {
      throw;
    } catch (const std::exception& e) {
      throw DecodeError(round, e.what());
    }

    std::vector<Beam> pool;
    pool.reserve(beams.size() + hypotheses.size());
    for (auto& b : beams)
      if (b.finished || b.tokens.size() >= cfg.max_length) pool.push_back(std::move(b));
    for (auto& h : hypotheses) pool.push_back(std::move(h));
    const std::size_t keep = std::min(cfg.beam_size, pool.size());
    std::stable_sort(pool.begin(), pool.end(), ranks_before);
    pool.resize(keep);
    beams = std::move(pool);
  }
  return beams;
}

std::vector<Beam> rerank_full(std::span<const Token> prefix, const Generator& generator,
                              const scoring::Scorer& scorer, std::size_t num_samples, std::size_t max_length,
                              const SamplingStrategy& strategy, std::uint64_t seed) {
  if (num_samples < 1) throw Error("rerank_full needs num_samples >= 1");
  if (max_length < 1) throw Error("rerank_full needs max_length >= 1");
  if (prefix.empty()) throw Error("rerank_full needs a non-empty prefix");
  strategy.validate();
  GenerationRequest request;
  request.context.assign(prefix.begin(), prefix.end());
  request.num_new_tokens = max_length;
  request.num_samples = num_samples;
  request.strategy = strategy;
  request.seed = seed;
  auto samples = generator.generate(request);
  std::vector<Beam> out;
  out.reserve(samples.size());
  for (auto& s : samples) {
    Beam b{std::move(s.tokens), 0.0, s.finished};
    b.score = score_hypothesis(scorer, prefix, b.tokens);
    out.push_back(std::move(b));
  }
  std::stable_sort(out.begin(), out.end(), ranks_before);
  return out;
}

Tokens truncate_to_sentence(std::span<const Token> tokens, std::size_t max_words) {
  std::size_t words = 0;
  std::size_t cut = 0;
  bool any_boundary = false;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (!corpus::is_punctuation(tokens[i])) ++words;
    if (corpus::is_sentence_terminator(tokens[i])) {
      any_boundary = true;
      if (words <= max_words) cut = i + 1;
    }
  }
  if (!any_boundary) return Tokens(tokens.begin(), tokens.end());
  return Tokens(tokens.begin(), tokens.begin() + static_cast<std::ptrdiff_t>(cut));
}

}  // namespace prefixrank::decode
