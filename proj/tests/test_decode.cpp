#include <gtest/gtest.h>

#include <atomic>
#include <mutex>

#include "prefixrank/decode.hpp"
#include "prefixrank/ngram_lm.hpp"
#include "support.hpp"

using namespace prefixrank;
using namespace prefixrank::decode;

namespace {

Tokens toks(std::initializer_list<const char*> list) { return Tokens(list.begin(), list.end()); }

const lm::NGramModel& toy_lm() {
  static const auto model = [] {
    std::vector<corpus::Document> docs;
    for (int i = 0; i < 5; ++i) docs.push_back(testutil::random_document(i, 120, 3, 9, "d" + std::to_string(i)));
    return lm::NGramModel::train(docs);
  }();
  return model;
}

Tokens enumerate(std::uint64_t code, std::size_t len, const Tokens& alphabet) {
  Tokens out(len);
  for (std::size_t t = len; t-- > 0;) {
    out[t] = alphabet[code % alphabet.size()];
    code /= alphabet.size();
  }
  return out;
}

std::uint64_t power(std::size_t base, std::size_t exp) {
  std::uint64_t r = 1;
  for (std::size_t i = 0; i < exp; ++i) r *= base;
  return r;
}

// The round structure spelled out with plain lists for the enumerating generator.
std::vector<Beam> simulate(const Tokens& prefix, const Tokens& alphabet, const scoring::Scorer& scorer,
                           const DecodeConfig& cfg) {
  std::vector<Beam> beams(1);
  while (true) {
    bool any_live = false;
    std::vector<Beam> pool;
    for (const auto& b : beams) {
      if (b.tokens.size() >= cfg.max_length) {
        pool.push_back(b);
        continue;
      }
      any_live = true;
      const auto len = std::min(cfg.rerank_length, cfg.max_length - b.tokens.size());
      for (std::size_t j = 0; j < cfg.samples_per_beam; ++j) {
        Beam h = b;
        const auto ext = enumerate(j % power(alphabet.size(), len), len, alphabet);
        h.tokens.insert(h.tokens.end(), ext.begin(), ext.end());
        h.score = scorer.score(prefix, h.tokens);
        pool.push_back(h);
      }
    }
    if (!any_live) return beams;
    std::stable_sort(pool.begin(), pool.end(), [](const Beam& a, const Beam& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.tokens < b.tokens;
    });
    pool.resize(std::min(pool.size(), cfg.beam_size));
    beams = pool;
  }
}

}  // namespace

TEST(Decode, SingleBeamSingleSampleReproducesPlainSampling) {
  const auto& m = toy_lm();
  const testutil::HashScorer scorer(1);
  for (const auto& s : {SamplingStrategy::greedy(), SamplingStrategy::ancestral(), SamplingStrategy::nucleus(0.9),
                        SamplingStrategy::top_k(5), SamplingStrategy::typical(0.8)}) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      DecodeConfig cfg;
      cfg.beam_size = 1;
      cfg.samples_per_beam = 1;
      cfg.rerank_length = 1 + seed % 7;
      cfg.max_length = 24;
      cfg.strategy = s;
      cfg.seed = seed;
      const auto prefix = toks({"oak", "pine", "."});
      const auto plain = m.generate(prefix, 24, 1, s, seed)[0];
      const auto beams = rankgen_search(prefix, m, scorer, cfg);
      ASSERT_EQ(beams.size(), 1u);
      EXPECT_EQ(beams[0].tokens, plain) << s.to_string() << " seed " << seed;
    }
  }
}

TEST(Decode, FullEnumerationFindsBruteForceArgmax) {
  const Tokens alphabet = {"a", "b", "c"};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const testutil::HashScorer scorer(seed, seed % 2 ? 7 : 0);
    const std::size_t max_len = 2 + seed % 3;
    const std::size_t total = power(alphabet.size(), max_len);
    const testutil::EnumeratingGenerator gen(alphabet);
    DecodeConfig cfg;
    cfg.max_length = max_len;
    cfg.rerank_length = 1 + seed % max_len;
    cfg.beam_size = total;
    cfg.samples_per_beam = power(alphabet.size(), cfg.rerank_length);
    const auto prefix = toks({"p"});
    Beam best;
    best.score = -1.0;
    for (std::uint64_t code = 0; code < total; ++code) {
      const auto t = enumerate(code, max_len, alphabet);
      const double s = scorer.score(prefix, t);
      if (s > best.score) best = {t, s, false};  // codes ascend lexicographically, so ties keep the first
    }
    const auto beams = rankgen_search(prefix, gen, scorer, cfg);
    ASSERT_FALSE(beams.empty());
    EXPECT_EQ(beams[0], best) << "seed " << seed;
    EXPECT_EQ(beams.size(), total);
  }
}

TEST(Decode, MatchesListSimulationForNarrowBeams) {
  const Tokens alphabet = {"a", "b", "c", "d"};
  const testutil::EnumeratingGenerator gen(alphabet);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const testutil::HashScorer scorer(seed + 50, seed % 3 == 0 ? 3 : 0);
    DecodeConfig cfg;
    cfg.max_length = 3 + seed % 4;
    cfg.rerank_length = 1 + seed % cfg.max_length;
    cfg.beam_size = 1 + seed % 3;
    cfg.samples_per_beam = 1 + seed % 5;
    const auto prefix = toks({"q", "r"});
    EXPECT_EQ(rankgen_search(prefix, gen, scorer, cfg), simulate(prefix, alphabet, scorer, cfg)) << "seed " << seed;
  }
}

TEST(Decode, OutputIsRankedAndWorkerCountDoesNotMatter) {
  const auto& m = toy_lm();
  const testutil::HashScorer scorer(3);
  DecodeConfig cfg;
  cfg.beam_size = 3;
  cfg.samples_per_beam = 4;
  cfg.rerank_length = 5;
  cfg.max_length = 17;
  cfg.seed = 11;
  const auto prefix = toks({"marsh", "fjord"});
  const auto a = rankgen_search(prefix, m, scorer, cfg);
  cfg.jobs = 4;
  const auto b = rankgen_search(prefix, m, scorer, cfg);
  EXPECT_EQ(a, b);
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 1; i < a.size(); ++i) EXPECT_FALSE(ranks_before(a[i], a[i - 1]));
  for (const auto& beam : a) EXPECT_EQ(beam.score, scorer.score(prefix, beam.tokens));
}

TEST(Decode, RerankFullEqualsSingleRoundSearch) {
  const auto& m = toy_lm();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const testutil::HashScorer scorer(seed);
    const auto prefix = toks({"cedar", "dune", "."});
    const auto ranked = rerank_full(prefix, m, scorer, 6, 15, SamplingStrategy::nucleus(0.9), seed);
    DecodeConfig cfg;
    cfg.rerank_length = 15;
    cfg.max_length = 15;
    cfg.beam_size = 1;
    cfg.samples_per_beam = 6;
    cfg.seed = seed;
    const auto beams = rankgen_search(prefix, m, scorer, cfg);
    ASSERT_EQ(ranked.size(), 6u);
    EXPECT_EQ(ranked[0], beams[0]);
  }
}

namespace {

// Stream 0 stops immediately after "stop"; other streams emit "w" tokens.
class StoppingGenerator final : public Generator {
 public:
  std::vector<GeneratedSample> generate(const GenerationRequest& r) const override {
    {
      std::lock_guard lock(mutex_);
      contexts.push_back(r.context);
    }
    std::vector<GeneratedSample> out;
    for (std::size_t j = 0; j < r.num_samples; ++j) {
      if (r.stream_base + j == 0) {
        out.push_back({toks({"stop"}), true});
      } else {
        out.push_back({Tokens(r.num_new_tokens, "w" + std::to_string(r.stream_base + j)), false});
      }
    }
    return out;
  }
  std::string describe() const override { return "stopping"; }
  mutable std::vector<Tokens> contexts;

 private:
  mutable std::mutex mutex_;
};

class PreferStop final : public scoring::Scorer {
 public:
  double score(std::span<const Token>, std::span<const Token> c) const override {
    return c[0] == "stop" ? 100.0 : static_cast<double>(c.size());
  }
  std::string describe() const override { return "prefer-stop"; }
};

class FailAfter final : public scoring::Scorer {
 public:
  explicit FailAfter(std::size_t limit) : limit_(limit) {}
  double score(std::span<const Token>, std::span<const Token> c) const override {
    if (c.size() > limit_) throw Error("scorer exploded");
    return 0.0;
  }
  std::string describe() const override { return "fail"; }

 private:
  std::size_t limit_;
};

}  // namespace

TEST(Decode, FinishedBeamsAreCarriedAndNeverExtended) {
  const StoppingGenerator gen;
  DecodeConfig cfg;
  cfg.beam_size = 2;
  cfg.samples_per_beam = 2;
  cfg.rerank_length = 2;
  cfg.max_length = 6;
  const auto beams = rankgen_search(toks({"p"}), gen, PreferStop{}, cfg);
  ASSERT_EQ(beams.size(), 2u);
  EXPECT_EQ(beams[0].tokens, toks({"stop"}));
  EXPECT_TRUE(beams[0].finished);
  EXPECT_EQ(beams[1].tokens.size(), 6u);
  for (const auto& ctx : gen.contexts) EXPECT_NE(ctx.back(), "stop");
}

TEST(Decode, FailuresNameTheRound) {
  const testutil::EnumeratingGenerator gen(toks({"a", "b"}));
  DecodeConfig cfg;
  cfg.beam_size = 1;
  cfg.samples_per_beam = 1;
  cfg.rerank_length = 2;
  cfg.max_length = 8;
  try {
    rankgen_search(toks({"p"}), gen, FailAfter(4), cfg);
    FAIL() << "expected DecodeError";
  } catch (const DecodeError& e) {
    EXPECT_EQ(e.round(), 2u);
    EXPECT_NE(std::string(e.what()).find("scorer exploded"), std::string::npos);
  }
}

TEST(Decode, ConfigValidation) {
  const testutil::EnumeratingGenerator gen(toks({"a"}));
  const testutil::HashScorer scorer(0);
  DecodeConfig cfg;
  cfg.beam_size = 0;
  EXPECT_THROW(rankgen_search(toks({"p"}), gen, scorer, cfg), Error);
  cfg = {};
  cfg.max_length = 5;
  cfg.rerank_length = 6;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.strategy = SamplingStrategy::nucleus(2.0);
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_THROW(rankgen_search(Tokens{}, gen, scorer, DecodeConfig{}), Error);
}

TEST(TruncateToSentence, Examples) {
  const auto t = toks({"a", "b", ".", "c", "d", "e", "!", "f"});
  EXPECT_EQ(truncate_to_sentence(t, 5), toks({"a", "b", ".", "c", "d", "e", "!"}));
  EXPECT_EQ(truncate_to_sentence(t, 4), toks({"a", "b", "."}));
  EXPECT_EQ(truncate_to_sentence(t, 1), Tokens{});
  EXPECT_EQ(truncate_to_sentence(toks({"no", "end"}), 1), toks({"no", "end"}));
}
