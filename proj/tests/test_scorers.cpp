#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "prefixrank/encoder.hpp"
#include "prefixrank/ngram_lm.hpp"
#include "prefixrank/scorers.hpp"
#include "support.hpp"

using namespace prefixrank;
using namespace prefixrank::scoring;

namespace {

Tokens toks(std::initializer_list<const char*> list) { return Tokens(list.begin(), list.end()); }

// Two-token first-order model given by a table.
class TableLm final : public LikelihoodModel {
 public:
  double sequence_logprob(std::span<const Token> prefix, std::span<const Token> c) const override {
    std::string prev = prefix.empty() ? "" : prefix.back();
    double lp = 0.0;
    for (const auto& t : c) {
      lp += std::log(table_.at(prev).at(t));
      prev = t;
    }
    return lp;
  }

 private:
  std::map<std::string, std::map<std::string, double>> table_ = {
      {"", {{"x", 0.6}, {"y", 0.4}}}, {"x", {{"x", 0.3}, {"y", 0.7}}}, {"y", {{"x", 0.8}, {"y", 0.2}}}};
};

// Adds a constant to every log-probability it reports.
class ShiftedLm final : public LikelihoodModel {
 public:
  ShiftedLm(const LikelihoodModel& base, double shift, bool conditional_only)
      : base_(base), shift_(shift), conditional_only_(conditional_only) {}
  double sequence_logprob(std::span<const Token> p, std::span<const Token> c) const override {
    const bool add = !conditional_only_ || !p.empty();
    return base_.sequence_logprob(p, c) + (add ? shift_ : 0.0);
  }

 private:
  const LikelihoodModel& base_;
  double shift_;
  bool conditional_only_;
};

}  // namespace

TEST(Overlap, HandExamples) {
  const auto p = toks({"a", "b", "c"});
  EXPECT_EQ(score_unigram_overlap(p, toks({"x", "y"})), 0.0);
  EXPECT_EQ(score_unigram_overlap(p, toks({"c", "a", "a"})), 1.0);
  EXPECT_EQ(score_unigram_overlap(p, toks({"a", "a", "d"})), 0.5);
  EXPECT_EQ(score_unigram_overlap(toks({"."}), toks({".", "z", "q"})), 1.0 / 3.0);
  EXPECT_THROW(score_unigram_overlap(p, Tokens{}), Error);
  EXPECT_EQ(score_unigram_overlap(Tokens{}, toks({"a"})), 0.0);
}

TEST(Likelihood, HandComputedTwoTokenModel) {
  const TableLm lm;
  const auto p = toks({"x", "y"});
  const auto c = toks({"y", "x"});
  EXPECT_NEAR(score_likelihood(LikelihoodKind::cll, lm, p, c), std::log(0.2 * 0.8), 1e-15);
  EXPECT_NEAR(score_likelihood(LikelihoodKind::avg_cll, lm, p, c), std::log(0.16) / 2.0, 1e-15);
  EXPECT_NEAR(score_likelihood(LikelihoodKind::avg_ull, lm, p, c), std::log(0.6 * 0.7 * 0.2 * 0.8) / 4.0, 1e-15);
  EXPECT_NEAR(score_likelihood(LikelihoodKind::pmi, lm, p, c), std::log(0.5), 1e-15);
}

TEST(Likelihood, DegenerateCases) {
  const TableLm lm;
  const auto c = toks({"y"});
  EXPECT_NEAR(score_likelihood(LikelihoodKind::pmi, lm, Tokens{}, toks({"x", "y"})), 0.0, 1e-15);
  EXPECT_EQ(score_likelihood(LikelihoodKind::avg_cll, lm, toks({"x"}), c),
            score_likelihood(LikelihoodKind::cll, lm, toks({"x"}), c));
  EXPECT_THROW(score_likelihood(LikelihoodKind::cll, lm, toks({"x"}), Tokens{}), Error);
  EXPECT_EQ(parse_likelihood_kind(to_string(LikelihoodKind::avg_ull)), LikelihoodKind::avg_ull);
  EXPECT_THROW(parse_likelihood_kind("bleu"), Error);
}

TEST(Likelihood, PmiCancelsShiftsAppliedToBothTerms) {
  const TableLm lm;
  const auto p = toks({"y"});
  const auto c = toks({"x", "x", "y"});
  const double base = score_likelihood(LikelihoodKind::pmi, lm, p, c);
  EXPECT_NEAR(score_likelihood(LikelihoodKind::pmi, ShiftedLm(lm, 3.5, false), p, c), base, 1e-12);
  EXPECT_NEAR(score_likelihood(LikelihoodKind::pmi, ShiftedLm(lm, 3.5, true), p, c), base + 3.5, 1e-12);
}

TEST(Likelihood, AverageCllRanksLikeInversePerplexity) {
  const auto docs = std::vector<corpus::Document>{testutil::random_document(1, 200, 4, 9)};
  const auto m = lm::NGramModel::train(docs);
  const auto prefix = toks({"oak", "pine", "marsh"});
  const auto cands = m.generate(prefix, 8, 40, SamplingStrategy::ancestral(), 3);
  std::vector<std::pair<double, std::size_t>> by_score, by_ppl;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (cands[i].empty()) continue;
    Tokens ctx = prefix;
    double nll = 0.0;
    for (const auto& t : cands[i]) {
      nll -= std::log(m.next_distribution(ctx).probs[m.id_of(t)]);
      ctx.push_back(t);
    }
    by_ppl.emplace_back(std::exp(nll / static_cast<double>(cands[i].size())), i);
    by_score.emplace_back(-score_likelihood(LikelihoodKind::avg_cll, m, prefix, cands[i]), i);
  }
  std::sort(by_ppl.begin(), by_ppl.end());
  std::sort(by_score.begin(), by_score.end());
  for (std::size_t r = 0; r < by_ppl.size(); ++r) EXPECT_EQ(by_ppl[r].second, by_score[r].second);
}

TEST(RankGen, ScoreIsDotProductOfEncodings) {
  const auto params = std::make_shared<encoder::EncoderParams>(
      encoder::EncoderParams::random(toks({"a", "b", "c"}), 5, 4, 2, 1.0));
  const RankGenScorer scorer(params);
  const auto p = toks({"a", "b"});
  const std::vector<Tokens> cands = {toks({"c"}), toks({"a", "zz"}), toks({"b", "b", "c"})};
  const auto all = scorer.score_all(p, cands);
  for (std::size_t i = 0; i < cands.size(); ++i) {
    const double want =
        testutil::dot(testutil::oracle_encode(*params, p, true), testutil::oracle_encode(*params, cands[i], false));
    EXPECT_NEAR(scorer.score(p, cands[i]), want, 1e-14);
    EXPECT_EQ(all[i], scorer.score(p, cands[i]));
  }
  const RankGenScorer zero(std::make_shared<encoder::EncoderParams>(encoder::EncoderParams::zeros(toks({"a"}), 3, 3)));
  EXPECT_EQ(zero.score(p, cands[0]), 0.0);
  EXPECT_THROW(scorer.score(Tokens{}, cands[0]), Error);
}

TEST(MakeScorer, ParsesSpecsAndLoadsCheckpoints) {
  testutil::TempDir dir("scorers");
  const auto enc = encoder::EncoderParams::random(toks({"x", "y"}), 3, 2, 5, 1.0);
  encoder::save_checkpoint(enc, dir / "enc.ckpt");
  const std::vector<Tokens> seqs = {toks({"x", "y", "x"})};
  const auto m = lm::NGramModel::train(seqs);
  m.save(dir / "lm.ckpt");

  const auto p = toks({"x"});
  const auto c = toks({"y", "x"});
  const auto rankgen = make_scorer("rankgen:" + (dir / "enc.ckpt").string());
  EXPECT_EQ(rankgen->describe(), "rankgen");
  EXPECT_NEAR(rankgen->score(p, c), score_rankgen(encoder::load_checkpoint(dir / "enc.ckpt"), p, c), 1e-15);
  EXPECT_EQ(make_scorer("overlap")->score(p, c), 0.5);
  EXPECT_EQ(make_scorer("unigram_overlap")->describe(), "overlap");
  const auto pmi = make_scorer("pmi:" + (dir / "lm.ckpt").string());
  EXPECT_NEAR(pmi->score(p, c), m.sequence_logprob(p, c) - m.sequence_logprob({}, c), 1e-12);

  EXPECT_THROW(make_scorer("bogus"), Error);
  EXPECT_THROW(make_scorer("avg_cll"), Error);
  EXPECT_THROW(make_scorer("overlap:extra"), Error);
  EXPECT_THROW(make_scorer("rankgen:" + (dir / "missing.ckpt").string()), Error);
}
