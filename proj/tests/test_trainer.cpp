#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "prefixrank/trainer.hpp"
#include "support.hpp"

using namespace prefixrank;
using namespace prefixrank::trainer;

namespace {

const Tokens kAlphabet = {"a", "b", "c", "d", "e", "f", "g"};

Tokens toks(std::initializer_list<const char*> list) { return Tokens(list.begin(), list.end()); }

LossOptions options(NegativeMode mode, bool own) {
  LossOptions o;
  o.mode = mode;
  o.own_generation_in_denominator = own;
  return o;
}

// Items whose prefix names the continuation through a private token.
std::vector<corpus::TrainingTriple> separable_dataset(std::size_t n, const std::string& doc = "doc") {
  std::vector<corpus::TrainingTriple> out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto id = std::to_string(k);
    out.push_back({doc, {"the", "p" + id, "and"}, {"c" + id, "so"}, Tokens{"g" + id}});
  }
  return out;
}

}  // namespace

TEST(Loss, AllZeroParametersGiveLogOfDenominatorSize) {
  const auto params = EncoderParams::zeros(kAlphabet, 4, 3);
  const auto two = testutil::random_batch(1, 2, kAlphabet, true);
  EXPECT_DOUBLE_EQ(contrastive_loss(params, two, options(NegativeMode::both, true)).loss, 2.0 * std::log(4.0));
  const auto three = testutil::random_batch(2, 3, kAlphabet, false);
  EXPECT_DOUBLE_EQ(contrastive_loss(params, three, options(NegativeMode::inbook_only, true)).loss, 3.0 * std::log(3.0));
  const auto r = contrastive_loss(params, two, options(NegativeMode::both, false));
  EXPECT_DOUBLE_EQ(r.loss, 2.0 * std::log(3.0));
  EXPECT_DOUBLE_EQ(r.gold_probs[0], 1.0 / 3.0);
  EXPECT_EQ(r.candidate_probs[0][2], 0.0);  // own generation excluded
}

TEST(Loss, MatchesExplicitEnumerationAcrossModes) {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const auto params = EncoderParams::random(kAlphabet, 1 + seed % 8, 1 + (seed / 8) % 8, seed, 1.5);
    const auto batch = testutil::random_batch(seed, 2 + seed % 3, kAlphabet, true);
    for (const auto mode : {NegativeMode::inbook_only, NegativeMode::generative_only, NegativeMode::both}) {
      for (const bool own : {true, false}) {
        const auto o = options(mode, own);
        const double want = testutil::oracle_loss(params, batch, o);
        const double got = contrastive_loss(params, batch, o).loss;
        EXPECT_LE(std::abs(got - want), 1e-10 * std::abs(want)) << "seed " << seed;
      }
    }
  }
}

TEST(Loss, CandidateProbabilitiesFormADistribution) {
  const auto params = EncoderParams::random(kAlphabet, 5, 4, 3, 1.0);
  const auto batch = testutil::random_batch(9, 4, kAlphabet, true);
  const auto r = contrastive_loss(params, batch, options(NegativeMode::both, true));
  double loss = 0.0;
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (const double p : r.candidate_probs[i]) s += p;
    EXPECT_NEAR(s, 1.0, 1e-14);
    EXPECT_DOUBLE_EQ(r.candidate_probs[i][i], r.gold_probs[i]);
    loss -= std::log(r.gold_probs[i]);
  }
  EXPECT_NEAR(loss, r.loss, 1e-12);
}

TEST(Loss, InBookModeEqualsGenerationColumnsAtMinusInfinity) {
  const auto params = EncoderParams::random(kAlphabet, 4, 4, 5, 1.0);
  const auto batch = testutil::random_batch(5, 3, kAlphabet, true);
  Matrix cont(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      cont(i, j) = testutil::dot(testutil::oracle_encode(params, batch.items[i].prefix, true),
                                 testutil::oracle_encode(params, batch.items[j].continuation, false));
  const Matrix gen = Matrix::Constant(3, 3, -std::numeric_limits<double>::infinity());
  const double with_inf = loss_from_scores(cont, &gen).loss;
  const double without = loss_from_scores(cont, nullptr).loss;
  EXPECT_DOUBLE_EQ(with_inf, without);
  EXPECT_NEAR(contrastive_loss(params, batch, options(NegativeMode::inbook_only, true)).loss, without, 1e-12);
}

TEST(Loss, StableForLargeScores) {
  Matrix cont(2, 2);
  cont << 1000.0, 999.0, 0.0, -1000.0;
  const auto r = loss_from_scores(cont, nullptr);
  EXPECT_TRUE(std::isfinite(r.loss));
  // Row 0 is softplus(-1); row 1's gold sits 1000 below its rival.
  EXPECT_NEAR(r.loss, std::log1p(std::exp(-1.0)) + 1000.0, 1e-9);
}

TEST(Loss, BatchValidation) {
  const auto params = EncoderParams::zeros(kAlphabet, 2, 2);
  EXPECT_THROW(contrastive_loss(params, testutil::random_batch(1, 1, kAlphabet, true)), Error);
  EXPECT_THROW(contrastive_loss(params, testutil::random_batch(1, 3, kAlphabet, false)), Error);
  EXPECT_NO_THROW(contrastive_loss(params, testutil::random_batch(1, 3, kAlphabet, false),
                                   options(NegativeMode::inbook_only, true)));
  auto empty = testutil::random_batch(1, 2, kAlphabet, true);
  empty.items[1].continuation.clear();
  EXPECT_THROW(contrastive_loss(params, empty), Error);
}

TEST(Gradient, AgreesWithCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto params = EncoderParams::random(kAlphabet, 1 + seed % 6, 1 + seed % 5, seed + 100, 1.0);
    const auto batch = testutil::random_batch(seed + 200, 2 + seed % 3, kAlphabet, true);
    const auto mode = static_cast<NegativeMode>(seed % 3);
    const auto o = options(mode, seed % 2 == 0);
    const auto analytic = testutil::flatten(loss_gradient(params, batch, o));
    const auto numeric = testutil::numeric_gradient(params, batch, o);
    EXPECT_LT(testutil::max_relative_error(analytic, numeric), 1e-6) << "seed " << seed;
  }
}

TEST(Gradient, ZeroAtAllZeroParameters) {
  const auto params = EncoderParams::zeros(kAlphabet, 3, 3);
  const auto batch = testutil::random_batch(4, 3, kAlphabet, true);
  const auto g = loss_gradient(params, batch);
  EXPECT_EQ(g.embedding.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.projection.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, RowsOfAbsentTokensAreExactlyZero) {
  const auto params = EncoderParams::random(toks({"a", "b", "unused", "c"}), 4, 3, 8, 1.0);
  trainer::ContrastiveBatch batch;
  batch.items = {{toks({"a", "b"}), toks({"c"}), toks({"a"})}, {toks({"b"}), toks({"a", "c"}), toks({"c", "c"})}};
  const auto [loss, g] = loss_and_gradient(params, batch);
  EXPECT_DOUBLE_EQ(loss.loss, contrastive_loss(params, batch).loss);
  const auto unused = static_cast<Eigen::Index>(*params.vocab.find("unused"));
  EXPECT_EQ(g.embedding.row(unused).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(g.embedding.row(EncoderParams::kUnkId).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_GT(g.embedding.row(EncoderParams::kPreId).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, IndependentOfWorkerCount) {
  const auto params = EncoderParams::random(kAlphabet, 6, 5, 1, 1.0);
  const auto batch = testutil::random_batch(3, 4, kAlphabet, true);
  auto o = options(NegativeMode::both, true);
  const auto a = loss_and_gradient(params, batch, o);
  o.jobs = 3;
  const auto b = loss_and_gradient(params, batch, o);
  EXPECT_EQ(a.first.loss, b.first.loss);
  EXPECT_EQ(a.second.embedding, b.second.embedding);
  EXPECT_EQ(a.second.projection, b.second.projection);
}

TEST(Train, ZeroStepsLeaveParametersUnchanged) {
  const auto data = separable_dataset(10);
  const auto init = EncoderParams::random(dataset_tokens(data), 4, 4, 2);
  TrainConfig cfg;
  cfg.steps = 0;
  const auto out = train(init, data, cfg);
  EXPECT_TRUE(out.params == init);
  EXPECT_TRUE(out.loss_curve.empty());
}

TEST(Train, SeparableDataLossDecreasesAndRunsAreReproducible) {
  const auto data = separable_dataset(24);
  const auto init = EncoderParams::random(dataset_tokens(data), 16, 16, 3);
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.steps = 300;
  cfg.learning_rate = 0.02;
  cfg.negative_mode = NegativeMode::inbook_only;
  cfg.seed = 4;
  std::size_t calls = 0;
  const auto a = train(init, data, cfg, [&](std::size_t, double) { ++calls; });
  EXPECT_EQ(calls, 300u);
  ASSERT_EQ(a.loss_curve.size(), 300u);
  double tail = 0.0;
  for (std::size_t i = 290; i < 300; ++i) tail += a.loss_curve[i] / 10.0;
  EXPECT_LT(tail, 0.1 * a.loss_curve[0]);
  cfg.jobs = 3;
  const auto b = train(init, data, cfg);
  EXPECT_EQ(a.loss_curve, b.loss_curve);
  EXPECT_TRUE(a.params == b.params);
}

TEST(Train, SgdStepIsLearningRateTimesGradient) {
  const auto data = separable_dataset(4);
  const auto init = EncoderParams::random(dataset_tokens(data), 3, 3, 5, 0.5);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.steps = 1;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 0.1;
  const auto out = train(init, data, cfg);
  ContrastiveBatch batch;
  for (const auto& t : data) batch.items.push_back({t.prefix, t.continuation, t.generation});
  const auto g = loss_gradient(init, batch);
  EXPECT_LT((out.params.embedding - (init.embedding - 0.1 * g.embedding)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((out.params.projection - (init.projection - 0.1 * g.projection)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Train, FirstAdamStepMovesEachActiveEntryByLearningRate) {
  const auto data = separable_dataset(4);
  const auto init = EncoderParams::random(dataset_tokens(data), 3, 3, 6, 0.5);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.steps = 1;
  cfg.learning_rate = 0.01;
  const auto out = train(init, data, cfg);
  ContrastiveBatch batch;
  for (const auto& t : data) batch.items.push_back({t.prefix, t.continuation, t.generation});
  const auto g = loss_gradient(init, batch);
  const Matrix delta = out.params.embedding - init.embedding;
  for (Eigen::Index r = 0; r < g.embedding.rows(); ++r)
    for (Eigen::Index c = 0; c < g.embedding.cols(); ++c) {
      const double gi = g.embedding(r, c);
      if (gi == 0.0) {
        EXPECT_EQ(delta(r, c), 0.0);
      } else if (std::abs(gi) > 1e-4) {
        EXPECT_NEAR(delta(r, c), gi > 0 ? -0.01 : 0.01, 1e-6);
      }
    }
}

TEST(Train, ReportsWhenNoDocumentFillsABatch) {
  auto data = separable_dataset(5, "a");
  const auto more = separable_dataset(3, "b");
  data.insert(data.end(), more.begin(), more.end());
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.steps = 1;
  try {
    train(EncoderParams::random(dataset_tokens(data), 2, 2, 0), data, cfg);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("largest has 5"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch_size"), std::string::npos) << msg;
  }
}

TEST(Train, GenerativeModesSkipTriplesWithoutGenerations) {
  auto data = separable_dataset(6);
  data[0].generation.reset();
  TrainConfig cfg;
  cfg.batch_size = 6;
  cfg.steps = 1;
  cfg.negative_mode = NegativeMode::generative_only;
  EXPECT_THROW(train(EncoderParams::random(dataset_tokens(data), 2, 2, 0), data, cfg), Error);
  cfg.negative_mode = NegativeMode::inbook_only;
  EXPECT_NO_THROW(train(EncoderParams::random(dataset_tokens(data), 2, 2, 0), data, cfg));
}

TEST(Train, ConfigValidation) {
  TrainConfig cfg;
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.adam_beta1 = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(parse_negative_mode("inbook"), NegativeMode::inbook_only);
  EXPECT_EQ(parse_negative_mode(to_string(NegativeMode::generative_only)), NegativeMode::generative_only);
  EXPECT_THROW(parse_negative_mode("everything"), Error);
}

TEST(Train, LossCurveCsv) {
  std::ostringstream os;
  const std::vector<double> curve = {1.5, 0.25};
  write_loss_curve_csv(os, curve);
  EXPECT_EQ(os.str(), "step,loss\n0,1.5\n1,0.25\n");
}
