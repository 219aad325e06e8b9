#include <gtest/gtest.h>

#include <sstream>

#include "prefixrank/binary_io.hpp"
#include "prefixrank/encoder.hpp"
#include "support.hpp"

using namespace prefixrank;
using namespace prefixrank::encoder;

namespace {
Tokens toks(std::initializer_list<const char*> list) { return Tokens(list.begin(), list.end()); }
}  // namespace

TEST(Encoder, ReservedIdsComeFirst) {
  const auto p = EncoderParams::zeros(toks({"x", "<suf>", "y", "x"}), 3, 2);
  EXPECT_EQ(p.vocab.tokens(), toks({"<pre>", "<suf>", "<unk>", "x", "y"}));
  EXPECT_EQ(p.embedding.rows(), 5);
  EXPECT_EQ(p.d_emb(), 3u);
  EXPECT_EQ(p.d_out(), 2u);
  EXPECT_NO_THROW(p.validate());
}

TEST(Encoder, HandComputedScore) {
  auto p = EncoderParams::zeros(toks({"x", "y"}), 2, 2);
  // Rows: <pre>, <suf>, <unk>, x, y.
  p.embedding << 1, 0,  //
      0, 1,             //
      2, 2,             //
      3, -1,            //
      -1, 4;
  p.projection << 1, 2,  //
      0, 1;
  // prefix [x]: mean(<pre>, x) = (2, -0.5) -> W^T = (2, 3.5)
  // suffix [y, q]: q is unknown; mean(<suf>, y, <unk>) = (1/3, 7/3) -> (1/3, 3)
  const auto pv = encode(p, toks({"x"}), Role::prefix);
  const auto sv = encode(p, toks({"y", "q"}), Role::suffix);
  EXPECT_NEAR(pv(0), 2.0, 1e-15);
  EXPECT_NEAR(pv(1), 3.5, 1e-15);
  EXPECT_NEAR(sv(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(sv(1), 3.0, 1e-15);
  EXPECT_NEAR(score(pv, sv), 2.0 / 3.0 + 10.5, 1e-14);
}

TEST(Encoder, MatchesLoopOracleOnRandomParams) {
  const auto vocab = toks({"a", "b", "c", "d", "e"});
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto p = EncoderParams::random(vocab, 1 + seed % 7, 1 + seed % 5, seed, 1.0);
    const CounterRng rng(seed, 1);
    std::uint64_t counter = 0;
    const auto text = testutil::random_tokens(rng, counter, toks({"a", "b", "c", "zz"}), 1, 9);
    for (const bool prefix : {true, false}) {
      const auto got = encode(p, text, prefix ? Role::prefix : Role::suffix);
      const auto want = testutil::oracle_encode(p, text, prefix);
      for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(got(static_cast<Eigen::Index>(i)), want[i], 1e-14);
    }
  }
}

TEST(Encoder, ZeroParamsScoreZeroAndEmptyInputThrows) {
  const auto p = EncoderParams::zeros(toks({"a"}), 4, 3);
  EXPECT_EQ(score(encode(p, toks({"a"}), Role::prefix), encode(p, toks({"b", "a"}), Role::suffix)), 0.0);
  EXPECT_THROW(encode(p, Tokens{}, Role::prefix), Error);
  EXPECT_THROW(score(EmbeddingVector::Zero(2), EmbeddingVector::Zero(3)), Error);
}

TEST(Encoder, RandomInitIsSeededAndBounded) {
  const auto vocab = toks({"a", "b"});
  const auto a = EncoderParams::random(vocab, 6, 4, 12, 0.05);
  const auto b = EncoderParams::random(vocab, 6, 4, 12, 0.05);
  const auto c = EncoderParams::random(vocab, 6, 4, 13, 0.05);
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_LE(a.embedding.cwiseAbs().maxCoeff(), 0.05);
  EXPECT_LE(a.projection.cwiseAbs().maxCoeff(), 0.05);
  EXPECT_GT(a.embedding.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Encoder, ValidateCatchesShapeProblems) {
  auto p = EncoderParams::zeros(toks({"a"}), 2, 2);
  p.projection = Matrix::Zero(3, 2);
  EXPECT_THROW(p.validate(), Error);
  p = EncoderParams::zeros(toks({"a"}), 2, 2);
  p.embedding(0, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(p.validate(), Error);
  EXPECT_THROW(EncoderParams::zeros(toks({"a"}), 0, 2), Error);
}

TEST(EncoderCheckpoint, RoundTripRoundsToFloat) {
  const auto p = EncoderParams::random(toks({"alpha", "beta", "gamma"}), 5, 3, 7, 1.0);
  std::stringstream ss;
  save_checkpoint(p, ss);
  const auto back = load_checkpoint(ss);
  EXPECT_EQ(back.vocab, p.vocab);
  const Matrix e = p.embedding.cast<float>().cast<double>();
  const Matrix w = p.projection.cast<float>().cast<double>();
  EXPECT_EQ(back.embedding, e);
  EXPECT_EQ(back.projection, w);

  std::stringstream again;
  save_checkpoint(back, again);
  EXPECT_TRUE(load_checkpoint(again) == back);
}

TEST(EncoderCheckpoint, DamagedFilesReportTheirKind) {
  const auto p = EncoderParams::random(toks({"a", "b"}), 3, 2, 1);
  std::stringstream ss;
  save_checkpoint(p, ss);
  const auto bytes = ss.str();
  auto kind_of = [](const std::string& raw) {
    std::istringstream is(raw);
    try {
      load_checkpoint(is);
    } catch (const CheckpointError& e) {
      return e.kind();
    }
    ADD_FAILURE() << "load accepted a damaged checkpoint";
    return CheckpointError::Kind::io;
  };
  EXPECT_EQ(kind_of(bytes.substr(0, bytes.size() - 3)), CheckpointError::Kind::truncated);
  EXPECT_EQ(kind_of("XXXXXXXX" + bytes.substr(8)), CheckpointError::Kind::not_a_checkpoint);
  auto v = bytes;
  v[8] = 2;
  EXPECT_EQ(kind_of(v), CheckpointError::Kind::version_mismatch);
  EXPECT_THROW(load_checkpoint(std::filesystem::path("/nonexistent/enc.ckpt")), CheckpointError);
}
