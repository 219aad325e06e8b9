#include "prefixrank/encoder.hpp"

#include <cmath>
#include <fstream>

#include "prefixrank/binary_io.hpp"
#include "prefixrank/rng.hpp"

namespace prefixrank::encoder {
namespace {

constexpr std::string_view kMagic = "PRXENCDR";

Vocabulary encoder_vocab(std::span<const Token> tokens) {
  Vocabulary v;
  v.add(EncoderParams::kPre);
  v.add(EncoderParams::kSuf);
  v.add(EncoderParams::kUnk);
  for (const auto& t : tokens) v.add(t);
  return v;
}

}  // namespace

EncoderParams EncoderParams::random(std::span<const Token> tokens, std::size_t d_emb, std::size_t d_out,
                                    std::uint64_t seed, double scale) {
  EncoderParams p = zeros(tokens, d_emb, d_out);
  RngStream rng(seed, 0);
  for (Eigen::Index i = 0; i < p.embedding.size(); ++i) p.embedding.data()[i] = rng.uniform(-scale, scale);
  for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = rng.uniform(-scale, scale);
  return p;
}

EncoderParams EncoderParams::zeros(std::span<const Token> tokens, std::size_t d_emb, std::size_t d_out) {
  if (d_emb == 0 || d_out == 0) throw Error("encoder dimensions must be positive");
  EncoderParams p;
  p.vocab = encoder_vocab(tokens);
  p.embedding = Matrix::Zero(static_cast<Eigen::Index>(p.vocab.size()), static_cast<Eigen::Index>(d_emb));
  p.projection = Matrix::Zero(static_cast<Eigen::Index>(d_emb), static_cast<Eigen::Index>(d_out));
  return p;
}

std::vector<std::size_t> EncoderParams::ids(std::span<const Token> tokens, Role role) const {
  if (tokens.empty()) throw Error("cannot encode an empty token sequence");
  std::vector<std::size_t> out;
  out.reserve(tokens.size() + 1);
  out.push_back(role == Role::prefix ? kPreId : kSufId);
  for (const auto& t : tokens) out.push_back(vocab.id_or(t, kUnkId));
  return out;
}

void EncoderParams::validate() const {
  if (vocab.size() < 3 || vocab.token(kPreId) != kPre || vocab.token(kSufId) != kSuf ||
      vocab.token(kUnkId) != kUnk) {
    throw Error("encoder vocabulary must start with <pre>, <suf>, <unk>");
  }
  if (static_cast<std::size_t>(embedding.rows()) != vocab.size()) throw Error("embedding rows != vocabulary size");
  if (projection.rows() != embedding.cols()) throw Error("projection rows != embedding width");
  if (!embedding.allFinite() || !projection.allFinite()) throw Error("encoder parameters must be finite");
}

EmbeddingVector mean_embedding(const EncoderParams& params, std::span<const std::size_t> ids) {
  EmbeddingVector m = EmbeddingVector::Zero(params.embedding.cols());
  for (std::size_t id : ids) m += params.embedding.row(static_cast<Eigen::Index>(id)).transpose();
  return m / static_cast<double>(ids.size());
}

EmbeddingVector encode(const EncoderParams& params, std::span<const Token> tokens, Role role) {
  const auto ids = params.ids(tokens, role);
  return params.projection.transpose() * mean_embedding(params, ids);
}

double score(const EmbeddingVector& prefix_vec, const EmbeddingVector& suffix_vec) {
  if (prefix_vec.size() != suffix_vec.size()) {
    throw Error("embedding dimension mismatch: " + std::to_string(prefix_vec.size()) + " vs " +
                std::to_string(suffix_vec.size()));
  }
  return prefix_vec.dot(suffix_vec);
}

void save_checkpoint(const EncoderParams& params, std::ostream& out) {
  params.validate();
  BinaryWriter w(out);
  w.bytes(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.vocab_size()));
  w.u32(static_cast<std::uint32_t>(params.d_emb()));
  w.u32(static_cast<std::uint32_t>(params.d_out()));
  for (const auto& t : params.vocab.tokens()) w.str(t);
  for (Eigen::Index i = 0; i < params.embedding.size(); ++i) w.f32(static_cast<float>(params.embedding.data()[i]));
  for (Eigen::Index i = 0; i < params.projection.size(); ++i) w.f32(static_cast<float>(params.projection.data()[i]));
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "failed writing encoder checkpoint");
}

void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open for writing: " + path.string());
  save_checkpoint(params, out);
}

EncoderParams load_checkpoint(std::istream& in) {
  BinaryReader r(in);
  r.expect_header(kMagic, kCheckpointVersion, "encoder");
  const std::uint32_t v = r.u32();
  const std::uint32_t d_emb = r.u32();
  const std::uint32_t d_out = r.u32();
  if (v < 3 || d_emb == 0 || d_out == 0 || d_emb > 65536 || d_out > 65536) {
    throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt encoder checkpoint dimensions");
  }
  EncoderParams p;
  for (std::uint32_t i = 0; i < v; ++i) {
    const auto tok = r.str();
    if (p.vocab.find(tok)) throw CheckpointError(CheckpointError::Kind::corrupt, "duplicate vocabulary entry");
    p.vocab.add(tok);
  }
  p.embedding.resize(v, d_emb);
  p.projection.resize(d_emb, d_out);
  for (Eigen::Index i = 0; i < p.embedding.size(); ++i) p.embedding.data()[i] = r.f32();
  for (Eigen::Index i = 0; i < p.projection.size(); ++i) p.projection.data()[i] = r.f32();
  try {
    p.validate();
  } catch (const Error& e) {
    throw CheckpointError(CheckpointError::Kind::corrupt, std::string("corrupt encoder checkpoint: ") + e.what());
  }
  return p;
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint: " + path.string());
  return load_checkpoint(in);
}

}  // namespace prefixrank::encoder
