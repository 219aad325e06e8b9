#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "prefixrank/types.hpp"
#include "prefixrank/vocab.hpp"

namespace prefixrank::encoder {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EmbeddingVector = Eigen::VectorXd;

enum class Role { prefix, suffix };

/// Dual-encoder weights: an embedding table and a linear projection.
///
/// A sequence is encoded as W^T * mean(E[marker], E[t_1], ..., E[t_n]) with
/// marker = <pre> for prefixes and <suf> for continuations. Unknown tokens
/// map to <unk>. The first three vocabulary ids are always <pre>, <suf>, <unk>.
struct EncoderParams {
  static constexpr std::string_view kPre = "<pre>";
  static constexpr std::string_view kSuf = "<suf>";
  static constexpr std::string_view kUnk = "<unk>";
  static constexpr std::size_t kPreId = 0;
  static constexpr std::size_t kSufId = 1;
  static constexpr std::size_t kUnkId = 2;

  Vocabulary vocab;
  Matrix embedding;   // vocab_size x d_emb
  Matrix projection;  // d_emb x d_out

  /// Reserved markers followed by `tokens` (duplicates and reserved names skipped);
  /// entries uniform in [-scale, scale] from RngStream(seed, 0), E then W, row-major.
  static EncoderParams random(std::span<const Token> tokens, std::size_t d_emb, std::size_t d_out,
                              std::uint64_t seed, double scale = 0.05);
  static EncoderParams zeros(std::span<const Token> tokens, std::size_t d_emb, std::size_t d_out);

  std::size_t vocab_size() const noexcept { return vocab.size(); }
  std::size_t d_emb() const noexcept { return static_cast<std::size_t>(embedding.cols()); }
  std::size_t d_out() const noexcept { return static_cast<std::size_t>(projection.cols()); }

  /// Marker id followed by the token ids. Throws on empty input.
  std::vector<std::size_t> ids(std::span<const Token> tokens, Role role) const;

  /// Shapes agree, entries finite, reserved tokens in place.
  void validate() const;

  friend bool operator==(const EncoderParams& a, const EncoderParams& b) {
    return a.vocab == b.vocab && a.embedding == b.embedding && a.projection == b.projection;
  }
};

/// Mean of the embedding rows named by `ids`.
EmbeddingVector mean_embedding(const EncoderParams& params, std::span<const std::size_t> ids);

EmbeddingVector encode(const EncoderParams& params, std::span<const Token> tokens, Role role);

/// Dot product; throws Error on a dimension mismatch.
double score(const EmbeddingVector& prefix_vec, const EmbeddingVector& suffix_vec);

/// Binary layout (little-endian): "PRXENCDR", u32 version, u32 vocab_size,
/// u32 d_emb, u32 d_out, vocab strings (u32 length + bytes), E then W as
/// row-major f32. Parameters are rounded to float on save.
void save_checkpoint(const EncoderParams& params, std::ostream& out);
void save_checkpoint(const EncoderParams& params, const std::filesystem::path& path);
EncoderParams load_checkpoint(std::istream& in);
EncoderParams load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace prefixrank::encoder
