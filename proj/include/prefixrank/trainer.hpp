#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "prefixrank/corpus.hpp"
#include "prefixrank/encoder.hpp"

namespace prefixrank::trainer {

using encoder::EncoderParams;
using encoder::Matrix;

enum class NegativeMode { inbook_only, generative_only, both };

NegativeMode parse_negative_mode(std::string_view text);
std::string to_string(NegativeMode mode);

struct BatchItem {
  Tokens prefix;
  Tokens continuation;
  std::optional<Tokens> generation;
};

/// Items drawn from a single document.
struct ContrastiveBatch {
  std::string doc_id;
  std::vector<BatchItem> items;

  std::size_t size() const noexcept { return items.size(); }
};

struct LossOptions {
  NegativeMode mode = NegativeMode::both;
  /// Whether item i's own generation g_i appears in its denominator.
  bool own_generation_in_denominator = true;
  /// Workers for per-sequence encoding; reductions run in a fixed order.
  std::size_t jobs = 1;
};

/// Throws Error when the batch has fewer than 2 items or the mode needs a
/// generation some item lacks.
void validate_batch(const ContrastiveBatch& batch, const LossOptions& options);

struct LossResult {
  /// -sum_i log P(c_i | p_i)
  double loss = 0.0;
  /// P(c_i | p_i) per item.
  std::vector<double> gold_probs;
  /// Softmax over item i's denominator: |B| continuation columns followed by
  /// |B| generation columns (zero where a column is excluded).
  std::vector<std::vector<double>> candidate_probs;
};

/// In-batch softmax loss from precomputed dot products.
///
/// cont_scores(i, j) = p_i . c_j; gen_scores(i, j) = p_i . g_j or nullptr when
/// generations are not part of any denominator. Entries equal to -infinity
/// are excluded. Each row's log-denominator uses the max-shifted log-sum-exp.
LossResult loss_from_scores(const Matrix& cont_scores, const Matrix* gen_scores);

/// Z(p_i) = sum_j exp(p_i . c_j) + sum_j exp(p_i . g_j); inbook_only drops the
/// generation terms and generative_only keeps only c_i among continuations.
LossResult contrastive_loss(const EncoderParams& params, const ContrastiveBatch& batch,
                            const LossOptions& options = {});

struct Gradient {
  Matrix embedding;
  Matrix projection;
};

/// Analytic gradient of contrastive_loss with respect to E and W. Rows of
/// tokens absent from the batch are exactly zero.
Gradient loss_gradient(const EncoderParams& params, const ContrastiveBatch& batch, const LossOptions& options = {});

/// Both at once; the loss equals contrastive_loss().
std::pair<LossResult, Gradient> loss_and_gradient(const EncoderParams& params, const ContrastiveBatch& batch,
                                                  const LossOptions& options = {});

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 1e-2;
  std::size_t steps = 1000;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  NegativeMode negative_mode = NegativeMode::both;
  bool own_generation_in_denominator = true;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  void validate() const;
};

struct TrainResult {
  EncoderParams params;
  /// Batch loss before each step's update.
  std::vector<double> loss_curve;
};

/// Constant-learning-rate training. Step s draws a document uniformly from
/// those with at least batch_size usable triples using CounterRng(seed, s)
/// counter 0, then batch_size of its triples without replacement (partial
/// Fisher-Yates on counters 1..batch_size). Triples lacking a generation are
/// unusable when the mode needs one.
TrainResult train(EncoderParams params, std::span<const corpus::TrainingTriple> dataset, const TrainConfig& cfg,
                  const std::function<void(std::size_t step, double loss)>& on_step = {});

/// Every token appearing in the dataset, in first-seen order.
std::vector<Token> dataset_tokens(std::span<const corpus::TrainingTriple> dataset);

/// "step,loss" header then one row per step.
void write_loss_curve_csv(std::ostream& out, std::span<const double> curve);

}  // namespace prefixrank::trainer
