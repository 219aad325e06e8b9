#include "prefixrank/trainer.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <unordered_map>
#include <unordered_set>

#include "prefixrank/parallel.hpp"
#include "prefixrank/rng.hpp"

namespace prefixrank::trainer {
namespace {

using encoder::EmbeddingVector;
using encoder::Role;
using DenseMatrix = Eigen::MatrixXd;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

bool needs_generation(NegativeMode mode) { return mode != NegativeMode::inbook_only; }

/// Encoded sequences in the fixed order: prefixes, continuations, generations.
struct EncodedBatch {
  std::size_t batch = 0;
  std::vector<std::vector<std::size_t>> ids;
  DenseMatrix means;    // rows = sequences, cols = d_emb
  DenseMatrix vectors;  // rows = sequences, cols = d_out
  bool has_generations = false;
};

EncodedBatch encode_batch(const EncoderParams& params, const ContrastiveBatch& batch, const LossOptions& options) {
  EncodedBatch enc;
  enc.batch = batch.size();
  enc.has_generations = needs_generation(options.mode);
  const std::size_t n = enc.batch * (enc.has_generations ? 3 : 2);
  enc.ids.resize(n);
  enc.means.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(params.d_emb()));
  parallel_for(n, options.jobs, [&](std::size_t s) {
    const std::size_t item = s % enc.batch;
    const std::size_t group = s / enc.batch;
    const auto& it = batch.items[item];
    const Tokens& tokens = group == 0 ? it.prefix : group == 1 ? it.continuation : *it.generation;
    enc.ids[s] = params.ids(tokens, group == 0 ? Role::prefix : Role::suffix);
    enc.means.row(static_cast<Eigen::Index>(s)) = encoder::mean_embedding(params, enc.ids[s]).transpose();
  });
  enc.vectors = enc.means * params.projection;
  return enc;
}

struct ScoreMatrices {
  Matrix cont;
  Matrix gen;
  bool has_gen = false;
};

ScoreMatrices score_matrices(const EncodedBatch& enc, const LossOptions& options) {
  const auto b = static_cast<Eigen::Index>(enc.batch);
  const auto& v = enc.vectors;
  ScoreMatrices s;
  s.cont = v.topRows(b) * v.middleRows(b, b).transpose();
  if (options.mode == NegativeMode::generative_only) {
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index j = 0; j < b; ++j)
        if (i != j) s.cont(i, j) = kNegInf;
  }
  if (enc.has_generations) {
    s.has_gen = true;
    s.gen = v.topRows(b) * v.middleRows(2 * b, b).transpose();
    if (!options.own_generation_in_denominator) {
      for (Eigen::Index i = 0; i < b; ++i) s.gen(i, i) = kNegInf;
    }
  }
  return s;
}

}  // namespace

NegativeMode parse_negative_mode(std::string_view text) {
  if (text == "inbook_only" || text == "inbook") return NegativeMode::inbook_only;
  if (text == "generative_only" || text == "generative") return NegativeMode::generative_only;
  if (text == "both") return NegativeMode::both;
  throw Error("unknown negative mode '" + std::string(text) + "' (expected inbook_only, generative_only or both)");
}

std::string to_string(NegativeMode mode) {
  switch (mode) {
    case NegativeMode::inbook_only: return "inbook_only";
    case NegativeMode::generative_only: return "generative_only";
    case NegativeMode::both: return "both";
  }
  return "?";
}

void validate_batch(const ContrastiveBatch& batch, const LossOptions& options) {
  if (batch.size() < 2) throw Error("a contrastive batch needs at least 2 items");
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& it = batch.items[i];
    if (it.prefix.empty() || it.continuation.empty()) {
      throw Error("batch item " + std::to_string(i) + " has an empty prefix or continuation");
    }
    if (needs_generation(options.mode) && (!it.generation || it.generation->empty())) {
      throw Error("negative mode " + to_string(options.mode) + " needs a generation but batch item " +
                  std::to_string(i) + " has none");
    }
  }
}

LossResult loss_from_scores(const Matrix& cont_scores, const Matrix* gen_scores) {
  const Eigen::Index b = cont_scores.rows();
  if (b == 0 || cont_scores.cols() != b) throw Error("continuation score matrix must be square and non-empty");
  if (gen_scores && (gen_scores->rows() != b || gen_scores->cols() != b)) {
    throw Error("generation score matrix must match the continuation score matrix");
  }
  const Eigen::Index width = gen_scores ? 2 * b : b;
  LossResult out;
  out.gold_probs.resize(static_cast<std::size_t>(b));
  out.candidate_probs.assign(static_cast<std::size_t>(b), std::vector<double>(static_cast<std::size_t>(2 * b), 0.0));
  std::vector<double> row(static_cast<std::size_t>(width));
  for (Eigen::Index i = 0; i < b; ++i) {
    for (Eigen::Index j = 0; j < b; ++j) row[static_cast<std::size_t>(j)] = cont_scores(i, j);
    if (gen_scores)
      for (Eigen::Index j = 0; j < b; ++j) row[static_cast<std::size_t>(b + j)] = (*gen_scores)(i, j);
    const double gold = cont_scores(i, i);
    if (!std::isfinite(gold)) throw Error("gold score must be finite");
    double m = kNegInf;
    for (double x : row) {
      if (std::isnan(x) || x == std::numeric_limits<double>::infinity()) throw Error("scores must be finite or -inf");
      m = std::max(m, x);
    }
    double sum = 0.0;
    for (double x : row)
      if (x != kNegInf) sum += std::exp(x - m);
    const double lse = m + std::log(sum);
    out.loss += lse - gold;
    auto& probs = out.candidate_probs[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < row.size(); ++k) probs[k] = row[k] == kNegInf ? 0.0 : std::exp(row[k] - lse);
    out.gold_probs[static_cast<std::size_t>(i)] = std::exp(gold - lse);
  }
  return out;
}

LossResult contrastive_loss(const EncoderParams& params, const ContrastiveBatch& batch, const LossOptions& options) {
  validate_batch(batch, options);
  const auto enc = encode_batch(params, batch, options);
  const auto s = score_matrices(enc, options);
  return loss_from_scores(s.cont, s.has_gen ? &s.gen : nullptr);
}

std::pair<LossResult, Gradient> loss_and_gradient(const EncoderParams& params, const ContrastiveBatch& batch,
                                                  const LossOptions& options) {
  validate_batch(batch, options);
  const auto enc = encode_batch(params, batch, options);
  const auto s = score_matrices(enc, options);
  LossResult loss = loss_from_scores(s.cont, s.has_gen ? &s.gen : nullptr);

  // dL/ds_ij = P_ij - [j is the gold column of row i]
  const auto b = static_cast<Eigen::Index>(enc.batch);
  DenseMatrix d_cont(b, b);
  DenseMatrix d_gen = DenseMatrix::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& p = loss.candidate_probs[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < b; ++j) {
      d_cont(i, j) = p[static_cast<std::size_t>(j)] - (i == j ? 1.0 : 0.0);
      if (s.has_gen) d_gen(i, j) = p[static_cast<std::size_t>(b + j)];
    }
  }

  const auto& v = enc.vectors;
  DenseMatrix d_vec = DenseMatrix::Zero(v.rows(), v.cols());
  d_vec.topRows(b) = d_cont * v.middleRows(b, b);
  d_vec.middleRows(b, b) = d_cont.transpose() * v.topRows(b);
  if (s.has_gen) {
    d_vec.topRows(b) += d_gen * v.middleRows(2 * b, b);
    d_vec.middleRows(2 * b, b) = d_gen.transpose() * v.topRows(b);
  }

  Gradient g;
  g.projection = enc.means.transpose() * d_vec;
  const DenseMatrix d_means = d_vec * params.projection.transpose();
  g.embedding = Matrix::Zero(params.embedding.rows(), params.embedding.cols());
  for (std::size_t seq = 0; seq < enc.ids.size(); ++seq) {
    const auto& ids = enc.ids[seq];
    const Eigen::RowVectorXd share = d_means.row(static_cast<Eigen::Index>(seq)) / static_cast<double>(ids.size());
    for (std::size_t id : ids) g.embedding.row(static_cast<Eigen::Index>(id)) += share;
  }
  return {std::move(loss), std::move(g)};
}

Gradient loss_gradient(const EncoderParams& params, const ContrastiveBatch& batch, const LossOptions& options) {
  return loss_and_gradient(params, batch, options).second;
}

void TrainConfig::validate() const {
  if (batch_size < 2) throw Error("batch_size must be at least 2");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("learning_rate must be positive");
  if (optimizer == OptimizerKind::adam) {
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      throw Error("Adam betas must lie in [0, 1)");
    }
    if (!(adam_epsilon > 0.0)) throw Error("Adam epsilon must be positive");
  }
}

TrainResult train(EncoderParams params, std::span<const corpus::TrainingTriple> dataset, const TrainConfig& cfg,
                  const std::function<void(std::size_t, double)>& on_step) {
  cfg.validate();
  TrainResult result;
  if (cfg.steps == 0) {
    result.params = std::move(params);
    return result;
  }
  params.validate();

  const bool need_gen = needs_generation(cfg.negative_mode);
  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& t = dataset[i];
    if (t.prefix.empty() || t.continuation.empty()) continue;
    if (need_gen && (!t.generation || t.generation->empty())) continue;
    auto [it, inserted] = group_of.try_emplace(t.doc_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  std::vector<const std::vector<std::size_t>*> eligible;
  std::size_t largest = 0;
  for (const auto& g : groups) {
    largest = std::max(largest, g.size());
    if (g.size() >= cfg.batch_size) eligible.push_back(&g);
  }
  if (eligible.empty()) {
    throw Error("no document has at least " + std::to_string(cfg.batch_size) + " usable triples (largest has " +
                std::to_string(largest) + "); try a smaller batch_size");
  }

  const LossOptions options{cfg.negative_mode, cfg.own_generation_in_denominator, cfg.jobs};
  Matrix m_e = Matrix::Zero(params.embedding.rows(), params.embedding.cols());
  Matrix v_e = m_e;
  Matrix m_w = Matrix::Zero(params.projection.rows(), params.projection.cols());
  Matrix v_w = m_w;
  double beta1_pow = 1.0;
  double beta2_pow = 1.0;

  auto adam_update = [&](Matrix& param, Matrix& m, Matrix& v, const Matrix& grad) {
    m = cfg.adam_beta1 * m + (1.0 - cfg.adam_beta1) * grad;
    v = cfg.adam_beta2 * v + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - beta1_pow;
    const double c2 = 1.0 - beta2_pow;
    param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.adam_epsilon);
  };

  result.loss_curve.reserve(cfg.steps);
  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const CounterRng rng(cfg.seed, step);
    const auto& members = *eligible[rng.below(0, eligible.size())];
    order.assign(members.begin(), members.end());
    ContrastiveBatch batch;
    batch.items.reserve(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      const std::size_t j = i + rng.below(1 + i, order.size() - i);
      std::swap(order[i], order[j]);
      const auto& t = dataset[order[i]];
      batch.items.push_back({t.prefix, t.continuation, need_gen ? t.generation : std::nullopt});
    }
    batch.doc_id = dataset[order[0]].doc_id;

    auto [loss, grad] = loss_and_gradient(params, batch, options);
    if (!std::isfinite(loss.loss)) throw Error("training loss became non-finite at step " + std::to_string(step));
    result.loss_curve.push_back(loss.loss);
    if (on_step) on_step(step, loss.loss);

    if (cfg.optimizer == OptimizerKind::sgd) {
      params.embedding -= cfg.learning_rate * grad.embedding;
      params.projection -= cfg.learning_rate * grad.projection;
    } else {
      beta1_pow *= cfg.adam_beta1;
      beta2_pow *= cfg.adam_beta2;
      adam_update(params.embedding, m_e, v_e, grad.embedding);
      adam_update(params.projection, m_w, v_w, grad.projection);
    }
  }
  result.params = std::move(params);
  return result;
}

std::vector<Token> dataset_tokens(std::span<const corpus::TrainingTriple> dataset) {
  std::vector<Token> out;
  std::unordered_set<std::string_view> seen;
  auto add = [&](const Tokens& tokens) {
    for (const auto& t : tokens)
      if (seen.insert(t).second) out.push_back(t);
  };
  for (const auto& t : dataset) {
    add(t.prefix);
    add(t.continuation);
    if (t.generation) add(*t.generation);
  }
  return out;
}

void write_loss_curve_csv(std::ostream& out, std::span<const double> curve) {
  out << "step,loss\n";
  const auto old = out.precision(17);
  for (std::size_t i = 0; i < curve.size(); ++i) out << i << ',' << curve[i] << '\n';
  out.precision(old);
}

}  // namespace prefixrank::trainer
