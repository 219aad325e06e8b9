#include "prefixrank/ngram_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "prefixrank/binary_io.hpp"
#include "prefixrank/rng.hpp"

namespace prefixrank::lm {
namespace {

constexpr std::string_view kMagic = "PRXNGRAM";

}  // namespace

void NGramOptions::validate() const {
  if (order < 1) throw Error("n-gram order must be >= 1");
  if (weights.size() != order) throw Error("need exactly one interpolation weight per order");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("interpolation weights must be non-negative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("interpolation weights must sum to 1");
  if (!(alpha > 0.0)) throw Error("unigram smoothing alpha must be > 0");
}

NGramModel NGramModel::train(std::span<const Tokens> sequences, const NGramOptions& options) {
  options.validate();
  std::size_t total_tokens = 0;
  for (const auto& s : sequences) total_tokens += s.size();
  if (total_tokens == 0) throw Error("cannot train an n-gram model on an empty corpus");

  NGramModel m;
  m.order_ = options.order;
  m.weights_ = options.weights;
  m.alpha_ = options.alpha;
  m.vocab_.add(kUnk);
  m.vocab_.add(kBos);
  m.vocab_.add(kEos);
  for (const auto& s : sequences) {
    for (const auto& t : s) m.vocab_.add(t);
  }
  m.unigram_counts_.assign(m.vocab_.size(), 0);

  std::vector<std::map<History, std::map<Id, std::uint64_t>>> raw(m.order_ > 1 ? m.order_ - 1 : 0);
  for (const auto& s : sequences) {
    const auto ids = m.ids_of(s);
    for (std::size_t t = 0; t < ids.size(); ++t) {
      ++m.unigram_counts_[ids[t]];
      ++m.unigram_total_;
      for (std::size_t k = 2; k <= m.order_ && t + 1 >= k; ++k) {
        History h(ids.begin() + static_cast<std::ptrdiff_t>(t + 1 - k), ids.begin() + static_cast<std::ptrdiff_t>(t));
        ++raw[k - 2][std::move(h)][ids[t]];
      }
    }
  }
  m.histories_.resize(raw.size());
  for (std::size_t level = 0; level < raw.size(); ++level) {
    for (auto& [h, nexts] : raw[level]) {
      Successors s;
      for (const auto& [id, c] : nexts) {
        s.next.emplace_back(id, c);
        s.total += c;
      }
      m.histories_[level].emplace(h, std::move(s));
    }
  }
  return m;
}

NGramModel NGramModel::train(std::span<const corpus::Document> docs, const NGramOptions& options) {
  std::vector<Tokens> seqs;
  seqs.reserve(docs.size());
  for (const auto& d : docs) seqs.push_back(d.tokens);
  return train(std::span<const Tokens>(seqs), options);
}

NGramModel::Id NGramModel::id_of(std::string_view token) const {
  return static_cast<Id>(vocab_.id_or(token, kUnkId));
}

std::vector<NGramModel::Id> NGramModel::ids_of(std::span<const Token> tokens) const {
  std::vector<Id> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_of(t));
  return ids;
}

double NGramModel::unigram_probability(Id id) const noexcept {
  if (id == kBosId) return 0.0;
  const double denom = static_cast<double>(unigram_total_) + alpha_ * static_cast<double>(vocab_.size() - 1);
  return (static_cast<double>(unigram_counts_[id]) + alpha_) / denom;
}

void NGramModel::resolve(std::span<const Id> context, std::vector<double>& weights,
                         std::vector<const Successors*>& levels) const {
  weights = weights_;
  levels.assign(order_, nullptr);
  for (std::size_t k = order_; k >= 2; --k) {
    const Successors* found = nullptr;
    if (context.size() >= k - 1) {
      History h(context.end() - static_cast<std::ptrdiff_t>(k - 1), context.end());
      const auto& table = histories_[k - 2];
      if (auto it = table.find(h); it != table.end() && it->second.total > 0) found = &it->second;
    }
    if (found == nullptr) {
      weights[k - 2] += weights[k - 1];
      weights[k - 1] = 0.0;
    }
    levels[k - 1] = found;
  }
}

NextTokenDistribution NGramModel::next_distribution_ids(std::span<const Id> context) const {
  std::vector<double> w;
  std::vector<const Successors*> levels;
  resolve(context, w, levels);
  NextTokenDistribution dist;
  dist.probs.resize(vocab_.size());
  for (std::size_t id = 0; id < vocab_.size(); ++id) {
    dist.probs[id] = w[0] * unigram_probability(static_cast<Id>(id));
  }
  for (std::size_t k = 2; k <= order_; ++k) {
    const Successors* s = levels[k - 1];
    if (s == nullptr || w[k - 1] == 0.0) continue;
    const double total = static_cast<double>(s->total);
    for (const auto& [id, c] : s->next) dist.probs[id] += w[k - 1] * (static_cast<double>(c) / total);
  }
  return dist;
}

double NGramModel::token_probability(std::span<const Id> context, Id next) const {
  std::vector<double> w;
  std::vector<const Successors*> levels;
  resolve(context, w, levels);
  double p = w[0] * unigram_probability(next);
  for (std::size_t k = 2; k <= order_; ++k) {
    const Successors* s = levels[k - 1];
    if (s == nullptr || w[k - 1] == 0.0) continue;
    auto it = std::lower_bound(s->next.begin(), s->next.end(), next,
                               [](const auto& e, Id id) { return e.first < id; });
    if (it != s->next.end() && it->first == next) {
      p += w[k - 1] * (static_cast<double>(it->second) / static_cast<double>(s->total));
    }
  }
  return p;
}

NextTokenDistribution NGramModel::next_distribution(std::span<const Token> context) const {
  const std::size_t keep = std::min(context.size(), order_ - 1);
  const auto ids = ids_of(context.subspan(context.size() - keep));
  return next_distribution_ids(ids);
}

double NGramModel::sequence_logprob(std::span<const Token> prefix, std::span<const Token> continuation) const {
  std::vector<Id> history;
  const std::size_t keep = std::min(prefix.size(), order_ - 1);
  for (const auto& t : prefix.subspan(prefix.size() - keep)) history.push_back(id_of(t));
  double total = 0.0;
  for (const auto& t : continuation) {
    const Id id = id_of(t);
    total += std::log(token_probability(history, id));
    history.push_back(id);
    if (history.size() > order_ - 1) history.erase(history.begin());
  }
  return total;
}

std::vector<GeneratedSample> NGramModel::generate(const GenerationRequest& request) const {
  request.strategy.validate();
  std::vector<GeneratedSample> out(request.num_samples);
  const std::size_t keep = std::min(request.context.size(), order_ - 1);
  const auto base_history = ids_of(std::span<const Token>(request.context).subspan(request.context.size() - keep));

  for (std::size_t j = 0; j < request.num_samples; ++j) {
    const CounterRng rng(request.seed, request.stream_base + j);
    std::vector<Id> history = base_history;
    auto& sample = out[j];
    for (std::size_t t = 0; t < request.num_new_tokens; ++t) {
      const auto dist = truncate_distribution(next_distribution_ids(history), request.strategy);
      const auto id = static_cast<Id>(sample_inverse_cdf(dist.probs, rng.unit(request.counter_base + t)));
      if (id == kEosId) {
        sample.finished = true;
        break;
      }
      sample.tokens.push_back(vocab_.token(id));
      if (order_ > 1) {
        history.push_back(id);
        if (history.size() > order_ - 1) history.erase(history.begin());
      }
    }
  }
  return out;
}

std::vector<Tokens> NGramModel::generate(std::span<const Token> prefix, std::size_t num_new_tokens,
                                         std::size_t num_samples, const SamplingStrategy& strategy,
                                         std::uint64_t seed) const {
  GenerationRequest req;
  req.context.assign(prefix.begin(), prefix.end());
  req.num_new_tokens = num_new_tokens;
  req.num_samples = num_samples;
  req.strategy = strategy;
  req.seed = seed;
  std::vector<Tokens> out;
  for (auto& s : generate(req)) out.push_back(std::move(s.tokens));
  return out;
}

std::string NGramModel::describe() const {
  return "ngram(order=" + std::to_string(order_) + ", vocab=" + std::to_string(vocab_.size()) + ")";
}

void NGramModel::save(std::ostream& out) const {
  BinaryWriter w(out);
  w.bytes(kMagic);
  w.u32(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(order_));
  w.f64(alpha_);
  for (double l : weights_) w.f64(l);
  w.u32(static_cast<std::uint32_t>(vocab_.size()));
  for (const auto& t : vocab_.tokens()) w.str(t);
  for (auto c : unigram_counts_) w.u64(c);
  for (std::size_t level = 0; level < histories_.size(); ++level) {
    w.u64(histories_[level].size());
    for (const auto& [h, s] : histories_[level]) {
      for (Id id : h) w.u32(id);
      w.u32(static_cast<std::uint32_t>(s.next.size()));
      for (const auto& [id, c] : s.next) {
        w.u32(id);
        w.u64(c);
      }
    }
  }
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "failed writing n-gram checkpoint");
}

void NGramModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot open for writing: " + path.string());
  save(out);
}

NGramModel NGramModel::load(std::istream& in) {
  BinaryReader r(in);
  r.expect_header(kMagic, kFormatVersion, "n-gram");
  NGramModel m;
  m.order_ = r.u32();
  if (m.order_ < 1 || m.order_ > 16) throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt n-gram order");
  m.alpha_ = r.f64();
  m.weights_.resize(m.order_);
  for (double& l : m.weights_) l = r.f64();
  const std::uint32_t v = r.u32();
  if (v < 3) throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt n-gram vocabulary");
  for (std::uint32_t i = 0; i < v; ++i) {
    const auto tok = r.str();
    if (m.vocab_.find(tok)) throw CheckpointError(CheckpointError::Kind::corrupt, "duplicate vocabulary entry");
    m.vocab_.add(tok);
  }
  if (m.vocab_.token(kUnkId) != kUnk || m.vocab_.token(kBosId) != kBos || m.vocab_.token(kEosId) != kEos) {
    throw CheckpointError(CheckpointError::Kind::corrupt, "corrupt n-gram reserved tokens");
  }
  m.unigram_counts_.resize(v);
  for (auto& c : m.unigram_counts_) {
    c = r.u64();
    m.unigram_total_ += c;
  }
  m.histories_.resize(m.order_ - 1);
  for (std::size_t level = 0; level + 1 < m.order_; ++level) {
    const std::uint64_t n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
      History h(level + 1);
      for (Id& id : h) {
        id = r.u32();
        if (id >= v) throw CheckpointError(CheckpointError::Kind::corrupt, "n-gram id out of range");
      }
      Successors s;
      const std::uint32_t k = r.u32();
      for (std::uint32_t e = 0; e < k; ++e) {
        const Id id = r.u32();
        if (id >= v) throw CheckpointError(CheckpointError::Kind::corrupt, "n-gram id out of range");
        const std::uint64_t c = r.u64();
        s.next.emplace_back(id, c);
        s.total += c;
      }
      m.histories_[level].emplace(std::move(h), std::move(s));
    }
  }
  NGramOptions{m.order_, m.weights_, m.alpha_}.validate();
  return m;
}

NGramModel NGramModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint: " + path.string());
  return load(in);
}

bool operator==(const NGramModel& a, const NGramModel& b) {
  if (a.order_ != b.order_ || a.weights_ != b.weights_ || a.alpha_ != b.alpha_ || !(a.vocab_ == b.vocab_) ||
      a.unigram_counts_ != b.unigram_counts_ || a.histories_.size() != b.histories_.size()) {
    return false;
  }
  for (std::size_t l = 0; l < a.histories_.size(); ++l) {
    if (a.histories_[l].size() != b.histories_[l].size()) return false;
    auto ia = a.histories_[l].begin();
    auto ib = b.histories_[l].begin();
    for (; ia != a.histories_[l].end(); ++ia, ++ib) {
      if (ia->first != ib->first || ia->second.total != ib->second.total || ia->second.next != ib->second.next) {
        return false;
      }
    }
  }
  return true;
}

}  // namespace prefixrank::lm
