#include "prefixrank/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

#include "prefixrank/parallel.hpp"
#include "prefixrank/rng.hpp"

namespace prefixrank::eval {
namespace {

using nlohmann::json;

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

void SuffixIdInstance::validate() const {
  if (candidates.size() < 2) throw Error("a suffix identification instance needs at least 2 candidates");
  if (gold_index >= candidates.size()) throw Error("gold_index out of range");
}

void EvalReport::validate() const {
  if (!std::isfinite(value)) throw Error("report '" + metric + "' has a non-finite value");
  if (n < 1) throw Error("report '" + metric + "' covers no instances");
}

json EvalReport::to_json() const {
  json j{{"metric", metric}, {"value", value}, {"n", n}, {"config", config}};
  if (!per_instance.empty()) j["per_instance"] = per_instance;
  return j;
}

std::vector<SuffixIdInstance> read_suffix_id_instances(std::istream& in) {
  std::vector<SuffixIdInstance> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      SuffixIdInstance inst;
      inst.prefix = j.at("prefix").get<Tokens>();
      inst.candidates = j.at("candidates").get<std::vector<Tokens>>();
      inst.gold_index = j.at("gold_index").get<std::size_t>();
      inst.validate();
      out.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw Error("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_suffix_id_instances(std::ostream& out, std::span<const SuffixIdInstance> instances) {
  for (const auto& inst : instances) {
    out << json{{"prefix", inst.prefix}, {"candidates", inst.candidates}, {"gold_index", inst.gold_index}}.dump()
        << '\n';
  }
}

std::vector<SuffixIdInstance> make_inbook_instances(std::span<const corpus::Document> docs,
                                                    const corpus::CorpusConfig& cfg, std::size_t distractors,
                                                    std::uint64_t seed) {
  if (distractors < 1) throw Error("need at least one distractor");
  std::vector<SuffixIdInstance> out;
  for (const auto& doc : docs) {
    for (const auto& pair : corpus::extract_pairs(doc, cfg)) {
      std::vector<corpus::Span> negs;
      try {
        negs = corpus::sample_inbook_negatives(doc, pair.continuation, distractors, seed);
      } catch (const corpus::InsufficientCandidates&) {
        continue;
      }
      const CounterRng slot_rng(combine_seed(seed, fnv1a64(doc.doc_id)), pair.prefix.begin);
      SuffixIdInstance inst;
      inst.prefix = corpus::slice(doc, pair.prefix);
      inst.gold_index = slot_rng.below(1, distractors + 1);
      for (std::size_t i = 0, k = 0; i <= distractors; ++i) {
        inst.candidates.push_back(i == inst.gold_index ? corpus::slice(doc, pair.continuation)
                                                       : corpus::slice(doc, negs[k++]));
      }
      out.push_back(std::move(inst));
    }
  }
  return out;
}

std::vector<SuffixIdInstance> make_generative_instances(std::span<const corpus::TrainingTriple> triples) {
  std::vector<SuffixIdInstance> out;
  for (const auto& t : triples) {
    if (!t.generation || t.generation->empty()) continue;
    out.push_back({t.prefix, {t.continuation, *t.generation}, 0});
  }
  return out;
}

EvalReport suffix_id_accuracy(std::span<const SuffixIdInstance> instances, const scoring::Scorer& scorer,
                              std::size_t jobs) {
  if (instances.empty()) throw Error("suffix identification needs at least one instance");
  for (const auto& inst : instances) inst.validate();
  EvalReport r;
  r.metric = "suffix_id_accuracy";
  r.n = instances.size();
  r.per_instance.assign(instances.size(), 0.0);
  parallel_for(instances.size(), jobs, [&](std::size_t i) {
    const auto& inst = instances[i];
    const auto scores = scorer.score_all(inst.prefix, inst.candidates);
    const double gold = scores[inst.gold_index];
    bool win = !std::isnan(gold);
    for (std::size_t j = 0; j < scores.size() && win; ++j)
      if (j != inst.gold_index && !(scores[j] < gold)) win = false;
    r.per_instance[i] = win ? 1.0 : 0.0;
  });
  r.value = mean(r.per_instance);
  r.config = {{"scorer", scorer.describe()}, {"ways", instances.front().candidates.size()}};
  return r;
}

std::vector<corpus::Span> sentence_windows(const corpus::Document& doc, std::size_t window_words) {
  if (window_words < 1) throw Error("window_words must be >= 1");
  const corpus::BoundaryIndex idx(doc);
  std::vector<corpus::Span> out;
  for (std::size_t i = 0; i + 1 < idx.size(); ++i) {
    std::size_t best = i;
    for (std::size_t j = i + 1; j < idx.size() && idx.words(i, j) <= window_words; ++j) best = j;
    if (best > i && idx.words(i, best) > 0) out.push_back({idx.position(i), idx.position(best)});
  }
  return out;
}

std::vector<ScoredSpan> mine_hard_negatives(const corpus::Document& doc, std::span<const Token> prefix,
                                            corpus::Span gold, const scoring::Scorer& scorer,
                                            std::size_t window_words, std::size_t count) {
  std::vector<ScoredSpan> scored;
  for (const auto& w : sentence_windows(doc, window_words)) {
    if (w == gold) continue;
    scored.push_back({w, scorer.score(prefix, corpus::slice(doc, w))});
  }
  if (scored.empty()) throw Error("document " + doc.doc_id + " has no candidate windows besides the gold span");
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredSpan& a, const ScoredSpan& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.span < b.span;
  });
  if (scored.size() > count) scored.resize(count);
  return scored;
}

std::vector<SuffixIdInstance> make_retrieval_instances(std::span<const corpus::Document> docs,
                                                       const corpus::CorpusConfig& cfg) {
  std::vector<SuffixIdInstance> out;
  for (const auto& doc : docs) {
    const auto pairs = corpus::extract_pairs(doc, cfg);
    if (pairs.size() < 2) continue;
    std::vector<Tokens> candidates;
    candidates.reserve(pairs.size());
    for (const auto& p : pairs) candidates.push_back(corpus::slice(doc, p.continuation));
    for (std::size_t i = 0; i < pairs.size(); ++i) out.push_back({corpus::slice(doc, pairs[i].prefix), candidates, i});
  }
  return out;
}

std::vector<EvalReport> retrieval_recall(std::span<const SuffixIdInstance> instances, const scoring::Scorer& scorer,
                                         std::span<const std::size_t> ks, std::size_t jobs) {
  if (instances.empty()) throw Error("retrieval needs at least one instance");
  if (ks.empty()) throw Error("retrieval needs at least one k");
  for (std::size_t i = 0; i < instances.size(); ++i) {
    try {
      instances[i].validate();
    } catch (const Error& e) {
      throw Error("retrieval instance " + std::to_string(i) + ": " + e.what());
    }
  }
  std::vector<std::size_t> ranks(instances.size());
  parallel_for(instances.size(), jobs, [&](std::size_t i) {
    const auto& inst = instances[i];
    const auto scores = scorer.score_all(inst.prefix, inst.candidates);
    const double gold = scores[inst.gold_index];
    std::size_t rank = 1;
    for (std::size_t j = 0; j < scores.size(); ++j)
      if (j != inst.gold_index && (scores[j] >= gold || std::isnan(gold))) ++rank;
    ranks[i] = rank;
  });
  double mean_candidates = 0.0;
  for (const auto& inst : instances) mean_candidates += static_cast<double>(inst.candidates.size());
  mean_candidates /= static_cast<double>(instances.size());

  std::vector<EvalReport> out;
  for (std::size_t k : ks) {
    EvalReport r;
    r.metric = "recall@" + std::to_string(k);
    r.n = instances.size();
    std::size_t hits = 0;
    for (std::size_t rank : ranks) hits += rank <= k ? 1 : 0;
    r.value = static_cast<double>(hits) / static_cast<double>(instances.size());
    r.config = {{"scorer", scorer.describe()}, {"k", k}, {"mean_candidates", mean_candidates}};
    out.push_back(std::move(r));
  }
  return out;
}

double rep_of(std::span<const Token> tokens, std::size_t window) {
  if (tokens.empty()) throw Error("rep needs a non-empty sequence");
  if (window < 1) throw Error("rep window must be >= 1");
  std::size_t repeated = 0;
  for (std::size_t t = 1; t < tokens.size(); ++t) {
    const std::size_t lo = t > window ? t - window : 0;
    if (std::find(tokens.begin() + static_cast<std::ptrdiff_t>(lo), tokens.begin() + static_cast<std::ptrdiff_t>(t),
                  tokens[t]) != tokens.begin() + static_cast<std::ptrdiff_t>(t)) {
      ++repeated;
    }
  }
  return static_cast<double>(repeated) / static_cast<double>(tokens.size());
}

EvalReport rep_score(std::span<const Tokens> continuations, std::size_t window) {
  if (continuations.empty()) throw Error("rep needs at least one continuation");
  EvalReport r;
  r.metric = "rep";
  r.n = continuations.size();
  for (const auto& c : continuations) r.per_instance.push_back(rep_of(c, window));
  r.value = mean(r.per_instance);
  r.config = {{"window", window}};
  return r;
}

EvalReport prefix_overlap(std::span<const std::pair<Tokens, Tokens>> pairs) {
  if (pairs.empty()) throw Error("prefix overlap needs at least one pair");
  EvalReport r;
  r.metric = "prefix_overlap";
  r.n = pairs.size();
  for (const auto& [p, c] : pairs) r.per_instance.push_back(scoring::score_unigram_overlap(p, c));
  r.value = mean(r.per_instance);
  r.config = {{"level", "type"}};
  return r;
}

std::vector<GridPoint> default_grid(std::size_t max_length) {
  if (max_length < 1) throw Error("max_length must be >= 1");
  static constexpr std::pair<std::size_t, std::size_t> kBeams[] = {{1, 1}, {1, 5},  {1, 10}, {2, 5}, {1, 20},
                                                                   {2, 10}, {4, 5}, {1, 40}, {2, 20}};
  std::vector<std::size_t> lengths;
  for (std::size_t l : {5, 10, 20, 50})
    if (l < max_length) lengths.push_back(l);
  lengths.push_back(max_length);
  std::vector<GridPoint> grid;
  for (std::size_t l : lengths)
    for (const auto& [b, n] : kBeams) grid.push_back({l, b, n});
  return grid;
}

std::vector<GridRow> grid_search(std::span<const Tokens> prefixes, const Generator& generator,
                                 const scoring::Scorer& scorer, std::span<const GridPoint> grid,
                                 std::size_t max_length, const SamplingStrategy& strategy, std::uint64_t seed,
                                 const GridMetric& metric) {
  if (grid.empty()) throw Error("grid search needs at least one configuration");
  if (prefixes.empty()) throw Error("grid search needs at least one prefix");
  std::vector<GridRow> rows;
  for (const auto& point : grid) {
    decode::DecodeConfig cfg;
    cfg.rerank_length = point.rerank_length;
    cfg.beam_size = point.beam_size;
    cfg.samples_per_beam = point.samples_per_beam;
    cfg.max_length = max_length;
    cfg.strategy = strategy;
    cfg.seed = seed;
    cfg.jobs = 1;
    std::vector<Tokens> outputs;
    outputs.reserve(prefixes.size());
    const auto start = std::chrono::steady_clock::now();
    for (const auto& prefix : prefixes) {
      auto beams = decode::rankgen_search(prefix, generator, scorer, cfg);
      outputs.push_back(std::move(beams.front().tokens));
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    GridRow row;
    row.point = point;
    row.seconds_per_generation = elapsed.count() / static_cast<double>(prefixes.size());
    row.metric = metric ? metric(prefixes, outputs) : 0.0;
    rows.push_back(row);
  }
  return rows;
}

void write_grid_csv(std::ostream& out, std::span<const GridRow> rows) {
  out << "rerank_length,beam_size,samples_per_beam,metric,seconds_per_generation\n";
  const auto old = out.precision(10);
  for (const auto& r : rows) {
    out << r.point.rerank_length << ',' << r.point.beam_size << ',' << r.point.samples_per_beam << ',' << r.metric
        << ',' << r.seconds_per_generation << '\n';
  }
  out.precision(old);
}

BenchResult bench(std::span<const Tokens> prefixes, const Generator& generator, const scoring::Scorer& scorer,
                  const decode::DecodeConfig& cfg, std::size_t repeats) {
  if (prefixes.empty()) throw Error("bench needs at least one prefix");
  if (repeats < 1) throw Error("bench needs repeats >= 1");
  decode::DecodeConfig sequential = cfg;
  sequential.jobs = 1;
  BenchResult r;
  std::size_t tokens = 0;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t rep = 0; rep < repeats; ++rep) {
    for (const auto& prefix : prefixes) {
      const auto beams = decode::rankgen_search(prefix, generator, scorer, sequential);
      tokens += beams.front().tokens.size();
      ++r.generations;
    }
  }
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  r.seconds_per_generation = elapsed.count() / static_cast<double>(r.generations);
  r.tokens_per_second = elapsed.count() > 0.0 ? static_cast<double>(tokens) / elapsed.count() : 0.0;
  return r;
}

std::string format_table(std::span<const EvalReport> reports) {
  std::size_t width = 6;
  for (const auto& r : reports) width = std::max(width, r.metric.size());
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(width)) << "metric" << "  " << std::setw(10) << "value"
      << "  n\n";
  for (const auto& r : reports) {
    out << std::left << std::setw(static_cast<int>(width)) << r.metric << "  " << std::setw(10) << std::fixed
        << std::setprecision(4) << r.value << "  " << r.n << '\n';
  }
  return out.str();
}

}  // namespace prefixrank::eval
