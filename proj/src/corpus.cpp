#include "prefixrank/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "prefixrank/parallel.hpp"
#include "prefixrank/rng.hpp"

namespace prefixrank::corpus {
namespace {

using nlohmann::json;

constexpr std::string_view kPunctuation = ".,!?;:\"'()";

bool is_punct_char(char c) noexcept { return kPunctuation.find(c) != std::string_view::npos; }

bool is_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

void split_chunk(std::string_view chunk, Tokens& out) {
  std::size_t lo = 0;
  std::size_t hi = chunk.size();
  while (lo < hi && is_punct_char(chunk[lo])) ++lo;
  if (lo == hi) {
    for (char c : chunk) out.emplace_back(1, c);
    return;
  }
  while (hi > lo && is_punct_char(chunk[hi - 1])) --hi;
  for (std::size_t i = 0; i < lo; ++i) out.emplace_back(1, chunk[i]);
  out.emplace_back(chunk.substr(lo, hi - lo));
  for (std::size_t i = hi; i < chunk.size(); ++i) out.emplace_back(1, chunk[i]);
}

Tokens tokens_from_json(const json& j, const char* field) {
  if (!j.is_array()) throw Error(std::string("field '") + field + "' must be an array of strings");
  Tokens out;
  out.reserve(j.size());
  for (const auto& t : j) {
    if (!t.is_string()) throw Error(std::string("field '") + field + "' must contain only strings");
    out.push_back(t.get<std::string>());
  }
  return out;
}

}  // namespace

void Document::validate() const {
  if (tokens.empty()) {
    if (!sentence_starts.empty()) throw Error("document '" + doc_id + "': sentence starts without tokens");
    return;
  }
  if (sentence_starts.empty() || sentence_starts.front() != 0) {
    throw Error("document '" + doc_id + "': sentence_starts must begin with 0");
  }
  for (std::size_t i = 1; i < sentence_starts.size(); ++i) {
    if (sentence_starts[i] <= sentence_starts[i - 1]) {
      throw Error("document '" + doc_id + "': sentence_starts must be strictly increasing");
    }
  }
  if (sentence_starts.back() >= tokens.size()) {
    throw Error("document '" + doc_id + "': sentence start beyond last token");
  }
}

bool is_punctuation(std::string_view token) noexcept {
  return token.size() == 1 && is_punct_char(token[0]);
}

bool is_sentence_terminator(std::string_view token) noexcept {
  return token == "." || token == "!" || token == "?";
}

std::size_t word_count(std::span<const Token> tokens) noexcept {
  return static_cast<std::size_t>(
      std::count_if(tokens.begin(), tokens.end(), [](const Token& t) { return !is_punctuation(t); }));
}

std::vector<std::size_t> sentence_starts_of(std::span<const Token> tokens) {
  std::vector<std::size_t> starts;
  if (tokens.empty()) return starts;
  starts.push_back(0);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    if (is_sentence_terminator(tokens[i])) starts.push_back(i + 1);
  }
  return starts;
}

Tokenized tokenize(std::string_view text) {
  Tokenized out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) split_chunk(text.substr(i, j - i), out.tokens);
    i = j;
  }
  out.sentence_starts = sentence_starts_of(out.tokens);
  return out;
}

Document make_document(std::string doc_id, std::string_view text) {
  auto tok = tokenize(text);
  return Document{std::move(doc_id), std::move(tok.tokens), std::move(tok.sentence_starts)};
}

std::vector<Document> parse_jsonl_corpus(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("doc_id") || !j.contains("text") || !j["doc_id"].is_string() ||
        !j["text"].is_string()) {
      throw Error("line " + std::to_string(line_no) + ": expected an object with string fields doc_id and text");
    }
    docs.push_back(make_document(j["doc_id"].get<std::string>(), j["text"].get<std::string>()));
  }
  if (docs.empty()) throw Error("empty corpus");
  return docs;
}

void write_jsonl_corpus(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) {
    std::string text;
    for (std::size_t i = 0; i < d.tokens.size(); ++i) {
      if (i) text += ' ';
      text += d.tokens[i];
    }
    out << json{{"doc_id", d.doc_id}, {"text", text}}.dump() << '\n';
  }
}

std::vector<Document> load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  namespace fs = std::filesystem;
  if (!fs::exists(path)) throw Error("corpus path does not exist: " + path.string());
  if (format == CorpusFormat::jsonl) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open corpus: " + path.string());
    return parse_jsonl_corpus(in);
  }
  if (!fs::is_directory(path)) throw Error("plain_dir corpus must be a directory: " + path.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<Document> docs;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    docs.push_back(make_document(f.stem().string(), ss.str()));
  }
  if (docs.empty()) throw Error("empty corpus");
  return docs;
}

BoundaryIndex::BoundaryIndex(const Document& doc) {
  bounds_ = doc.sentence_starts;
  bounds_.push_back(doc.tokens.size());
  cum_.assign(bounds_.size(), 0);
  for (std::size_t i = 1; i < bounds_.size(); ++i) {
    std::size_t words = 0;
    for (std::size_t t = bounds_[i - 1]; t < bounds_[i]; ++t) words += is_punctuation(doc.tokens[t]) ? 0 : 1;
    cum_[i] = cum_[i - 1] + words;
  }
}

std::optional<std::size_t> BoundaryIndex::find(std::size_t token_pos) const noexcept {
  auto it = std::lower_bound(bounds_.begin(), bounds_.end(), token_pos);
  if (it == bounds_.end() || *it != token_pos) return std::nullopt;
  return static_cast<std::size_t>(it - bounds_.begin());
}

void CorpusConfig::validate() const {
  if (prefix_len_words < 1) throw Error("prefix_len_words must be >= 1");
  if (cont_min_words < 1 || cont_min_words > cont_max_words) {
    throw Error("continuation bounds must satisfy 0 < cont_min <= cont_max");
  }
}

std::vector<PairSpans> extract_pairs(const Document& doc, const CorpusConfig& cfg) {
  cfg.validate();
  std::vector<PairSpans> pairs;
  if (doc.tokens.empty()) return pairs;
  const BoundaryIndex idx(doc);
  const std::size_t last = idx.size() - 1;  // the document-end boundary
  const std::uint64_t key = combine_seed(cfg.seed, fnv1a64(doc.doc_id));

  for (std::size_t i = 0; i < last; ++i) {
    // Furthest sentence start (not the document end) within the word budget.
    std::size_t e = i;
    for (std::size_t j = i + 1; j < last && idx.words(i, j) <= cfg.prefix_len_words; ++j) e = j;
    if (e == i) continue;
    const std::size_t prefix_words = idx.words(i, e);
    if (prefix_words < cfg.min_prefix_words() || prefix_words == 0) continue;

    std::vector<std::size_t> ends;
    std::size_t prev_len = 0;
    for (std::size_t k = e + 1; k <= last; ++k) {
      const std::size_t len = idx.words(e, k);
      if (len > cfg.cont_max_words) break;
      if (len >= cfg.cont_min_words && len != prev_len) {
        ends.push_back(k);
        prev_len = len;
      }
    }
    if (ends.empty()) continue;
    const CounterRng rng(key, idx.position(i));
    const std::size_t pick = ends[rng.below(0, ends.size())];
    pairs.push_back({{idx.position(i), idx.position(e)}, {idx.position(e), idx.position(pick)}});
  }
  return pairs;
}

InsufficientCandidates::InsufficientCandidates(std::size_t requested, std::size_t available)
    : Error("insufficient InBook candidates: requested " + std::to_string(requested) + ", available " +
            std::to_string(available)),
      available_(available) {}

std::vector<Span> inbook_candidates(const Document& doc, Span gold) {
  std::vector<Span> out;
  if (doc.tokens.empty() || gold.end > doc.tokens.size() || gold.begin > gold.end) return out;
  const std::size_t target =
      word_count(std::span<const Token>(doc.tokens).subspan(gold.begin, gold.size()));
  const BoundaryIndex idx(doc);
  const std::size_t last = idx.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    for (std::size_t k = i + 1; k <= last; ++k) {
      const std::size_t len = idx.words(i, k);
      if (len > target) break;
      if (len != target) continue;
      const Span s{idx.position(i), idx.position(k)};
      if (s != gold) out.push_back(s);
    }
  }
  return out;
}

std::vector<Span> sample_inbook_negatives(const Document& doc, Span gold, std::size_t count,
                                          std::uint64_t seed) {
  auto cands = inbook_candidates(doc, gold);
  if (cands.size() < count) throw InsufficientCandidates(count, cands.size());
  const CounterRng rng(combine_seed(seed, fnv1a64(doc.doc_id)),
                       (static_cast<std::uint64_t>(gold.begin) << 32) + gold.end);
  const std::size_t m = cands.size();
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(i, m - i);
    std::swap(cands[i], cands[j]);
  }
  cands.resize(count);
  return cands;
}

Tokens slice(const Document& doc, Span span) {
  if (span.begin > span.end || span.end > doc.tokens.size()) throw Error("span out of document range");
  return Tokens(doc.tokens.begin() + static_cast<std::ptrdiff_t>(span.begin),
                doc.tokens.begin() + static_cast<std::ptrdiff_t>(span.end));
}

TrainingTriple make_triple(const Document& doc, const PairSpans& pair) {
  return TrainingTriple{doc.doc_id, slice(doc, pair.prefix), slice(doc, pair.continuation), std::nullopt};
}

std::vector<TrainingTriple> build_triples(std::span<const Document> docs, const CorpusConfig& cfg,
                                          std::size_t jobs) {
  std::vector<std::vector<TrainingTriple>> per_doc(docs.size());
  parallel_for(docs.size(), jobs, [&](std::size_t d) {
    for (const auto& p : extract_pairs(docs[d], cfg)) per_doc[d].push_back(make_triple(docs[d], p));
  });
  std::vector<TrainingTriple> out;
  for (auto& v : per_doc) std::move(v.begin(), v.end(), std::back_inserter(out));
  return out;
}

std::pair<std::vector<TrainingTriple>, std::vector<TrainingTriple>> split_for_generator(
    std::vector<TrainingTriple> triples, std::uint64_t seed) {
  const std::size_t n = triples.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const CounterRng rng(seed, 0x5E1F);
  for (std::size_t i = 0; i + 1 < n; ++i) std::swap(order[i], order[i + rng.below(i, n - i)]);
  std::vector<bool> to_generator(n, false);
  for (std::size_t i = 0; i < n / 2; ++i) to_generator[order[i]] = true;
  std::pair<std::vector<TrainingTriple>, std::vector<TrainingTriple>> out;
  for (std::size_t i = 0; i < n; ++i) {
    (to_generator[i] ? out.first : out.second).push_back(std::move(triples[i]));
  }
  return out;
}

GenerationFailure::GenerationFailure(std::size_t index, const std::string& what)
    : Error("generation failed for triple " + std::to_string(index) + ": " + what), index_(index) {}

bool contains_span(std::span<const Token> haystack, std::span<const Token> needle) {
  if (needle.empty()) return true;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

std::vector<TrainingTriple> build_generative_negatives(std::vector<TrainingTriple> triples,
                                                       const Generator& generator,
                                                       const GenerativeNegativeOptions& options,
                                                       std::span<const Document> sources) {
  if (options.min_words < 1 || options.min_words > options.max_words) {
    throw Error("generation word bounds must satisfy 0 < min <= max");
  }
  options.strategy.validate();
  const std::size_t span_words = options.max_words - options.min_words + 1;

  for (std::size_t i = 0; i < triples.size(); ++i) {
    auto& triple = triples[i];
    const std::size_t target = options.min_words + CounterRng(options.seed, i).below(0, span_words);
    const Document* source = nullptr;
    for (const auto& d : sources) {
      if (d.doc_id == triple.doc_id) {
        source = &d;
        break;
      }
    }

    bool done = false;
    for (std::size_t attempt = 0; attempt < std::max<std::size_t>(1, options.max_attempts) && !done; ++attempt) {
      GenerationRequest req;
      req.context = triple.prefix;
      req.num_new_tokens = 2 * target + 16;
      req.num_samples = 1;
      req.strategy = options.strategy;
      req.seed = combine_seed(options.seed, i);
      req.stream_base = attempt;
      std::vector<GeneratedSample> samples;
      try {
        samples = generator.generate(req);
      } catch (const std::exception& e) {
        throw GenerationFailure(i, e.what());
      }
      if (samples.empty()) throw GenerationFailure(i, "generator returned no samples");

      Tokens gen;
      std::size_t words = 0;
      for (auto& t : samples.front().tokens) {
        if (words == target) break;
        if (!is_punctuation(t)) ++words;
        gen.push_back(std::move(t));
      }
      if (source != nullptr && contains_span(source->tokens, gen)) continue;
      triple.generation = std::move(gen);
      done = true;
    }
    if (!done) throw GenerationFailure(i, "every attempt reproduced a span of the source document");
  }
  return triples;
}

void write_dataset(std::ostream& out, std::span<const TrainingTriple> triples) {
  for (const auto& t : triples) {
    json j;
    j["doc_id"] = t.doc_id;
    j["prefix"] = t.prefix;
    j["continuation"] = t.continuation;
    j["generation"] = t.generation ? json(*t.generation) : json(nullptr);
    out << j.dump() << '\n';
  }
}

std::vector<TrainingTriple> read_dataset(std::istream& in) {
  std::vector<TrainingTriple> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TrainingTriple t;
      t.doc_id = j.at("doc_id").get<std::string>();
      t.prefix = tokens_from_json(j.at("prefix"), "prefix");
      t.continuation = tokens_from_json(j.at("continuation"), "continuation");
      if (j.contains("generation") && !j["generation"].is_null()) {
        t.generation = tokens_from_json(j["generation"], "generation");
      }
      out.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw Error("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace prefixrank::corpus
