#include "prefixrank/cli.hpp"

#include <CLI11.hpp>
#include <Eigen/Core>
#include <httplib.h>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "prefixrank/binary_io.hpp"
#include "prefixrank/bridge_client.hpp"
#include "prefixrank/corpus.hpp"
#include "prefixrank/decode.hpp"
#include "prefixrank/encoder.hpp"
#include "prefixrank/eval.hpp"
#include "prefixrank/mauve.hpp"
#include "prefixrank/ngram_lm.hpp"
#include "prefixrank/parallel.hpp"
#include "prefixrank/rng.hpp"
#include "prefixrank/scorers.hpp"
#include "prefixrank/synthetic.hpp"
#include "prefixrank/trainer.hpp"

#ifndef PREFIXRANK_VERSION
#define PREFIXRANK_VERSION "0.0.0"
#endif

namespace prefixrank::cli {
namespace {

using nlohmann::json;

/// Bad flag values found after parsing; reported like parse errors.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct Globals {
  std::uint64_t seed = 0;
  std::size_t jobs = default_jobs();
  std::string format = "table";
};

struct Context {
  Globals globals;
  CLI::App* sub = nullptr;
  std::ostream* out = nullptr;
  json outputs = json::object();
  json extra = json::object();
};

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void record_output(Context& ctx, const std::string& name, const std::filesystem::path& path) {
  ctx.outputs[name] = {{"path", path.string()}, {"fnv1a64", hex64(fnv1a64(read_file(path)))}};
}

json option_echo(const CLI::App& app) {
  json j = json::object();
  for (const CLI::Option* o : app.get_options()) {
    const std::string name = o->get_name();
    if (name == "--help" || name == "-h" || name.empty()) continue;
    if (o->count() > 0) {
      const auto& r = o->results();
      j[name] = r.size() == 1 ? json(r.front()) : json(r);
    } else {
      j[name] = o->get_default_str();
    }
  }
  return j;
}

void write_manifest(const Context& ctx, const std::filesystem::path& main_output) {
  json m;
  m["tool"] = "prefixrank";
  m["version"] = version();
  m["subcommand"] = ctx.sub->get_name();
  m["seed"] = ctx.globals.seed;
  m["jobs"] = ctx.globals.jobs;
  m["config"] = option_echo(*ctx.sub);
  m["outputs"] = ctx.outputs;
  if (!ctx.extra.empty()) m["extra"] = ctx.extra;
  m["versions"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                 std::to_string(EIGEN_MINOR_VERSION)},
                   {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                         std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                   {"cli11", CLI11_VERSION},
                   {"cpp_httplib", CPPHTTPLIB_VERSION}};
  auto path = main_output;
  path += ".manifest.json";
  auto out = open_out(path);
  out << m.dump(2) << '\n';
}

void print_reports(const Context& ctx, std::span<const eval::EvalReport> reports) {
  if (ctx.globals.format == "json") {
    json arr = json::array();
    for (const auto& r : reports) {
      auto j = r.to_json();
      j.erase("per_instance");
      arr.push_back(std::move(j));
    }
    *ctx.out << arr.dump(2) << '\n';
  } else {
    *ctx.out << eval::format_table(reports);
  }
}

void write_reports(Context& ctx, const std::filesystem::path& path, std::span<const eval::EvalReport> reports) {
  json arr = json::array();
  for (const auto& r : reports) {
    r.validate();
    arr.push_back(r.to_json());
  }
  {
    auto out = open_out(path);
    out << json{{"reports", arr}}.dump(2) << '\n';
  }
  record_output(ctx, "report", path);
  print_reports(ctx, reports);
}

SamplingStrategy parse_strategy(const std::string& text) {
  try {
    auto s = SamplingStrategy::parse(text);
    s.validate();
    return s;
  } catch (const Error& e) {
    throw UsageError(std::string("--strategy: ") + e.what());
  }
}

std::vector<corpus::Document> load_docs(const std::string& path, const std::string& format) {
  const auto fmt = format == "dir" ? corpus::CorpusFormat::plain_dir : corpus::CorpusFormat::jsonl;
  return corpus::load_corpus(path, fmt);
}

std::vector<corpus::TrainingTriple> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read dataset " + path);
  return corpus::read_dataset(in);
}

std::shared_ptr<const Generator> load_generator(const std::string& spec) {
  if (spec.rfind("bridge:", 0) == 0) {
    return std::make_shared<const bridge::BridgeGenerator>(bridge::Endpoint::from_url(spec.substr(7)));
  }
  return std::make_shared<const lm::NGramModel>(lm::NGramModel::load(std::filesystem::path(spec)));
}

std::unique_ptr<scoring::Scorer> load_scorer(const std::string& spec) {
  try {
    return scoring::make_scorer(spec);
  } catch (const CheckpointError&) {
    throw;
  } catch (const bridge::BridgeError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(std::string("--scorer: ") + e.what());
  }
}

/// One prefix per non-empty line: plain text, or a JSON object whose
/// "prefix" is a token array or a string.
std::vector<Tokens> read_prefixes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read prefix file " + path);
  std::vector<Tokens> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (line.front() == '{') {
      try {
        const auto j = json::parse(line);
        const auto& p = j.at("prefix");
        out.push_back(p.is_string() ? corpus::tokenize(p.get<std::string>()).tokens : p.get<Tokens>());
      } catch (const std::exception& e) {
        throw Error(path + " line " + std::to_string(lineno) + ": " + e.what());
      }
    } else {
      out.push_back(corpus::tokenize(line).tokens);
    }
    if (out.back().empty()) throw Error(path + " line " + std::to_string(lineno) + ": empty prefix");
  }
  if (out.empty()) throw Error("prefix file " + path + " has no prefixes");
  return out;
}

void add_corpus_config(CLI::App* sub, corpus::CorpusConfig& cfg) {
  sub->add_option("--prefix-len", cfg.prefix_len_words, "Prefix length in words")->capture_default_str();
  sub->add_option("--cont-min", cfg.cont_min_words, "Shortest continuation in words")->capture_default_str();
  sub->add_option("--cont-max", cfg.cont_max_words, "Longest continuation in words")->capture_default_str();
}

void finish_corpus_config(corpus::CorpusConfig& cfg, const Globals& g) {
  cfg.seed = g.seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

// ---------------------------------------------------------------------------

struct MakeSyntheticOpts {
  std::string out;
  corpus::SyntheticCorpusConfig cfg;
};

void cmd_make_synthetic(MakeSyntheticOpts& o, Context& ctx) {
  const auto corpus = corpus::make_synthetic_corpus(o.cfg);
  {
    auto out = open_out(o.out);
    corpus::write_jsonl_corpus(out, corpus.documents);
  }
  record_output(ctx, "corpus", o.out);
  write_manifest(ctx, o.out);
  *ctx.out << "wrote " << corpus.documents.size() << " documents to " << o.out << '\n';
}

struct BuildDatasetOpts {
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string out;
  std::string lm_out;
  std::string generations = "ngram";
  std::string strategy = "nucleus:0.9";
  std::size_t gen_min = 10;
  std::size_t gen_max = 128;
  corpus::CorpusConfig cfg;
  lm::NGramOptions lm;
};

void cmd_build_dataset(BuildDatasetOpts& o, Context& ctx) {
  finish_corpus_config(o.cfg, ctx.globals);
  const auto strategy = parse_strategy(o.strategy);
  const auto docs = load_docs(o.corpus, o.corpus_format);
  auto triples = corpus::build_triples(docs, o.cfg, ctx.globals.jobs);
  if (triples.empty()) throw Error("no (prefix, continuation) pairs could be extracted; try a shorter --prefix-len");

  std::vector<corpus::TrainingTriple> dataset;
  if (o.generations == "none") {
    dataset = std::move(triples);
  } else {
    auto [gen_half, rest] = corpus::split_for_generator(std::move(triples), ctx.globals.seed);
    std::vector<Tokens> lm_text;
    lm_text.reserve(gen_half.size());
    for (const auto& t : gen_half) {
      Tokens s = t.prefix;
      s.insert(s.end(), t.continuation.begin(), t.continuation.end());
      lm_text.push_back(std::move(s));
    }
    const auto model = lm::NGramModel::train(std::span<const Tokens>(lm_text), o.lm);
    if (!o.lm_out.empty()) {
      model.save(std::filesystem::path(o.lm_out));
      record_output(ctx, "lm", o.lm_out);
    }
    corpus::GenerativeNegativeOptions gen;
    gen.min_words = o.gen_min;
    gen.max_words = o.gen_max;
    gen.strategy = strategy;
    gen.seed = ctx.globals.seed;
    rest = corpus::build_generative_negatives(std::move(rest), model, gen, docs);
    dataset = std::move(gen_half);
    dataset.insert(dataset.end(), std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.end()));
  }
  std::size_t with_gen = 0;
  for (const auto& t : dataset) with_gen += t.generation ? 1 : 0;
  {
    auto out = open_out(o.out);
    corpus::write_dataset(out, dataset);
  }
  record_output(ctx, "dataset", o.out);
  ctx.extra = {{"triples", dataset.size()}, {"with_generation", with_gen}};
  write_manifest(ctx, o.out);
  *ctx.out << "wrote " << dataset.size() << " triples (" << with_gen << " with generations) to " << o.out << '\n';
}

struct TrainLmOpts {
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string dataset;
  std::string out;
  lm::NGramOptions lm;
};

void cmd_train_lm(TrainLmOpts& o, Context& ctx) {
  if (o.corpus.empty() == o.dataset.empty()) throw UsageError("give exactly one of --corpus or --dataset");
  try {
    o.lm.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::optional<lm::NGramModel> model;
  if (!o.corpus.empty()) {
    const auto docs = load_docs(o.corpus, o.corpus_format);
    model = lm::NGramModel::train(std::span<const corpus::Document>(docs), o.lm);
  } else {
    std::vector<Tokens> text;
    for (const auto& t : load_dataset(o.dataset)) {
      Tokens s = t.prefix;
      s.insert(s.end(), t.continuation.begin(), t.continuation.end());
      text.push_back(std::move(s));
    }
    model = lm::NGramModel::train(std::span<const Tokens>(text), o.lm);
  }
  model->save(std::filesystem::path(o.out));
  record_output(ctx, "lm", o.out);
  write_manifest(ctx, o.out);
  *ctx.out << model->describe() << " -> " << o.out << '\n';
}

struct TrainEncoderOpts {
  std::string dataset;
  std::string out;
  std::string loss_curve;
  std::string init;
  std::size_t d_emb = 64;
  std::size_t d_out = 64;
  std::string optimizer = "adam";
  std::string negatives = "both";
  bool exclusive_own_generation = false;
  trainer::TrainConfig cfg;
};

void cmd_train_encoder(TrainEncoderOpts& o, Context& ctx) {
  o.cfg.seed = ctx.globals.seed;
  o.cfg.jobs = ctx.globals.jobs;
  o.cfg.optimizer = o.optimizer == "sgd" ? trainer::OptimizerKind::sgd : trainer::OptimizerKind::adam;
  o.cfg.own_generation_in_denominator = !o.exclusive_own_generation;
  try {
    o.cfg.negative_mode = trainer::parse_negative_mode(o.negatives);
    o.cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto dataset = load_dataset(o.dataset);
  auto params = o.init.empty() ? encoder::EncoderParams::random(trainer::dataset_tokens(dataset), o.d_emb, o.d_out,
                                                                 ctx.globals.seed)
                               : encoder::load_checkpoint(std::filesystem::path(o.init));
  const std::size_t report_every = std::max<std::size_t>(1, o.cfg.steps / 10);
  auto result = trainer::train(std::move(params), dataset, o.cfg, [&](std::size_t step, double loss) {
    if (ctx.globals.format == "table" && (step % report_every == 0 || step + 1 == o.cfg.steps)) {
      *ctx.out << "step " << step << " loss " << loss << '\n';
    }
  });
  encoder::save_checkpoint(result.params, std::filesystem::path(o.out));
  record_output(ctx, "encoder", o.out);
  if (!o.loss_curve.empty()) {
    {
      auto out = open_out(o.loss_curve);
      trainer::write_loss_curve_csv(out, result.loss_curve);
    }
    record_output(ctx, "loss_curve", o.loss_curve);
  }
  if (!result.loss_curve.empty()) {
    ctx.extra = {{"initial_loss", result.loss_curve.front()}, {"final_loss", result.loss_curve.back()}};
  }
  write_manifest(ctx, o.out);
  if (ctx.globals.format == "json") *ctx.out << ctx.extra.dump(2) << '\n';
}

struct DecodeOpts {
  std::string prefix_file;
  std::string generator;
  std::string scorer;
  std::string out;
  std::string strategy = "nucleus:0.9";
  bool rerank_full = false;
  decode::DecodeConfig cfg;
};

void cmd_decode(DecodeOpts& o, Context& ctx) {
  o.cfg.strategy = parse_strategy(o.strategy);
  o.cfg.seed = ctx.globals.seed;
  o.cfg.jobs = ctx.globals.jobs;
  if (o.rerank_full) {
    o.cfg.rerank_length = o.cfg.max_length;
    o.cfg.beam_size = 1;
  }
  try {
    o.cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto prefixes = read_prefixes(o.prefix_file);
  const auto scorer = load_scorer(o.scorer);
  const auto generator = load_generator(o.generator);
  {
    auto out = open_out(o.out);
    for (const auto& prefix : prefixes) {
      const auto beams = o.rerank_full ? decode::rerank_full(prefix, *generator, *scorer, o.cfg.samples_per_beam,
                                                             o.cfg.max_length, o.cfg.strategy, o.cfg.seed)
                                       : decode::rankgen_search(prefix, *generator, *scorer, o.cfg);
      json conts = json::array();
      for (std::size_t r = 0; r < beams.size(); ++r) {
        conts.push_back({{"tokens", beams[r].tokens},
                         {"score", std::isfinite(beams[r].score) ? json(beams[r].score) : json(nullptr)},
                         {"rank", r + 1},
                         {"finished", beams[r].finished}});
      }
      out << json{{"prefix", prefix}, {"continuations", conts}}.dump() << '\n';
    }
  }
  record_output(ctx, "decode", o.out);
  ctx.extra = {{"generator", generator->describe()},
               {"generator_deterministic", generator->deterministic()},
               {"scorer", scorer->describe()},
               {"prefixes", prefixes.size()}};
  write_manifest(ctx, o.out);
  *ctx.out << "decoded " << prefixes.size() << " prefixes to " << o.out << '\n';
}

struct SuffixIdOpts {
  std::string instances;
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string dataset;
  std::string scorer;
  std::string out = "suffix_id.json";
  std::string write_instances;
  std::size_t distractors = 1;
  corpus::CorpusConfig cfg;
};

void cmd_eval_suffix_id(SuffixIdOpts& o, Context& ctx) {
  const int sources = !o.instances.empty() + !o.corpus.empty() + !o.dataset.empty();
  if (sources != 1) throw UsageError("give exactly one of --instances, --corpus or --dataset");
  finish_corpus_config(o.cfg, ctx.globals);
  std::vector<eval::SuffixIdInstance> instances;
  if (!o.instances.empty()) {
    std::ifstream in(o.instances);
    if (!in) throw Error("cannot read " + o.instances);
    instances = eval::read_suffix_id_instances(in);
  } else if (!o.corpus.empty()) {
    instances = eval::make_inbook_instances(load_docs(o.corpus, o.corpus_format), o.cfg, o.distractors,
                                            ctx.globals.seed);
  } else {
    instances = eval::make_generative_instances(load_dataset(o.dataset));
  }
  if (instances.empty()) throw Error("no suffix identification instances");
  if (!o.write_instances.empty()) {
    auto out = open_out(o.write_instances);
    eval::write_suffix_id_instances(out, instances);
  }
  const auto scorer = load_scorer(o.scorer);
  const auto report = eval::suffix_id_accuracy(instances, *scorer, ctx.globals.jobs);
  write_reports(ctx, o.out, std::span(&report, 1));
  if (!o.write_instances.empty()) record_output(ctx, "instances", o.write_instances);
  write_manifest(ctx, o.out);
}

struct MineHardOpts {
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string scorer;
  std::string out = "hard_negatives.jsonl";
  std::size_t window = 128;
  std::size_t count = 10;
  std::size_t limit = 0;
  corpus::CorpusConfig cfg;
};

void cmd_mine_hard(MineHardOpts& o, Context& ctx) {
  finish_corpus_config(o.cfg, ctx.globals);
  const auto docs = load_docs(o.corpus, o.corpus_format);
  const auto scorer = load_scorer(o.scorer);
  std::size_t written = 0;
  {
    auto out = open_out(o.out);
    for (const auto& doc : docs) {
      for (const auto& pair : corpus::extract_pairs(doc, o.cfg)) {
        if (o.limit != 0 && written >= o.limit) break;
        const auto prefix = corpus::slice(doc, pair.prefix);
        const auto negs = eval::mine_hard_negatives(doc, prefix, pair.continuation, *scorer, o.window, o.count);
        json arr = json::array();
        for (const auto& n : negs) {
          arr.push_back({{"begin", n.span.begin}, {"end", n.span.end}, {"score", n.score},
                         {"tokens", corpus::slice(doc, n.span)}});
        }
        out << json{{"doc_id", doc.doc_id},
                    {"prefix", {pair.prefix.begin, pair.prefix.end}},
                    {"gold", {pair.continuation.begin, pair.continuation.end}},
                    {"negatives", arr}}
                   .dump()
            << '\n';
        ++written;
      }
    }
  }
  record_output(ctx, "hard_negatives", o.out);
  ctx.extra = {{"instances", written}};
  write_manifest(ctx, o.out);
  *ctx.out << "mined hard negatives for " << written << " prefixes to " << o.out << '\n';
}

struct RetrievalOpts {
  std::string corpus;
  std::string corpus_format = "jsonl";
  std::string scorer;
  std::string out = "retrieval.json";
  std::vector<std::size_t> ks = eval::kDefaultRecallKs;
  corpus::CorpusConfig cfg;
};

void cmd_eval_retrieval(RetrievalOpts& o, Context& ctx) {
  finish_corpus_config(o.cfg, ctx.globals);
  const auto instances = eval::make_retrieval_instances(load_docs(o.corpus, o.corpus_format), o.cfg);
  if (instances.empty()) throw Error("no document yields at least two pairs");
  const auto scorer = load_scorer(o.scorer);
  const auto reports = eval::retrieval_recall(instances, *scorer, o.ks, ctx.globals.jobs);
  write_reports(ctx, o.out, reports);
  write_manifest(ctx, o.out);
}

struct EvalGenOpts {
  std::string generations;
  std::string references;
  std::string encoder;
  std::string out = "eval_gen.json";
  std::size_t truncate_words = 0;
  std::size_t rep_window = 20;
  eval::MauveOptions mauve;
};

void cmd_eval_gen(EvalGenOpts& o, Context& ctx) {
  std::vector<std::pair<Tokens, Tokens>> pairs;
  std::vector<Tokens> model_texts;
  {
    std::ifstream in(o.generations);
    if (!in) throw Error("cannot read " + o.generations);
    std::string line;
    while (std::getline(in, line)) {
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      const auto j = json::parse(line);
      const auto& conts = j.at("continuations");
      if (conts.empty()) continue;
      Tokens c = conts.at(0).at("tokens").get<Tokens>();
      if (o.truncate_words > 0) c = decode::truncate_to_sentence(c, o.truncate_words);
      if (c.empty()) continue;
      pairs.emplace_back(j.at("prefix").get<Tokens>(), c);
      model_texts.push_back(std::move(c));
    }
  }
  if (pairs.empty()) throw Error("no non-empty generations in " + o.generations);
  std::vector<eval::EvalReport> reports;
  reports.push_back(eval::rep_score(model_texts, o.rep_window));
  reports.push_back(eval::prefix_overlap(pairs));
  if (!o.references.empty() && !o.encoder.empty()) {
    std::vector<Tokens> human;
    for (auto& t : load_dataset(o.references)) {
      Tokens c = o.truncate_words > 0 ? decode::truncate_to_sentence(t.continuation, o.truncate_words) : t.continuation;
      if (!c.empty()) human.push_back(std::move(c));
    }
    const std::size_t n = std::min(human.size(), model_texts.size());
    if (n == 0) throw Error("no reference continuations in " + o.references);
    human.resize(n);
    model_texts.resize(n);
    const auto params = encoder::load_checkpoint(std::filesystem::path(o.encoder));
    o.mauve.seed = ctx.globals.seed;
    const auto m = eval::mauve_style(human, model_texts, params, o.mauve);
    eval::EvalReport r;
    r.metric = "mauve_style";
    r.value = m.score;
    r.n = n;
    r.config = {{"c", o.mauve.c}, {"clusters", m.p.size()}, {"lambda_points", o.mauve.lambda_points}};
    reports.push_back(std::move(r));
  }
  write_reports(ctx, o.out, reports);
  write_manifest(ctx, o.out);
}

struct GridOpts {
  std::string prefix_file;
  std::string generator;
  std::string scorer;
  std::string out = "grid.csv";
  std::string strategy = "nucleus:0.9";
  std::string metric = "score";
  std::size_t max_length = 128;
};

void cmd_grid_search(GridOpts& o, Context& ctx) {
  const auto strategy = parse_strategy(o.strategy);
  if (o.metric != "score" && o.metric != "rep") throw UsageError("--metric must be score or rep");
  const auto prefixes = read_prefixes(o.prefix_file);
  const auto scorer = load_scorer(o.scorer);
  const auto generator = load_generator(o.generator);
  eval::GridMetric metric;
  if (o.metric == "score") {
    metric = [&](std::span<const Tokens> ps, std::span<const Tokens> outs) {
      double s = 0.0;
      std::size_t n = 0;
      for (std::size_t i = 0; i < ps.size(); ++i) {
        if (outs[i].empty()) continue;
        s += scorer->score(ps[i], outs[i]);
        ++n;
      }
      return n ? s / static_cast<double>(n) : 0.0;
    };
  } else {
    metric = [](std::span<const Tokens>, std::span<const Tokens> outs) {
      std::vector<Tokens> kept;
      for (const auto& t : outs)
        if (!t.empty()) kept.push_back(t);
      return kept.empty() ? 0.0 : eval::rep_score(kept).value;
    };
  }
  const auto grid = eval::default_grid(o.max_length);
  const auto rows = eval::grid_search(prefixes, *generator, *scorer, grid, o.max_length, strategy, ctx.globals.seed,
                                      metric);
  {
    auto out = open_out(o.out);
    eval::write_grid_csv(out, rows);
  }
  ctx.outputs["grid"] = {{"path", o.out}};
  write_manifest(ctx, o.out);
  if (ctx.globals.format == "json") {
    json arr = json::array();
    for (const auto& r : rows) {
      arr.push_back({{"L", r.point.rerank_length}, {"B", r.point.beam_size}, {"N", r.point.samples_per_beam},
                     {"metric", r.metric}, {"seconds_per_generation", r.seconds_per_generation}});
    }
    *ctx.out << arr.dump(2) << '\n';
  } else {
    eval::write_grid_csv(*ctx.out, rows);
  }
}

struct BenchOpts {
  std::string prefix_file;
  std::string generator;
  std::string scorer;
  std::string out = "bench.json";
  std::string strategy = "nucleus:0.9";
  std::size_t repeats = 1;
  decode::DecodeConfig cfg;
};

void cmd_bench(BenchOpts& o, Context& ctx) {
  o.cfg.strategy = parse_strategy(o.strategy);
  o.cfg.seed = ctx.globals.seed;
  try {
    o.cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto prefixes = read_prefixes(o.prefix_file);
  const auto scorer = load_scorer(o.scorer);
  const auto generator = load_generator(o.generator);
  const auto r = eval::bench(prefixes, *generator, *scorer, o.cfg, o.repeats);
  const json j{{"generations", r.generations},
               {"seconds_per_generation", r.seconds_per_generation},
               {"tokens_per_second", r.tokens_per_second}};
  {
    auto out = open_out(o.out);
    out << j.dump(2) << '\n';
  }
  ctx.outputs["bench"] = {{"path", o.out}};
  write_manifest(ctx, o.out);
  if (ctx.globals.format == "json") {
    *ctx.out << j.dump(2) << '\n';
  } else {
    *ctx.out << "generations " << r.generations << "\nseconds/generation " << r.seconds_per_generation
             << "\ntokens/second " << r.tokens_per_second << '\n';
  }
}

void add_decode_shape(CLI::App* sub, decode::DecodeConfig& cfg) {
  sub->add_option("--L", cfg.rerank_length, "Rerank length (tokens per block)")->capture_default_str();
  sub->add_option("--B", cfg.beam_size, "Beam size")->capture_default_str();
  sub->add_option("--N", cfg.samples_per_beam, "Samples per beam")->capture_default_str();
  sub->add_option("--max-length", cfg.max_length, "Total new tokens")->capture_default_str();
}

void add_lm_options(CLI::App* sub, lm::NGramOptions& lm) {
  sub->add_option("--order", lm.order, "N-gram order")->capture_default_str();
  sub->add_option("--weights", lm.weights, "Interpolation weights, lowest order first")
      ->delimiter(',')
      ->capture_default_str();
  sub->add_option("--alpha", lm.alpha, "Unigram add-alpha smoothing")->capture_default_str();
}

}  // namespace

std::string version() { return PREFIXRANK_VERSION; }

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reranker-guided text generation: datasets, n-gram LM, dual encoder, decoding and evaluation",
               "prefixrank"};
  app.set_version_flag("--version", version());
  app.set_config("--config", "", "Read options from a TOML/INI file (command-line flags take precedence)");
  app.require_subcommand(1);
  app.fallthrough();

  Context ctx;
  ctx.out = &out;
  app.add_option("--seed", ctx.globals.seed, "Global seed")->capture_default_str();
  app.add_option("--jobs", ctx.globals.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--format", ctx.globals.format, "Report format")
      ->check(CLI::IsMember({"json", "table"}))
      ->capture_default_str();

  const auto jsonl_or_dir = CLI::IsMember({"jsonl", "dir"});

  MakeSyntheticOpts syn;
  auto* s_syn = app.add_subcommand("make-synthetic", "Write the topic-structured synthetic corpus");
  s_syn->add_option("--out", syn.out, "Output JSONL")->required();
  s_syn->add_option("--docs", syn.cfg.num_docs, "Number of documents")->capture_default_str();
  s_syn->add_option("--corpus-seed", syn.cfg.seed, "Generator seed")->capture_default_str();
  s_syn->add_option("--segments", syn.cfg.segments_per_doc, "Topic segments per document")->capture_default_str();
  s_syn->add_option("--min-sentences", syn.cfg.min_sentences_per_segment, "Fewest sentences per segment")
      ->capture_default_str();
  s_syn->add_option("--max-sentences", syn.cfg.max_sentences_per_segment, "Most sentences per segment")
      ->capture_default_str();

  BuildDatasetOpts bd;
  auto* s_bd = app.add_subcommand("build-dataset", "Extract (prefix, continuation, generation) triples");
  s_bd->add_option("--corpus", bd.corpus, "Corpus path")->required()->check(CLI::ExistingPath);
  s_bd->add_option("--corpus-format", bd.corpus_format, "jsonl or dir")->check(jsonl_or_dir)->capture_default_str();
  s_bd->add_option("--out", bd.out, "Output dataset JSONL")->required();
  s_bd->add_option("--lm-out", bd.lm_out, "Also save the generator n-gram checkpoint here");
  s_bd->add_option("--generations", bd.generations, "ngram or none")
      ->check(CLI::IsMember({"ngram", "none"}))
      ->capture_default_str();
  s_bd->add_option("--strategy", bd.strategy, "Sampling strategy for generations")->capture_default_str();
  s_bd->add_option("--gen-min", bd.gen_min, "Shortest generation in words")->capture_default_str();
  s_bd->add_option("--gen-max", bd.gen_max, "Longest generation in words")->capture_default_str();
  add_corpus_config(s_bd, bd.cfg);
  add_lm_options(s_bd, bd.lm);

  TrainLmOpts tl;
  auto* s_tl = app.add_subcommand("train-lm", "Train the interpolated n-gram model");
  s_tl->add_option("--corpus", tl.corpus, "Corpus path")->check(CLI::ExistingPath);
  s_tl->add_option("--corpus-format", tl.corpus_format, "jsonl or dir")->check(jsonl_or_dir)->capture_default_str();
  s_tl->add_option("--dataset", tl.dataset, "Train on prefix+continuation of a dataset")->check(CLI::ExistingFile);
  s_tl->add_option("--out", tl.out, "Checkpoint path")->required();
  add_lm_options(s_tl, tl.lm);

  TrainEncoderOpts te;
  auto* s_te = app.add_subcommand("train-encoder", "Contrastive training of the dual encoder");
  s_te->add_option("--dataset", te.dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  s_te->add_option("--out", te.out, "Checkpoint path")->required();
  s_te->add_option("--init", te.init, "Start from this checkpoint")->check(CLI::ExistingFile);
  s_te->add_option("--loss-curve", te.loss_curve, "Write step,loss CSV");
  s_te->add_option("--d-emb", te.d_emb, "Embedding width")->capture_default_str();
  s_te->add_option("--d-out", te.d_out, "Output width")->capture_default_str();
  s_te->add_option("--batch-size", te.cfg.batch_size, "Items per same-document batch")->capture_default_str();
  s_te->add_option("--lr", te.cfg.learning_rate, "Constant learning rate")->capture_default_str();
  s_te->add_option("--steps", te.cfg.steps, "Optimizer steps")->capture_default_str();
  s_te->add_option("--optimizer", te.optimizer, "adam or sgd")
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();
  s_te->add_option("--negatives", te.negatives, "inbook_only, generative_only or both")->capture_default_str();
  s_te->add_flag("--exclusive-own-generation", te.exclusive_own_generation,
                 "Leave each item's own generation out of its denominator");

  DecodeOpts dc;
  auto* s_dc = app.add_subcommand("decode", "Beam search with reranking");
  s_dc->add_option("--prefix-file", dc.prefix_file, "One prefix per line")->required()->check(CLI::ExistingFile);
  s_dc->add_option("--generator", dc.generator, "n-gram checkpoint or bridge:URL")->required();
  s_dc->add_option("--scorer", dc.scorer, "Scorer spec, e.g. rankgen:enc.ckpt")->required();
  s_dc->add_option("--out", dc.out, "Output JSONL")->required();
  s_dc->add_option("--strategy", dc.strategy, "Sampling strategy")->capture_default_str();
  s_dc->add_flag("--rerank-full", dc.rerank_full, "Over-generate N full samples and rerank (L = max, B = 1)");
  add_decode_shape(s_dc, dc.cfg);

  SuffixIdOpts si;
  auto* s_si = app.add_subcommand("eval-suffix-id", "Gold vs distractor accuracy");
  s_si->add_option("--instances", si.instances, "Instance JSONL")->check(CLI::ExistingFile);
  s_si->add_option("--corpus", si.corpus, "Build InBook instances from a corpus")->check(CLI::ExistingPath);
  s_si->add_option("--corpus-format", si.corpus_format, "jsonl or dir")->check(jsonl_or_dir)->capture_default_str();
  s_si->add_option("--dataset", si.dataset, "Gold vs generation instances from a dataset")->check(CLI::ExistingFile);
  s_si->add_option("--distractors", si.distractors, "InBook distractors per instance")->capture_default_str();
  s_si->add_option("--write-instances", si.write_instances, "Save the instances used");
  s_si->add_option("--scorer", si.scorer, "Scorer spec")->required();
  s_si->add_option("--out", si.out, "Report JSON")->capture_default_str();
  add_corpus_config(s_si, si.cfg);

  MineHardOpts mh;
  auto* s_mh = app.add_subcommand("mine-hard", "Highest-scoring non-gold windows per prefix");
  s_mh->add_option("--corpus", mh.corpus, "Corpus path")->required()->check(CLI::ExistingPath);
  s_mh->add_option("--corpus-format", mh.corpus_format, "jsonl or dir")->check(jsonl_or_dir)->capture_default_str();
  s_mh->add_option("--scorer", mh.scorer, "Scorer spec")->required();
  s_mh->add_option("--out", mh.out, "Output JSONL")->capture_default_str();
  s_mh->add_option("--window", mh.window, "Window size in words")->capture_default_str();
  s_mh->add_option("--count", mh.count, "Negatives per prefix")->capture_default_str();
  s_mh->add_option("--limit", mh.limit, "Stop after this many prefixes (0 = all)")->capture_default_str();
  add_corpus_config(s_mh, mh.cfg);

  RetrievalOpts rt;
  auto* s_rt = app.add_subcommand("eval-retrieval", "Within-document recall@k");
  s_rt->add_option("--corpus", rt.corpus, "Corpus path")->required()->check(CLI::ExistingPath);
  s_rt->add_option("--corpus-format", rt.corpus_format, "jsonl or dir")->check(jsonl_or_dir)->capture_default_str();
  s_rt->add_option("--scorer", rt.scorer, "Scorer spec")->required();
  s_rt->add_option("--out", rt.out, "Report JSON")->capture_default_str();
  s_rt->add_option("--ks", rt.ks, "Cutoffs")->delimiter(',')->capture_default_str();
  add_corpus_config(s_rt, rt.cfg);

  EvalGenOpts eg;
  auto* s_eg = app.add_subcommand("eval-gen", "rep, prefix overlap and MAUVE-style score of decode output");
  s_eg->add_option("--generations", eg.generations, "decode output JSONL")->required()->check(CLI::ExistingFile);
  s_eg->add_option("--references", eg.references, "Dataset JSONL whose continuations are the human texts")
      ->check(CLI::ExistingFile);
  s_eg->add_option("--encoder", eg.encoder, "Encoder checkpoint used as the embedder")->check(CLI::ExistingFile);
  s_eg->add_option("--out", eg.out, "Report JSON")->capture_default_str();
  s_eg->add_option("--truncate-words", eg.truncate_words, "Cut texts to a sentence end within this many words")
      ->capture_default_str();
  s_eg->add_option("--rep-window", eg.rep_window, "rep look-back window")->capture_default_str();
  s_eg->add_option("--clusters", eg.mauve.n_clusters, "k-means clusters (0 = auto)")->capture_default_str();
  s_eg->add_option("--mauve-c", eg.mauve.c, "Divergence curve scaling")->capture_default_str();

  GridOpts gs;
  auto* s_gs = app.add_subcommand("grid-search", "Sweep (L, B, N) and time each configuration");
  s_gs->add_option("--prefix-file", gs.prefix_file, "One prefix per line")->required()->check(CLI::ExistingFile);
  s_gs->add_option("--generator", gs.generator, "n-gram checkpoint or bridge:URL")->required();
  s_gs->add_option("--scorer", gs.scorer, "Scorer spec")->required();
  s_gs->add_option("--out", gs.out, "CSV path")->capture_default_str();
  s_gs->add_option("--strategy", gs.strategy, "Sampling strategy")->capture_default_str();
  s_gs->add_option("--metric", gs.metric, "score or rep")->capture_default_str();
  s_gs->add_option("--max-length", gs.max_length, "Total new tokens")->capture_default_str();

  BenchOpts bn;
  auto* s_bn = app.add_subcommand("bench", "Time one decoding configuration");
  s_bn->add_option("--prefix-file", bn.prefix_file, "One prefix per line")->required()->check(CLI::ExistingFile);
  s_bn->add_option("--generator", bn.generator, "n-gram checkpoint or bridge:URL")->required();
  s_bn->add_option("--scorer", bn.scorer, "Scorer spec")->required();
  s_bn->add_option("--out", bn.out, "Result JSON")->capture_default_str();
  s_bn->add_option("--strategy", bn.strategy, "Sampling strategy")->capture_default_str();
  s_bn->add_option("--repeats", bn.repeats, "Passes over the prefixes")->capture_default_str();
  add_decode_shape(s_bn, bn.cfg);

  std::vector<const char*> argv;
  argv.push_back("prefixrank");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return kExitOk;
    }
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      ctx.sub = sub;
      if (sub == s_syn) cmd_make_synthetic(syn, ctx);
      else if (sub == s_bd) cmd_build_dataset(bd, ctx);
      else if (sub == s_tl) cmd_train_lm(tl, ctx);
      else if (sub == s_te) cmd_train_encoder(te, ctx);
      else if (sub == s_dc) cmd_decode(dc, ctx);
      else if (sub == s_si) cmd_eval_suffix_id(si, ctx);
      else if (sub == s_mh) cmd_mine_hard(mh, ctx);
      else if (sub == s_rt) cmd_eval_retrieval(rt, ctx);
      else if (sub == s_eg) cmd_eval_gen(eg, ctx);
      else if (sub == s_gs) cmd_grid_search(gs, ctx);
      else if (sub == s_bn) cmd_bench(bn, ctx);
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nRun with --help for more information.\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace prefixrank::cli
