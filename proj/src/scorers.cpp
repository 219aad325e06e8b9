#include "prefixrank/scorers.hpp"

#include <cmath>
#include <unordered_set>

#include "prefixrank/bridge_client.hpp"
#include "prefixrank/ngram_lm.hpp"

namespace prefixrank::scoring {

std::vector<double> Scorer::score_all(std::span<const Token> prefix, std::span<const Tokens> candidates) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(score(prefix, c));
  return out;
}

double score_rankgen(const encoder::EncoderParams& params, std::span<const Token> prefix,
                     std::span<const Token> candidate) {
  return encoder::score(encoder::encode(params, prefix, encoder::Role::prefix),
                        encoder::encode(params, candidate, encoder::Role::suffix));
}

double score_unigram_overlap(std::span<const Token> prefix, std::span<const Token> candidate) {
  if (candidate.empty()) throw Error("unigram overlap needs a non-empty candidate");
  const std::unordered_set<std::string_view> in_prefix(prefix.begin(), prefix.end());
  std::unordered_set<std::string_view> types;
  std::size_t shared = 0;
  for (const auto& t : candidate) {
    if (types.insert(t).second && in_prefix.count(t)) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(types.size());
}

LikelihoodKind parse_likelihood_kind(std::string_view text) {
  if (text == "cll") return LikelihoodKind::cll;
  if (text == "avg_cll") return LikelihoodKind::avg_cll;
  if (text == "avg_ull") return LikelihoodKind::avg_ull;
  if (text == "pmi") return LikelihoodKind::pmi;
  throw Error("unknown likelihood scorer '" + std::string(text) + "'");
}

std::string to_string(LikelihoodKind kind) {
  switch (kind) {
    case LikelihoodKind::cll: return "cll";
    case LikelihoodKind::avg_cll: return "avg_cll";
    case LikelihoodKind::avg_ull: return "avg_ull";
    case LikelihoodKind::pmi: return "pmi";
  }
  return "?";
}

double score_likelihood(LikelihoodKind kind, const LikelihoodModel& lm, std::span<const Token> prefix,
                        std::span<const Token> candidate) {
  if (candidate.empty()) throw Error("likelihood scorers need a non-empty candidate");
  switch (kind) {
    case LikelihoodKind::cll: return lm.sequence_logprob(prefix, candidate);
    case LikelihoodKind::avg_cll:
      return lm.sequence_logprob(prefix, candidate) / static_cast<double>(candidate.size());
    case LikelihoodKind::avg_ull: {
      Tokens joined(prefix.begin(), prefix.end());
      joined.insert(joined.end(), candidate.begin(), candidate.end());
      return lm.sequence_logprob({}, joined) / static_cast<double>(joined.size());
    }
    case LikelihoodKind::pmi: return lm.sequence_logprob(prefix, candidate) - lm.sequence_logprob({}, candidate);
  }
  throw Error("unknown likelihood scorer");
}

RankGenScorer::RankGenScorer(std::shared_ptr<const encoder::EncoderParams> params) : params_(std::move(params)) {
  if (!params_) throw Error("rankgen scorer needs encoder parameters");
  params_->validate();
}

double RankGenScorer::score(std::span<const Token> prefix, std::span<const Token> candidate) const {
  return score_rankgen(*params_, prefix, candidate);
}

std::vector<double> RankGenScorer::score_all(std::span<const Token> prefix, std::span<const Tokens> candidates) const {
  const auto p = encoder::encode(*params_, prefix, encoder::Role::prefix);
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& c : candidates) out.push_back(encoder::score(p, encoder::encode(*params_, c, encoder::Role::suffix)));
  return out;
}

LikelihoodScorer::LikelihoodScorer(LikelihoodKind kind, std::shared_ptr<const LikelihoodModel> lm)
    : kind_(kind), lm_(std::move(lm)) {
  if (!lm_) throw Error("likelihood scorer needs a model");
}

std::unique_ptr<Scorer> make_scorer(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view name = spec.substr(0, colon);
  const std::string_view arg = colon == std::string_view::npos ? std::string_view{} : spec.substr(colon + 1);
  if (name == "overlap" || name == "unigram_overlap") {
    if (!arg.empty()) throw Error("scorer '" + std::string(name) + "' takes no argument");
    return std::make_unique<UnigramOverlapScorer>();
  }
  if (arg.empty()) throw Error("scorer '" + std::string(spec) + "' needs a path, e.g. " + std::string(name) + ":model.ckpt");
  if (name == "rankgen") {
    auto params = std::make_shared<const encoder::EncoderParams>(encoder::load_checkpoint(std::filesystem::path(arg)));
    return std::make_unique<RankGenScorer>(std::move(params));
  }
  const auto kind = parse_likelihood_kind(name);
  if (arg.substr(0, 7) == "bridge:") {
    auto lm = std::make_shared<const bridge::BridgeGenerator>(bridge::Endpoint::from_url(std::string(arg.substr(7))));
    return std::make_unique<LikelihoodScorer>(kind, std::move(lm));
  }
  auto lm = std::make_shared<const lm::NGramModel>(lm::NGramModel::load(std::filesystem::path(arg)));
  return std::make_unique<LikelihoodScorer>(kind, std::move(lm));
}

}  // namespace prefixrank::scoring
