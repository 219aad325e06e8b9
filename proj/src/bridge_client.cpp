#include "prefixrank/bridge_client.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "prefixrank/corpus.hpp"
#include "prefixrank/parallel.hpp"
#include "prefixrank/rng.hpp"

namespace prefixrank::bridge {
namespace {

using nlohmann::json;

json parse_body(std::string_view body, std::string_view what) {
  try {
    return json::parse(body);
  } catch (const json::parse_error& e) {
    throw BridgeError(BridgeError::Kind::parse,
                      "malformed JSON in " + std::string(what) + " at byte " + std::to_string(e.byte) + ": " + e.what(),
                      0, std::string(body));
  }
}

[[noreturn]] void schema_error(std::string_view what, const std::string& detail) {
  throw BridgeError(BridgeError::Kind::schema, std::string(what) + ": " + detail);
}

const json& require(const json& obj, const char* field, std::string_view what) {
  if (!obj.is_object()) schema_error(what, "expected a JSON object");
  const auto it = obj.find(field);
  if (it == obj.end()) schema_error(what, std::string("missing field '") + field + "'");
  return *it;
}

std::size_t require_count(const json& obj, const char* field, std::string_view what) {
  const auto& v = require(obj, field, what);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    schema_error(what, std::string("field '") + field + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string require_string(const json& obj, const char* field, std::string_view what) {
  const auto& v = require(obj, field, what);
  if (!v.is_string()) schema_error(what, std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

struct UrlParts {
  std::string host;  // scheme://host[:port]
  std::string path;  // "" or "/prefix"
};

UrlParts split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw BridgeError(BridgeError::Kind::validation, "base_url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  UrlParts parts;
  parts.host = url.substr(0, slash);
  if (slash != std::string::npos) {
    parts.path = url.substr(slash);
    while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
  }
  return parts;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

}  // namespace

BridgeError::BridgeError(Kind kind, const std::string& what, int status, std::string body)
    : Error(what), kind_(kind), status_(status), body_(std::move(body)) {}

Endpoint Endpoint::from_url(std::string base_url) {
  Endpoint e;
  e.base_url = std::move(base_url);
  if (const char* token = std::getenv("PREFIXRANK_BRIDGE_TOKEN"); token && *token) e.auth_token = token;
  return e;
}

void Endpoint::validate() const {
  if (base_url.empty()) throw BridgeError(BridgeError::Kind::validation, "bridge base_url is empty");
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0) {
    throw BridgeError(BridgeError::Kind::validation, "bridge base_url must start with http:// or https://");
  }
  if (timeout_ms <= 0) throw BridgeError(BridgeError::Kind::validation, "bridge timeout must be positive");
  if (max_retries < 0) throw BridgeError(BridgeError::Kind::validation, "bridge max_retries must be >= 0");
  if (backoff_ms < 0) throw BridgeError(BridgeError::Kind::validation, "bridge backoff must be >= 0");
  if (max_in_flight == 0) throw BridgeError(BridgeError::Kind::validation, "bridge max_in_flight must be >= 1");
}

void validate(const GenerateRequest& request) {
  if (request.num_samples == 0) throw BridgeError(BridgeError::Kind::validation, "num_samples must be >= 1");
  if (request.num_new_tokens == 0) throw BridgeError(BridgeError::Kind::validation, "num_new_tokens must be >= 1");
  try {
    request.strategy.validate();
  } catch (const Error& e) {
    throw BridgeError(BridgeError::Kind::validation, e.what());
  }
}

std::string strategy_kind_name(SamplingStrategy::Kind kind) {
  switch (kind) {
    case SamplingStrategy::Kind::greedy: return "greedy";
    case SamplingStrategy::Kind::ancestral: return "ancestral";
    case SamplingStrategy::Kind::nucleus: return "nucleus";
    case SamplingStrategy::Kind::top_k: return "top_k";
    case SamplingStrategy::Kind::typical: return "typical";
  }
  return "?";
}

SamplingStrategy::Kind parse_strategy_kind(std::string_view name) {
  if (name == "greedy") return SamplingStrategy::Kind::greedy;
  if (name == "ancestral") return SamplingStrategy::Kind::ancestral;
  if (name == "nucleus") return SamplingStrategy::Kind::nucleus;
  if (name == "top_k") return SamplingStrategy::Kind::top_k;
  if (name == "typical") return SamplingStrategy::Kind::typical;
  throw BridgeError(BridgeError::Kind::schema, "strategy.kind: unknown kind '" + std::string(name) + "'");
}

json to_json(const GenerateRequest& r) {
  return json{{"prefix", r.prefix},
              {"num_new_tokens", r.num_new_tokens},
              {"num_samples", r.num_samples},
              {"strategy", {{"kind", strategy_kind_name(r.strategy.kind)}, {"param", r.strategy.param}}},
              {"seed", r.seed}};
}

json to_json(const GenerateResponse& r) {
  json j{{"samples", r.samples}};
  if (r.seed_honored) j["seed_honored"] = *r.seed_honored;
  return j;
}

json to_json(const ScoreRequest& r) { return json{{"prefix", r.prefix}, {"continuation", r.continuation}}; }

json to_json(const ScoreResponse& r) { return json{{"logprob", r.logprob}, {"token_count", r.token_count}}; }

GenerateRequest parse_generate_request(std::string_view body) {
  constexpr std::string_view what = "generate request";
  const json j = parse_body(body, what);
  GenerateRequest r;
  r.prefix = require_string(j, "prefix", what);
  r.num_new_tokens = require_count(j, "num_new_tokens", what);
  r.num_samples = require_count(j, "num_samples", what);
  const auto& s = require(j, "strategy", what);
  const auto& kind = require(s, "kind", "generate request strategy");
  if (!kind.is_string()) schema_error(what, "field 'strategy.kind' must be a string");
  r.strategy.kind = parse_strategy_kind(kind.get<std::string>());
  const auto& param = require(s, "param", "generate request strategy");
  if (!param.is_number()) schema_error(what, "field 'strategy.param' must be a number");
  r.strategy.param = param.get<double>();
  const auto& seed = require(j, "seed", what);
  if (!seed.is_number_unsigned()) schema_error(what, "field 'seed' must be a non-negative integer");
  r.seed = seed.get<std::uint64_t>();
  return r;
}

ScoreRequest parse_score_request(std::string_view body) {
  constexpr std::string_view what = "score request";
  const json j = parse_body(body, what);
  return {require_string(j, "prefix", what), require_string(j, "continuation", what)};
}

GenerateResponse parse_generate_response(std::string_view body, std::size_t expected_samples) {
  constexpr std::string_view what = "generate response";
  const json j = parse_body(body, what);
  const auto& samples = require(j, "samples", what);
  if (!samples.is_array()) schema_error(what, "field 'samples' must be an array");
  if (samples.size() != expected_samples) {
    schema_error(what, "samples length: expected " + std::to_string(expected_samples) + ", got " +
                           std::to_string(samples.size()));
  }
  GenerateResponse r;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!samples[i].is_string()) schema_error(what, "samples[" + std::to_string(i) + "] must be a string");
    r.samples.push_back(samples[i].get<std::string>());
  }
  if (const auto it = j.find("seed_honored"); it != j.end()) {
    if (!it->is_boolean()) schema_error(what, "field 'seed_honored' must be a boolean");
    r.seed_honored = it->get<bool>();
  }
  return r;
}

ScoreResponse parse_score_response(std::string_view body, const ScoreRequest& request) {
  constexpr std::string_view what = "score response";
  const json j = parse_body(body, what);
  const auto& lp = require(j, "logprob", what);
  if (!lp.is_number()) schema_error(what, "field 'logprob' must be a number");
  ScoreResponse r;
  r.logprob = lp.get<double>();
  if (!std::isfinite(r.logprob)) schema_error(what, "field 'logprob' must be finite");
  r.token_count = require_count(j, "token_count", what);
  if (r.logprob > 0.0) r.warnings.push_back("logprob " + std::to_string(r.logprob) + " > 0 for a normalized model");
  if (request.continuation.empty() && r.logprob != 0.0) {
    r.warnings.push_back("empty continuation scored " + std::to_string(r.logprob) + ", expected 0");
  }
  return r;
}

BridgeClient::BridgeClient(Endpoint endpoint) : endpoint_(std::move(endpoint)) {
  endpoint_.validate();
  auto parts = split_url(endpoint_.base_url);
  host_ = std::move(parts.host);
  path_prefix_ = std::move(parts.path);
  in_flight_ = std::make_shared<std::counting_semaphore<>>(static_cast<std::ptrdiff_t>(endpoint_.max_in_flight));
}

std::string BridgeClient::post(const std::string& path, const std::string& body) const {
  in_flight_->acquire();
  struct Release {
    std::counting_semaphore<>& s;
    ~Release() { s.release(); }
  } release{*in_flight_};

  httplib::Client client(host_);
  const auto timeout = std::chrono::milliseconds(endpoint_.timeout_ms);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers;
  if (endpoint_.auth_token) headers.emplace("Authorization", "Bearer " + *endpoint_.auth_token);

  const std::string url = path_prefix_ + path;
  std::string last_error;
  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(static_cast<long long>(endpoint_.backoff_ms) << (attempt - 1)));
    }
    auto res = client.Post(url, headers, body, "application/json");
    if (!res) {
      last_error = "request to " + host_ + url + " failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return res->body;
    const std::string msg = "POST " + host_ + url + " returned HTTP " + std::to_string(res->status) + ": " + res->body;
    if (!retryable_status(res->status) || attempt == endpoint_.max_retries) {
      throw BridgeError(BridgeError::Kind::http_status, msg, res->status, res->body);
    }
    last_error = msg;
  }
  throw BridgeError(BridgeError::Kind::network,
                    last_error + " (after " + std::to_string(endpoint_.max_retries) + " retries)");
}

GenerateResponse BridgeClient::generate(const GenerateRequest& request) const {
  validate(request);
  return parse_generate_response(post("/generate", to_json(request).dump()), request.num_samples);
}

ScoreResponse BridgeClient::score(const ScoreRequest& request) const {
  return parse_score_response(post("/score", to_json(request).dump()), request);
}

GenerateResponse remote_generate(const Endpoint& endpoint, const GenerateRequest& request) {
  validate(request);
  return BridgeClient(endpoint).generate(request);
}

ScoreResponse remote_score(const Endpoint& endpoint, const ScoreRequest& request) {
  return BridgeClient(endpoint).score(request);
}

struct BridgeGenerator::WarningLog {
  std::mutex mutex;
  std::vector<std::string> entries;

  void add(const std::vector<std::string>& w) {
    if (w.empty()) return;
    std::lock_guard lock(mutex);
    entries.insert(entries.end(), w.begin(), w.end());
  }
};

BridgeGenerator::BridgeGenerator(Endpoint endpoint)
    : client_(std::move(endpoint)), warnings_(std::make_shared<WarningLog>()) {}

std::string BridgeGenerator::join(std::span<const Token> tokens) {
  std::string out;
  for (const auto& t : tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::vector<GeneratedSample> BridgeGenerator::generate(const GenerationRequest& request) const {
  std::vector<GeneratedSample> out(request.num_samples);
  const std::string prefix = join(request.context);
  const std::size_t jobs = std::min(request.num_samples, client_.endpoint().max_in_flight);
  parallel_for(request.num_samples, jobs, [&](std::size_t j) {
    GenerateRequest wire;
    wire.prefix = prefix;
    wire.num_new_tokens = request.num_new_tokens;
    wire.num_samples = 1;
    wire.strategy = request.strategy;
    wire.seed = combine_seed(combine_seed(request.seed, request.stream_base + j), request.counter_base);
    const auto response = client_.generate(wire);
    warnings_->add(response.warnings);
    any_response_ = true;
    if (response.seed_honored != true) attested_ = false;
    auto tokens = corpus::tokenize(response.samples[0]).tokens;
    out[j].finished = tokens.size() < request.num_new_tokens;
    if (tokens.size() > request.num_new_tokens) tokens.resize(request.num_new_tokens);
    out[j].tokens = std::move(tokens);
  });
  return out;
}

double BridgeGenerator::sequence_logprob(std::span<const Token> prefix, std::span<const Token> continuation) const {
  if (continuation.empty()) return 0.0;
  const auto response = client_.score({join(prefix), join(continuation)});
  warnings_->add(response.warnings);
  return response.logprob;
}

std::string BridgeGenerator::describe() const { return "bridge:" + client_.endpoint().base_url; }

bool BridgeGenerator::deterministic() const { return any_response_ && attested_; }

std::vector<std::string> BridgeGenerator::warnings() const {
  std::lock_guard lock(warnings_->mutex);
  return warnings_->entries;
}

}  // namespace prefixrank::bridge
