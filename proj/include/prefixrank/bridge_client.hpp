#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "prefixrank/generator.hpp"
#include "prefixrank/sampling.hpp"

namespace prefixrank::bridge {

struct Endpoint {
  /// http://host[:port][/path-prefix]
  std::string base_url;
  int timeout_ms = 30000;
  int max_retries = 3;
  /// First retry waits this long; each later retry doubles it.
  int backoff_ms = 100;
  std::optional<std::string> auth_token;
  /// Concurrent requests allowed per client.
  std::size_t max_in_flight = 8;

  void validate() const;

  /// Endpoint for `base_url` with defaults; the bearer token, if any, comes
  /// from the PREFIXRANK_BRIDGE_TOKEN environment variable.
  static Endpoint from_url(std::string base_url);
};

class BridgeError : public Error {
 public:
  enum class Kind { validation, schema, parse, http_status, network };
  BridgeError(Kind kind, const std::string& what, int status = 0, std::string body = {});
  Kind kind() const noexcept { return kind_; }
  /// HTTP status for http_status errors, 0 otherwise.
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  Kind kind_;
  int status_;
  std::string body_;
};

struct GenerateRequest {
  std::string prefix;
  std::size_t num_new_tokens = 1;
  std::size_t num_samples = 1;
  SamplingStrategy strategy = SamplingStrategy::ancestral();
  std::uint64_t seed = 0;
};

struct GenerateResponse {
  std::vector<std::string> samples;
  /// Present when the server states whether it honored `seed`.
  std::optional<bool> seed_honored;
  std::vector<std::string> warnings;
};

struct ScoreRequest {
  std::string prefix;
  std::string continuation;
};

struct ScoreResponse {
  double logprob = 0.0;
  std::size_t token_count = 0;
  std::vector<std::string> warnings;
};

/// Throws BridgeError(validation) for requests that must not be sent.
void validate(const GenerateRequest& request);

std::string strategy_kind_name(SamplingStrategy::Kind kind);
SamplingStrategy::Kind parse_strategy_kind(std::string_view name);

nlohmann::json to_json(const GenerateRequest& request);
nlohmann::json to_json(const GenerateResponse& response);
nlohmann::json to_json(const ScoreRequest& request);
nlohmann::json to_json(const ScoreResponse& response);

/// Schema checks report the offending field; malformed JSON reports the byte offset.
GenerateRequest parse_generate_request(std::string_view body);
ScoreRequest parse_score_request(std::string_view body);
GenerateResponse parse_generate_response(std::string_view body, std::size_t expected_samples);
/// Warns (does not fail) on logprob > 0 and on a nonzero logprob for an empty continuation.
ScoreResponse parse_score_response(std::string_view body, const ScoreRequest& request);

/// HTTP client for POST /generate and POST /score. Retries network failures,
/// 429 and 5xx with exponential backoff; other non-2xx statuses fail at once.
class BridgeClient {
 public:
  explicit BridgeClient(Endpoint endpoint);

  GenerateResponse generate(const GenerateRequest& request) const;
  ScoreResponse score(const ScoreRequest& request) const;
  const Endpoint& endpoint() const noexcept { return endpoint_; }

 private:
  std::string post(const std::string& path, const std::string& body) const;

  Endpoint endpoint_;
  std::string host_;
  std::string path_prefix_;
  std::shared_ptr<std::counting_semaphore<>> in_flight_;
};

GenerateResponse remote_generate(const Endpoint& endpoint, const GenerateRequest& request);
ScoreResponse remote_score(const Endpoint& endpoint, const ScoreRequest& request);

/// Generator and likelihood model served over the bridge.
///
/// Token sequences are joined with single spaces for the wire; returned text
/// is split with corpus::tokenize and cut to num_new_tokens. Sample j of a
/// request is fetched as its own single-sample call whose seed is
/// combine_seed(combine_seed(seed, stream_base + j), counter_base), so the
/// per-hypothesis seed assignment never depends on scheduling or retries.
/// deterministic() is true only while every response so far carried
/// seed_honored = true.
class BridgeGenerator final : public Generator, public LikelihoodModel {
 public:
  explicit BridgeGenerator(Endpoint endpoint);

  std::vector<GeneratedSample> generate(const GenerationRequest& request) const override;
  double sequence_logprob(std::span<const Token> prefix, std::span<const Token> continuation) const override;
  std::string describe() const override;
  bool deterministic() const override;
  /// Warnings surfaced by responses so far.
  std::vector<std::string> warnings() const;

  static std::string join(std::span<const Token> tokens);

 private:
  BridgeClient client_;
  mutable std::atomic<bool> attested_{true};
  mutable std::atomic<bool> any_response_{false};
  struct WarningLog;
  std::shared_ptr<WarningLog> warnings_;
};

}  // namespace prefixrank::bridge
