#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tadascope/feature.hpp"

namespace tadascope {

struct Prompt {
  BlockId block_id;
  std::vector<std::string> feature_lines;
  std::string rendered;
};

/// The fixed instruction text that opens every prompt.
std::string_view prompt_header();

/// Renders header, a blank line, then one "- " bullet per feature in the given order.
Prompt build_prompt(BlockId block_id, std::vector<std::string> feature_lines);
Prompt build_prompt(BlockId block_id, const std::vector<Feature>& features);

/// Recovers the bullet lines of a rendered prompt.
std::vector<std::string> prompt_feature_lines(std::string_view rendered);

struct RatingConfig {
  int threshold = 7;
  int max_retries = 3;  // total attempts per prompt
  std::chrono::milliseconds initial_backoff{1000};
  std::chrono::milliseconds request_timeout{60000};
  std::size_t max_in_flight = 4;

  /// Throws std::invalid_argument on out-of-range fields.
  void validate() const;
};

struct RatingRecord {
  BlockId block_id;
  int rating = 0;
  bool positive = false;
  std::string backend_id;
  std::string raw_response;
};

/// Thrown by backends for failures worth retrying (network, HTTP status, malformed envelope).
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Maps a rendered prompt to the model's raw text answer. Implementations must be thread-safe.
class RatingBackend {
 public:
  virtual ~RatingBackend() = default;
  virtual std::string id() const = 0;
  virtual std::string complete(const std::string& prompt) = 0;
};

/// Lone integer 0..10 after trimming, else the first in-range integer token.
/// Throws Error(UnparsableResponse).
int parse_rating(std::string_view text);

bool classify(int rating, const RatingConfig& config);

/// Persistent response cache: one JSON object per line, {"key": ..., "response": ...}.
class RatingCache {
 public:
  explicit RatingCache(std::filesystem::path path);

  static std::string key(std::string_view backend_id, std::string_view prompt);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& response);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, std::string> entries_;
};

/// Blocks without features are rated 0 without contacting the backend.
/// Throws Error(BackendUnavailable) or Error(UnparsableResponse) once attempts are exhausted.
RatingRecord rate(const Prompt& prompt, RatingBackend& backend, const RatingConfig& config,
                  RatingCache* cache = nullptr);

/// Rates prompts with up to max_in_flight concurrent requests; results are in input order.
std::vector<RatingRecord> rate_all(const std::vector<Prompt>& prompts, RatingBackend& backend,
                                   const RatingConfig& config, RatingCache* cache = nullptr);

/// Deterministic offline rater; see score_feature_line for the table.
class LocalRuleBackend final : public RatingBackend {
 public:
  std::string id() const override { return "local-rules/1"; }
  std::string complete(const std::string& prompt) override;
};

int score_feature_line(std::string_view line);
int local_rule_rating(const std::vector<std::string>& feature_lines);

/// Case-insensitive lexicon of analysis-environment names.
bool matches_tada_lexicon(std::string_view text);
/// Paths, registry keys, device names and WMI queries typical of sandbox artifact checks.
bool matches_artifact_pattern(std::string_view text);

struct RemoteBackendOptions {
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4-turbo";
  std::string api_key_env = "TADASCOPE_API_KEY";
  std::chrono::milliseconds timeout{60000};
};

/// OpenAI-compatible chat completion endpoint: POST {base_url}/chat/completions.
class RemoteChatBackend final : public RatingBackend {
 public:
  explicit RemoteChatBackend(RemoteBackendOptions options);
  std::string id() const override;
  std::string complete(const std::string& prompt) override;

  static std::string request_body(const std::string& model, const std::string& prompt);
  /// Extracts choices[0].message.content; throws TransportError on a malformed envelope.
  static std::string response_content(const std::string& body);

 private:
  RemoteBackendOptions options_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. "/v1"
};

}  // namespace tadascope
