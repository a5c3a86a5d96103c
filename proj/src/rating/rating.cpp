#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <thread>

#include "tadascope/error.hpp"
#include "tadascope/rating.hpp"

namespace tadascope {

void RatingConfig::validate() const {
  if (threshold < 0 || threshold > 10) throw std::invalid_argument("threshold must be within 0..10");
  if (max_retries < 1) throw std::invalid_argument("max_retries must be >= 1");
  if (max_in_flight < 1) throw std::invalid_argument("max_in_flight must be >= 1");
  if (initial_backoff.count() < 0) throw std::invalid_argument("initial_backoff must be non-negative");
}

int parse_rating(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto is_digit = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; };
  while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
  while (!text.empty() && is_space(text.back())) text.remove_suffix(1);

  for (std::size_t i = 0; i < text.size();) {
    if (!is_digit(text[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && is_digit(text[j])) ++j;
    bool negative = i > 0 && text[i - 1] == '-';
    std::string_view token = text.substr(i, j - i);
    if (!negative && token.size() <= 2) {
      int value = std::stoi(std::string(token));
      if (value >= 0 && value <= 10) return value;
    }
    i = j;
  }
  throw Error(ErrorCode::UnparsableResponse, "no rating between 0 and 10 in response '" + std::string(text) + "'");
}

bool classify(int rating, const RatingConfig& config) { return rating >= config.threshold; }

RatingRecord rate(const Prompt& prompt, RatingBackend& backend, const RatingConfig& config, RatingCache* cache) {
  RatingRecord record;
  record.block_id = prompt.block_id;
  record.backend_id = backend.id();
  if (prompt.feature_lines.empty()) {
    record.rating = 0;
    record.positive = classify(0, config);
    return record;
  }

  std::string key;
  if (cache != nullptr) {
    key = RatingCache::key(record.backend_id, prompt.rendered);
    if (auto hit = cache->get(key)) {
      try {
        record.rating = parse_rating(*hit);
        record.raw_response = *hit;
        record.positive = classify(record.rating, config);
        return record;
      } catch (const Error&) {
        // Stale or corrupt entry: ask the backend again.
      }
    }
  }

  std::string last_error;
  bool last_was_transport = false;
  auto backoff = config.initial_backoff;
  for (int attempt = 1; attempt <= config.max_retries; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    try {
      std::string response = backend.complete(prompt.rendered);
      record.rating = parse_rating(response);
      record.raw_response = std::move(response);
      record.positive = classify(record.rating, config);
      if (cache != nullptr) cache->put(key, record.raw_response);
      return record;
    } catch (const TransportError& e) {
      last_error = e.what();
      last_was_transport = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::UnparsableResponse) throw;
      last_error = e.what();
      last_was_transport = false;
    }
  }
  if (last_was_transport) {
    throw Error(ErrorCode::BackendUnavailable, backend.id() + " failed after " + std::to_string(config.max_retries) +
                                                   " attempts: " + last_error);
  }
  throw Error(ErrorCode::UnparsableResponse, last_error);
}

std::vector<RatingRecord> rate_all(const std::vector<Prompt>& prompts, RatingBackend& backend,
                                   const RatingConfig& config, RatingCache* cache) {
  config.validate();
  std::vector<RatingRecord> results(prompts.size());
  std::vector<std::exception_ptr> errors(prompts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  auto worker = [&] {
    while (!failed.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= prompts.size()) return;
      try {
        results[i] = rate(prompts[i], backend, config, cache);
      } catch (...) {
        errors[i] = std::current_exception();
        failed.store(true);
      }
    }
  };
  std::size_t pending = std::count_if(prompts.begin(), prompts.end(),
                                      [](const Prompt& p) { return !p.feature_lines.empty(); });
  std::size_t threads = std::min(config.max_in_flight, std::max<std::size_t>(pending, 1));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return results;
}

}  // namespace tadascope
