#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "tadascope/error.hpp"
#include "tadascope/rating.hpp"

namespace tadascope {

RemoteChatBackend::RemoteChatBackend(RemoteBackendOptions options) : options_(std::move(options)) {
  std::string url = options_.base_url;
  auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::BackendUnavailable, "remote backend URL must include a scheme: " + url);
  }
  auto path_start = url.find('/', scheme_end + 3);
  origin_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string RemoteChatBackend::id() const { return "remote:" + options_.model; }

std::string RemoteChatBackend::request_body(const std::string& model, const std::string& prompt) {
  nlohmann::ordered_json body;
  body["model"] = model;
  body["temperature"] = 0;
  body["messages"] = nlohmann::ordered_json::array({{{"role", "user"}, {"content", prompt}}});
  return body.dump();
}

std::string RemoteChatBackend::response_content(const std::string& body) {
  auto json = nlohmann::json::parse(body, nullptr, false);
  if (json.is_discarded()) throw TransportError("response is not JSON");
  try {
    return json.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw TransportError("response lacks choices[0].message.content");
  }
}

std::string RemoteChatBackend::complete(const std::string& prompt) {
  httplib::Client client(origin_);
  auto seconds = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
  auto micros = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key != nullptr && *key != '\0') {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto result =
      client.Post(path_prefix_ + "/chat/completions", headers, request_body(options_.model, prompt), "application/json");
  if (!result) throw TransportError("request failed: " + httplib::to_string(result.error()));
  if (result->status != 200) throw TransportError("HTTP status " + std::to_string(result->status));
  return response_content(result->body);
}

}  // namespace tadascope
