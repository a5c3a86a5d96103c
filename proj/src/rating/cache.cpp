#include <fstream>

#include <json.hpp>

#include "tadascope/error.hpp"
#include "tadascope/hash.hpp"
#include "tadascope/rating.hpp"

namespace tadascope {

RatingCache::RatingCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto record = nlohmann::json::parse(line, nullptr, false);
    if (record.is_discarded() || !record.is_object()) continue;  // tolerate a torn final line
    auto key = record.find("key");
    auto response = record.find("response");
    if (key == record.end() || response == record.end() || !key->is_string() || !response->is_string()) continue;
    entries_[key->get<std::string>()] = response->get<std::string>();
  }
}

std::string RatingCache::key(std::string_view backend_id, std::string_view prompt) {
  std::string material(backend_id);
  material += '\n';
  material += prompt;
  return sha256_hex(material);
}

std::optional<std::string> RatingCache::get(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void RatingCache::put(const std::string& key, const std::string& response) {
  std::lock_guard lock(mutex_);
  entries_[key] = response;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw Error(ErrorCode::Io, "cannot append to rating cache " + path_.string());
  nlohmann::ordered_json record;
  record["key"] = key;
  record["response"] = response;
  out << record.dump() << '\n';
}

std::size_t RatingCache::size() const {
  std::lock_guard lock(mutex_);
  return entries_.size();
}

}  // namespace tadascope
