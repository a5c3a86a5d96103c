#include <fstream>
#include <sstream>

#include "tadascope/api_features.hpp"
#include "tadascope/error.hpp"

namespace tadascope {

namespace detail {
extern const std::string_view kBuiltinApiSignatures;
}

ApiKnowledgeBase ApiKnowledgeBase::parse(std::string_view text) {
  ApiKnowledgeBase kb;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    ApiSignature sig;
    std::string count;
    if (!(fields >> sig.name)) continue;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorCode::MalformedManifest, "api signatures line " + std::to_string(line_no) + ": " + why);
    };
    if (!(fields >> sig.library >> count)) fail("expected <name> <library> <arg_count>");
    try {
      std::size_t used = 0;
      long n = std::stol(count, &used);
      if (used != count.size() || n < 0 || n > 64) fail("bad argument count '" + count + "'");
      sig.arg_count = static_cast<std::size_t>(n);
    } catch (const std::logic_error&) {
      fail("bad argument count '" + count + "'");
    }
    std::string spec;
    while (fields >> spec) {
      auto colon = spec.find(':');
      if (colon == std::string::npos) fail("string argument '" + spec + "' must be <index>:<ansi|wide>");
      std::size_t index = 0;
      try {
        std::size_t used = 0;
        index = std::stoul(spec.substr(0, colon), &used);
        if (used != colon) fail("bad string argument index in '" + spec + "'");
      } catch (const std::logic_error&) {
        fail("bad string argument index in '" + spec + "'");
      }
      if (index >= sig.arg_count) fail("string argument index " + std::to_string(index) + " out of range");
      std::string width = spec.substr(colon + 1);
      if (width == "ansi") {
        sig.string_args[index] = StringWidth::Ansi;
      } else if (width == "wide") {
        sig.string_args[index] = StringWidth::Wide;
      } else {
        fail("string width must be ansi or wide, got '" + width + "'");
      }
    }
    if (kb.signatures_.count(sig.name) != 0) fail("duplicate signature for '" + sig.name + "'");
    kb.signatures_.emplace(sig.name, std::move(sig));
  }
  return kb;
}

ApiKnowledgeBase ApiKnowledgeBase::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open api signature file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

const ApiKnowledgeBase& ApiKnowledgeBase::builtin() {
  static const ApiKnowledgeBase kb = parse(detail::kBuiltinApiSignatures);
  return kb;
}

void ApiKnowledgeBase::merge(const ApiKnowledgeBase& other) {
  for (const auto& [name, sig] : other.signatures_) signatures_[name] = sig;
}

const ApiSignature* ApiKnowledgeBase::find(std::string_view name) const {
  auto it = signatures_.find(name);
  return it == signatures_.end() ? nullptr : &it->second;
}

}  // namespace tadascope
