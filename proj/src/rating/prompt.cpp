#include "tadascope/rating.hpp"

namespace tadascope {

namespace {

constexpr std::string_view kHeader =
    "I want you to help me identify whether a basic block in a binary program is related to anti-dynamic analysis "
    "techniques, such as detecting a debugger, sandbox and/or VM.\n"
    "I will provide some static analysis results of the basic block, including 1) Called APIs (API), 2) Static "
    "Strings referred, 3) Uncommon instructions (INS), and 4) Segment Register Reference (SegReg)\n"
    "Rate from 0 to 10, how likely the code is related to anti-analysis.\n"
    "\n"
    "I will use your answer to decide whether to put a breakpoint at the basic block, so try to avoid false "
    "negatives, and DO NOT consider anti-static analysis techniques.\n"
    "Please only give the rating number, no explanation";

constexpr std::string_view kBullet = "- ";

}  // namespace

std::string_view prompt_header() { return kHeader; }

Prompt build_prompt(BlockId block_id, std::vector<std::string> feature_lines) {
  Prompt p;
  p.block_id = block_id;
  p.rendered = std::string(kHeader) + "\n\n";
  for (const auto& line : feature_lines) {
    p.rendered += kBullet;
    p.rendered += line;
    p.rendered += '\n';
  }
  p.feature_lines = std::move(feature_lines);
  return p;
}

Prompt build_prompt(BlockId block_id, const std::vector<Feature>& features) {
  std::vector<std::string> lines;
  lines.reserve(features.size());
  for (const auto& f : features) lines.push_back(f.text);
  return build_prompt(block_id, std::move(lines));
}

std::vector<std::string> prompt_feature_lines(std::string_view rendered) {
  std::vector<std::string> out;
  std::string_view body = rendered;
  if (body.substr(0, kHeader.size()) == kHeader) body.remove_prefix(kHeader.size());
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::size_t end = body.find('\n', pos);
    if (end == std::string_view::npos) end = body.size();
    std::string_view line = body.substr(pos, end - pos);
    if (line.substr(0, kBullet.size()) == kBullet) out.emplace_back(line.substr(kBullet.size()));
    pos = end + 1;
  }
  return out;
}

}  // namespace tadascope
