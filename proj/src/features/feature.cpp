#include "tadascope/feature.hpp"

#include <algorithm>

namespace tadascope {

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::UncommonIns: return "UncommonIns";
    case FeatureKind::SegmentAccess: return "SegmentAccess";
    case FeatureKind::StringRef: return "StringRef";
    case FeatureKind::ApiCall: return "ApiCall";
  }
  return "?";
}

namespace {
int group(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::UncommonIns:
    case FeatureKind::SegmentAccess: return 0;
    case FeatureKind::StringRef: return 1;
    case FeatureKind::ApiCall: return 2;
  }
  return 3;
}
}  // namespace

void sort_for_prompt(std::vector<Feature>& features) {
  std::stable_sort(features.begin(), features.end(), [](const Feature& a, const Feature& b) {
    int ga = group(a.kind), gb = group(b.kind);
    if (ga != gb) return ga < gb;
    return a.source_address < b.source_address;
  });
}

std::string quote(std::string_view text) {
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '\\';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace tadascope
