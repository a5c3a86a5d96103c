#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "tadascope/cfg.hpp"

namespace tadascope {

enum class FeatureKind { UncommonIns, SegmentAccess, StringRef, ApiCall };

std::string_view to_string(FeatureKind kind);

struct Feature {
  FeatureKind kind = FeatureKind::UncommonIns;
  std::string text;
  BlockId block_id;
  Address source_address = 0;

  bool operator==(const Feature&) const = default;
};

/// Orders assembly features first, then strings, then API calls; each group by source address.
void sort_for_prompt(std::vector<Feature>& features);

/// Escapes embedded double quotes with a backslash.
std::string quote(std::string_view text);

}  // namespace tadascope
