#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tadascope/image.hpp"

namespace tadascope {

enum class PackingVerdict { NotPacked, HeuristicPacked, KnownPacker };

std::string_view to_string(PackingVerdict verdict);

struct PackingAssessment {
  PackingVerdict verdict = PackingVerdict::NotPacked;
  std::optional<std::string> packer_name;  // set iff verdict == KnownPacker
  std::size_t library_count = 0;
  std::size_t function_count = 0;
};

struct KnownPackerSection {
  std::string section_name;
  std::string packer_name;
};

struct PackerHeuristicConfig {
  // An image importing fewer libraries or fewer functions than these is treated as packed.
  std::size_t min_libraries = 5;
  std::size_t min_functions = 15;
  std::vector<KnownPackerSection> known_packer_sections = {
      {"UPX0", "UPX"}, {"UPX1", "UPX"}, {".aspack", "ASPack"}, {".themida", "Themida"}};
};

/// Total function; counts are populated for every verdict.
PackingAssessment detect_packing(const BinaryImage& image, const PackerHeuristicConfig& config = {});

}  // namespace tadascope
